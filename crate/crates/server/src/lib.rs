//! Hosts master workbooks for remote users and serves each session only
//! what its access class allows.

pub mod auth;
pub mod net;
pub mod protocol;
pub mod service;
pub mod store;

use thiserror::Error;

pub use net::{serve, serve_service, Client, ServerConfig, ServerHandle};
pub use service::Service;
pub use store::Store;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {0}: {1}")]
    Bind(String, std::io::Error),
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error("bad users file: {0}")]
    Users(String),
    #[error("invalid workbook id `{0}`")]
    InvalidId(String),
    #[error(transparent)]
    Io(std::io::Error),
}

impl ServerError {
    pub fn code(&self) -> &'static str {
        match self {
            ServerError::Bind(..) => "BindFailure",
            ServerError::CorruptStore(_) => "CorruptStore",
            ServerError::Users(_) => "InvalidInput",
            ServerError::InvalidId(_) => "InvalidInput",
            ServerError::Io(_) => "StoreFailure",
        }
    }
}

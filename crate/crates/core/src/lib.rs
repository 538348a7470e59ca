//! Workbook model, formula engine, protection and sharing semantics.

pub mod access;
pub mod address;
pub mod audit;
pub mod engine;
pub mod formula;
pub mod passwords;
pub mod protection;
pub mod pws;
pub mod value;
pub mod workbook;

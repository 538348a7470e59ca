//! TCP transport: one thread per connection, frames in and out in order.

use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use pws_core::pws::parse_users;
use serde_json::Value;

use crate::protocol::{read_frame, write_frame, Failure};
use crate::service::{Service, DEFAULT_SESSION_TTL};
use crate::store::Store;
use crate::ServerError;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    pub store: PathBuf,
    pub users: PathBuf,
    pub session_ttl: Duration,
}

impl ServerConfig {
    pub fn new(bind: impl Into<String>, store: impl Into<PathBuf>, users: impl Into<PathBuf>) -> Self {
        Self {
            bind: bind.into(),
            store: store.into(),
            users: users.into(),
            session_ttl: DEFAULT_SESSION_TTL,
        }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    service: Arc<Service>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Stops accepting connections. Open connections finish on their own.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocked accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

/// Loads the users file and store, binds and starts accepting.
pub fn serve(config: &ServerConfig) -> Result<ServerHandle, ServerError> {
    let users_text = std::fs::read_to_string(&config.users)
        .map_err(|e| ServerError::Users(format!("{}: {e}", config.users.display())))?;
    let users = parse_users(&users_text).map_err(|e| ServerError::Users(format!("{}: {e}", config.users.display())))?;
    let store = Store::open(&config.store)?;
    let service = Service::open(store, users, config.session_ttl)?;
    serve_service(Arc::new(service), &config.bind)
}

pub fn serve_service(service: Arc<Service>, bind: &str) -> Result<ServerHandle, ServerError> {
    let listener = TcpListener::bind(bind).map_err(|e| ServerError::Bind(bind.to_string(), e))?;
    let addr = listener.local_addr().map_err(|e| ServerError::Bind(bind.to_string(), e))?;
    let stop = Arc::new(AtomicBool::new(false));
    let accept = {
        let stop = stop.clone();
        let service = service.clone();
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(conn) = conn else { continue };
                let service = service.clone();
                std::thread::spawn(move || {
                    let _ = connection(&service, conn);
                });
            }
        })
    };
    Ok(ServerHandle {
        addr,
        stop,
        accept: Some(accept),
        service,
    })
}

fn connection(service: &Service, conn: TcpStream) -> io::Result<()> {
    conn.set_nodelay(true)?;
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut writer = BufWriter::new(conn);
    loop {
        match read_frame(&mut reader) {
            Ok(Some(body)) => write_frame(&mut writer, &service.handle(&body))?,
            Ok(None) => return Ok(()),
            Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                let reply = Failure::new("BadRequest", e.to_string()).to_json();
                write_frame(&mut writer, &serde_json::to_vec(&reply).expect("json serializes"))?;
                return Ok(());
            }
            Err(e) => return Err(e),
        }
    }
}

/// Blocking client, one request in flight.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let conn = TcpStream::connect(addr)?;
        conn.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(conn.try_clone()?),
            writer: BufWriter::new(conn),
        })
    }

    /// Sends a raw frame body and returns the raw response body.
    pub fn send_raw(&mut self, body: &[u8]) -> io::Result<Vec<u8>> {
        write_frame(&mut self.writer, body)?;
        read_frame(&mut self.reader)?.ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed"))
    }

    pub fn request(&mut self, req: &Value) -> io::Result<Value> {
        let body = self.send_raw(&serde_json::to_vec(req).expect("json serializes"))?;
        serde_json::from_slice(&body).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

//! Message types and framing. Every frame is a 4-byte big-endian length
//! followed by that many bytes of UTF-8 JSON.

use std::io::{self, Read, Write};

use pws_core::access::Role;
use serde::Deserialize;
use serde_json::{json, Value};

pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Login {
        user: String,
        password: String,
        workbook: String,
    },
    GetView {
        token: String,
        #[serde(default)]
        since: Option<u64>,
    },
    Edit {
        token: String,
        addr: String,
        input: String,
    },
    Copy {
        token: String,
        rect: String,
    },
    Export {
        token: String,
    },
    Grant {
        token: String,
        user: String,
        role: Role,
    },
    Revoke {
        token: String,
        user: String,
    },
    Publish {
        token: String,
        #[serde(default)]
        force: bool,
        /// A full `.pws` document; the live workbook when absent.
        #[serde(default)]
        document: Option<Value>,
    },
    Audit {
        token: String,
    },
}

/// A failed request: stable code plus a human-readable message.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: &'static str,
    pub message: String,
    pub revision: Option<u64>,
    pub extra: Option<(&'static str, Value)>,
}

impl Failure {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            revision: None,
            extra: None,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({"ok": false, "error": self.code, "message": self.message});
        if let Some(r) = self.revision {
            v["revision"] = json!(r);
        }
        if let Some((k, x)) = &self.extra {
            v[*k] = x.clone();
        }
        v
    }
}

/// `{"ok":true,"revision":N}` merged with `fields`.
pub fn success(revision: u64, fields: Value) -> Value {
    let mut v = json!({"ok": true, "revision": revision});
    if let Value::Object(map) = fields {
        for (k, x) in map {
            v[k] = x;
        }
    }
    v
}

/// Reads one frame; `None` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn write_frame(w: &mut impl Write, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len())
        .ok()
        .filter(|n| *n as usize <= MAX_FRAME)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

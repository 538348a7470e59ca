//! Login accounts, failure throttling and session tokens.

use std::collections::{HashMap, VecDeque};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use pws_core::passwords::OpenFilePasswordRecord;
use pws_core::pws::UserRecord;
use rand::RngCore;

pub const MAX_FAILURES: usize = 5;
pub const FAILURE_WINDOW: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoginError {
    BadCredentials,
    Throttled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionEntry {
    pub user: String,
    pub workbook: String,
    expires: Instant,
}

pub struct Accounts {
    users: HashMap<String, OpenFilePasswordRecord>,
    /// Verified for unknown users so both paths cost one key derivation.
    dummy: OnceLock<OpenFilePasswordRecord>,
    failures: Mutex<HashMap<String, VecDeque<Instant>>>,
    sessions: Mutex<HashMap<String, SessionEntry>>,
    ttl: Duration,
}

impl Accounts {
    pub fn new(users: Vec<UserRecord>, ttl: Duration) -> Self {
        Self {
            users: users.into_iter().map(|u| (u.user, u.password)).collect(),
            dummy: OnceLock::new(),
            failures: Mutex::default(),
            sessions: Mutex::default(),
            ttl,
        }
    }

    /// Checks a password. After `MAX_FAILURES` failures within
    /// `FAILURE_WINDOW` further attempts for that user are refused unchecked.
    pub fn verify(&self, user: &str, password: &str) -> Result<(), LoginError> {
        let now = Instant::now();
        {
            let mut failures = self.failures.lock().expect("failures lock");
            let recent = failures.entry(user.to_string()).or_default();
            while recent.front().is_some_and(|t| now.duration_since(*t) >= FAILURE_WINDOW) {
                recent.pop_front();
            }
            if recent.len() >= MAX_FAILURES {
                return Err(LoginError::Throttled);
            }
        }
        let ok = match self.users.get(user) {
            Some(record) => record.verify(password),
            None => {
                self.dummy
                    .get_or_init(|| OpenFilePasswordRecord::new("unknown user"))
                    .verify(password);
                false
            }
        };
        if ok {
            return Ok(());
        }
        let mut failures = self.failures.lock().expect("failures lock");
        failures.entry(user.to_string()).or_default().push_back(now);
        Err(LoginError::BadCredentials)
    }

    /// A fresh 128-bit token for `user` on `workbook`.
    pub fn open_session(&self, user: &str, workbook: &str) -> String {
        let mut bytes = [0u8; 16];
        rand::rng().fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        let entry = SessionEntry {
            user: user.to_string(),
            workbook: workbook.to_string(),
            expires: Instant::now() + self.ttl,
        };
        self.sessions.lock().expect("sessions lock").insert(token.clone(), entry);
        token
    }

    /// The live session for `token`; expired sessions are dropped.
    pub fn session(&self, token: &str) -> Option<SessionEntry> {
        let mut sessions = self.sessions.lock().expect("sessions lock");
        let entry = sessions.get(token)?;
        if Instant::now() >= entry.expires {
            sessions.remove(token);
            return None;
        }
        Some(entry.clone())
    }
}

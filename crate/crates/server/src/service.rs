//! Request dispatch over the hosted workbooks.
//!
//! Each workbook has one writer lock; every mutation takes it, persists the
//! next revision and then swaps in a new read snapshot, so mutations of one
//! workbook form a single total order. Reads never take the writer lock and
//! only ever see committed snapshots.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use pws_core::access::{
    apply_edit, copy_view, export_local, render_view, session_role, AccessError, MasterStore, Role, Session,
    SharingAcl,
};
use pws_core::address::{CellAddress, Rect};
use pws_core::audit::{audit_protection, passes, Finding};
use pws_core::engine::{recalculate, Values};
use pws_core::pws::{Document, UserRecord};
use pws_core::workbook::Workbook;
use serde_json::{json, Value};

use crate::auth::{Accounts, LoginError, SessionEntry};
use crate::protocol::{success, Failure, Request};
use crate::store::{valid_id, Store};
use crate::ServerError;

pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(8 * 60 * 60);

/// A committed revision, shared with readers.
#[derive(Debug)]
pub struct Snapshot {
    pub revision: u64,
    pub version: u64,
    pub workbook: Workbook,
    pub acl: SharingAcl,
    pub values: Values,
}

struct Writer {
    master: MasterStore,
    revision: u64,
}

pub struct Hosted {
    id: String,
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<Snapshot>>,
}

fn snapshot_of(w: &Writer) -> Arc<Snapshot> {
    let workbook = w.master.current().clone();
    Arc::new(Snapshot {
        revision: w.revision,
        version: w.master.version(),
        values: recalculate(&workbook),
        workbook,
        acl: w.master.acl().clone(),
    })
}

impl Hosted {
    fn new(id: String, master: MasterStore, revision: u64) -> Self {
        let writer = Writer { master, revision };
        let snapshot = RwLock::new(snapshot_of(&writer));
        Self {
            id,
            writer: Mutex::new(writer),
            snapshot,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Every retained version, oldest first.
    pub fn versions(&self) -> Vec<Workbook> {
        self.writer.lock().expect("writer lock").master.versions().to_vec()
    }
}

pub struct Service {
    hosted: BTreeMap<String, Arc<Hosted>>,
    accounts: Accounts,
    store: Option<Store>,
}

fn access_failure(e: AccessError) -> Failure {
    let mut f = Failure::new(e.code(), e.to_string());
    if let AccessError::AuditFailed(findings) = &e {
        f.extra = Some(("findings", findings.iter().map(Finding::to_json).collect()));
    }
    f
}

fn address_failure(text: &str, e: impl std::fmt::Display) -> Failure {
    Failure::new("UnknownAddress", format!("`{text}`: {e}"))
}

fn parse_addr(wb: &Workbook, text: &str) -> Result<CellAddress, Failure> {
    let first = wb.sheets().first().map(|s| s.name().to_string()).unwrap_or_default();
    CellAddress::parse_with_default(text, &first).map_err(|e| address_failure(text, e))
}

impl Service {
    /// A service without persistence; workbooks are added with `host`.
    pub fn new(users: Vec<UserRecord>, session_ttl: Duration) -> Self {
        Self {
            hosted: BTreeMap::new(),
            accounts: Accounts::new(users, session_ttl),
            store: None,
        }
    }

    /// A service over every workbook in `store`.
    pub fn open(store: Store, users: Vec<UserRecord>, session_ttl: Duration) -> Result<Self, ServerError> {
        let mut hosted = BTreeMap::new();
        for id in store.ids()? {
            let loaded = store.load(&id)?;
            let master = MasterStore::from_versions(loaded.versions, loaded.acl)
                .ok_or_else(|| ServerError::CorruptStore(format!("{id}: no versions")))?;
            hosted.insert(id.clone(), Arc::new(Hosted::new(id, master, loaded.revision)));
        }
        Ok(Self {
            hosted,
            accounts: Accounts::new(users, session_ttl),
            store: Some(store),
        })
    }

    /// Adds a workbook at revision 0, persisting it when the service has a
    /// store.
    pub fn host(&mut self, id: &str, workbook: Workbook, acl: SharingAcl) -> Result<(), ServerError> {
        if !valid_id(id) || self.hosted.contains_key(id) {
            return Err(ServerError::InvalidId(id.to_string()));
        }
        if let Some(store) = &self.store {
            let doc = Document {
                workbook: workbook.clone(),
                acl: Some(acl.clone()),
            };
            store.commit(id, 0, 1, &doc).map_err(ServerError::Io)?;
        }
        let hosted = Hosted::new(id.to_string(), MasterStore::new(workbook, acl), 0);
        self.hosted.insert(id.to_string(), Arc::new(hosted));
        Ok(())
    }

    pub fn hosted(&self, id: &str) -> Option<Arc<Hosted>> {
        self.hosted.get(id).cloned()
    }

    /// Opens a session without a password check, for callers that
    /// authenticate users themselves.
    pub fn issue_session(&self, user: &str, workbook: &str) -> Option<String> {
        self.hosted
            .contains_key(workbook)
            .then(|| self.accounts.open_session(user, workbook))
    }

    /// Handles one frame body and returns the response body.
    pub fn handle(&self, body: &[u8]) -> Vec<u8> {
        let response = match serde_json::from_slice::<Request>(body) {
            Ok(req) => self.handle_request(req),
            Err(e) => Failure::new("BadRequest", e.to_string()).to_json(),
        };
        serde_json::to_vec(&response).expect("json serializes")
    }

    pub fn handle_request(&self, req: Request) -> Value {
        self.dispatch(req).unwrap_or_else(|f| f.to_json())
    }

    fn resolve(&self, token: &str) -> Result<(SessionEntry, Arc<Hosted>), Failure> {
        let entry = self
            .accounts
            .session(token)
            .ok_or_else(|| Failure::new("NotAuthenticated", "unknown or expired session"))?;
        let hosted = self
            .hosted
            .get(&entry.workbook)
            .cloned()
            .ok_or_else(|| Failure::new("UnknownWorkbook", "workbook is no longer hosted"))?;
        Ok((entry, hosted))
    }

    fn dispatch(&self, req: Request) -> Result<Value, Failure> {
        let token = match &req {
            Request::Login {
                user,
                password,
                workbook,
            } => return self.login(user, password, workbook),
            Request::GetView { token, .. }
            | Request::Edit { token, .. }
            | Request::Copy { token, .. }
            | Request::Export { token }
            | Request::Grant { token, .. }
            | Request::Revoke { token, .. }
            | Request::Publish { token, .. }
            | Request::Audit { token } => token.clone(),
        };
        let (entry, hosted) = self.resolve(&token)?;
        let session = Session::authenticated(entry.user);
        match req {
            Request::Login { .. } => unreachable!("handled above"),
            Request::GetView { since, .. } => read(&hosted, |snap| {
                let view = render_view(&snap.workbook, &snap.values, &snap.acl, &session, snap.version)
                    .map_err(access_failure)?;
                if since == Some(snap.revision) {
                    return Ok(json!({"unchanged": true}));
                }
                Ok(json!({ "view": view }))
            }),
            Request::Copy { rect, .. } => read(&hosted, |snap| {
                session_role(&snap.acl, &session).map_err(access_failure)?;
                let first = snap.workbook.sheets().first().map(|s| s.name().to_string()).unwrap_or_default();
                let r = Rect::parse_with_default(&rect, &first).map_err(|e| address_failure(&rect, e))?;
                let cells = copy_view(&snap.workbook, &snap.values, &snap.acl, &session, &r).map_err(access_failure)?;
                let cells: Vec<Value> = cells
                    .into_iter()
                    .map(|(a, text)| json!({"addr": a.to_string(), "text": text}))
                    .collect();
                Ok(json!({ "cells": cells }))
            }),
            Request::Export { .. } => read(&hosted, |snap| {
                let doc = export_local(&snap.workbook, &snap.values, &snap.acl, &session).map_err(access_failure)?;
                Ok(json!({ "document": doc.to_value() }))
            }),
            Request::Audit { .. } => read(&hosted, |snap| {
                snap.acl.require_owner(&session).map_err(access_failure)?;
                let findings = audit_protection(&snap.workbook);
                Ok(json!({
                    "pass": passes(&findings),
                    "findings": findings.iter().map(Finding::to_json).collect::<Vec<_>>(),
                }))
            }),
            Request::Edit { addr, input, .. } => self.write(&hosted, |w| {
                let addr = parse_addr(w.master.current(), &addr)?;
                let mut wb = w.master.current().clone();
                let deltas = apply_edit(&mut wb, w.master.acl(), &session, &addr, &input).map_err(access_failure)?;
                let deltas: Vec<Value> = deltas
                    .into_iter()
                    .map(|(a, display)| json!({"addr": a.to_string(), "display": display}))
                    .collect();
                Ok((Change::Live(wb), json!({ "deltas": deltas })))
            }),
            Request::Grant { user, role, .. } => self.write(&hosted, |w| {
                let mut acl = w.master.acl().clone();
                acl.grant(&session, &user, role).map_err(access_failure)?;
                Ok((Change::Acl(acl), json!({})))
            }),
            Request::Revoke { user, .. } => self.write(&hosted, |w| {
                let mut acl = w.master.acl().clone();
                acl.revoke(&session, &user).map_err(access_failure)?;
                Ok((Change::Acl(acl), json!({})))
            }),
            Request::Publish { force, document, .. } => self.write(&hosted, |w| {
                w.master.acl().require_owner(&session).map_err(access_failure)?;
                let workbook = match document {
                    Some(doc) => {
                        Document::from_value(doc)
                            .map_err(|e| Failure::new("InvalidDocument", e.to_string()))?
                            .workbook
                    }
                    None => w.master.current().clone(),
                };
                let mut next = w.master.clone();
                let version = next.publish_version(&session, workbook, force).map_err(access_failure)?;
                Ok((Change::Master(Box::new(next)), json!({ "version": version })))
            }),
        }
    }

    fn login(&self, user: &str, password: &str, workbook: &str) -> Result<Value, Failure> {
        self.accounts.verify(user, password).map_err(|e| match e {
            LoginError::BadCredentials => Failure::new("BadCredentials", "wrong user or password"),
            LoginError::Throttled => Failure::new("Throttled", "too many failed logins; wait a minute"),
        })?;
        let hosted = self
            .hosted
            .get(workbook)
            .ok_or_else(|| Failure::new("UnknownWorkbook", format!("no workbook `{workbook}`")))?;
        let token = self.accounts.open_session(user, workbook);
        let snap = hosted.snapshot();
        let role = snap.acl.role_of(user).map(Role::name);
        Ok(success(snap.revision, json!({"token": token, "role": role})))
    }

    /// Runs a mutation under the writer lock, persists it as the next
    /// revision and publishes the new snapshot.
    fn write(
        &self,
        hosted: &Hosted,
        f: impl FnOnce(&Writer) -> Result<(Change, Value), Failure>,
    ) -> Result<Value, Failure> {
        let mut w = hosted.writer.lock().expect("writer lock");
        let (change, fields) = f(&w).map_err(|mut fail| {
            fail.revision = Some(w.revision);
            fail
        })?;
        let revision = w.revision + 1;
        let (workbook, acl, version) = match &change {
            Change::Live(wb) => (wb, w.master.acl(), w.master.version()),
            Change::Acl(acl) => (w.master.current(), acl, w.master.version()),
            Change::Master(m) => (m.current(), m.acl(), m.version()),
        };
        if let Some(store) = &self.store {
            let doc = Document {
                workbook: workbook.clone(),
                acl: Some(acl.clone()),
            };
            store.commit(&hosted.id, revision, version, &doc).map_err(|e| Failure {
                revision: Some(w.revision),
                ..Failure::new("StoreFailure", e.to_string())
            })?;
        }
        match change {
            Change::Live(wb) => *w.master.current_mut() = wb,
            Change::Acl(acl) => *w.master.acl_mut() = acl,
            Change::Master(m) => w.master = *m,
        }
        w.revision = revision;
        *hosted.snapshot.write().expect("snapshot lock") = snapshot_of(&w);
        Ok(success(revision, fields))
    }
}

enum Change {
    Live(Workbook),
    Acl(SharingAcl),
    Master(Box<MasterStore>),
}

fn read(hosted: &Hosted, f: impl FnOnce(&Snapshot) -> Result<Value, Failure>) -> Result<Value, Failure> {
    let snap = hosted.snapshot();
    match f(&snap) {
        Ok(fields) => Ok(success(snap.revision, fields)),
        Err(mut fail) => {
            fail.revision = Some(snap.revision);
            Err(fail)
        }
    }
}

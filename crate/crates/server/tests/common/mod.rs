#![allow(dead_code)]

use std::sync::OnceLock;
use std::time::Duration;

use pws_core::access::{Role, Session, SharingAcl};
use pws_core::address::CellAddress;
use pws_core::passwords::OpenFilePasswordRecord;
use pws_core::pws::UserRecord;
use pws_core::workbook::{CellProtectionFormat, Workbook};
use pws_server::Service;
use serde_json::{json, Value};

pub const WB: &str = "budget";
pub const OWNER: &str = "ann";
pub const COLLABORATOR: &str = "col";
pub const VIEWER: &str = "vw";
pub const LIMITED: &str = "lu";
pub const OUTSIDER: &str = "eve";

pub fn password(user: &str) -> String {
    format!("{user}-secret")
}

/// Key derivation is slow; derive each record once per test binary.
pub fn users() -> Vec<UserRecord> {
    static USERS: OnceLock<Vec<UserRecord>> = OnceLock::new();
    USERS
        .get_or_init(|| {
            [OWNER, COLLABORATOR, VIEWER, LIMITED, OUTSIDER]
                .iter()
                .map(|u| UserRecord {
                    user: u.to_string(),
                    password: OpenFilePasswordRecord::with_salt(&password(u), [7; 16]),
                })
                .collect()
        })
        .clone()
}

pub fn a(s: &str) -> CellAddress {
    CellAddress::parse_with_default(s, "Sheet1").unwrap()
}

/// A1 input 5, A2 `=A1*2` locked+hidden, B1 a label, C1 `=A2+1`.
pub fn workbook() -> Workbook {
    let mut wb = Workbook::new();
    wb.set_cell(&a("A1"), "5").unwrap();
    wb.set_format(&a("A1"), CellProtectionFormat::INPUT).unwrap();
    wb.set_cell(&a("A2"), "=A1*2").unwrap();
    wb.set_format(&a("A2"), CellProtectionFormat::LOCKED_HIDDEN).unwrap();
    wb.set_cell(&a("B1"), "label").unwrap();
    wb.set_cell(&a("C1"), "=A2+1").unwrap();
    wb
}

pub fn acl() -> SharingAcl {
    let owner = Session::authenticated(OWNER);
    let mut acl = SharingAcl::new(OWNER);
    acl.grant(&owner, COLLABORATOR, Role::Collaborator).unwrap();
    acl.grant(&owner, VIEWER, Role::Viewer).unwrap();
    acl.grant(&owner, LIMITED, Role::LimitedUser).unwrap();
    acl
}

pub fn service() -> Service {
    let mut s = Service::new(users(), Duration::from_secs(600));
    s.host(WB, workbook(), acl()).unwrap();
    s
}

pub fn call(s: &Service, req: Value) -> Value {
    serde_json::from_slice(&s.handle(&serde_json::to_vec(&req).unwrap())).unwrap()
}

pub fn login(s: &Service, user: &str) -> String {
    let r = call(s, json!({"kind": "login", "user": user, "password": password(user), "workbook": WB}));
    assert_eq!(r["ok"], true, "{r}");
    r["token"].as_str().unwrap().to_string()
}

pub fn error_code(r: &Value) -> &str {
    assert_eq!(r["ok"], false, "{r}");
    r["error"].as_str().unwrap()
}

/// Display of `addr` in a view response, if the cell is present.
pub fn view_display(view: &Value, sheet: &str, addr: &str) -> Option<String> {
    view["view"]["sheets"]
        .as_array()?
        .iter()
        .find(|s| s["name"] == sheet)?["cells"]
        .as_array()?
        .iter()
        .find(|c| c["addr"] == addr)
        .map(|c| c["display"].as_str().unwrap().to_string())
}

mod common;

use common::*;
use pws_core::pws::Document;
use serde_json::json;

#[test]
fn login_returns_role_from_acl() {
    let s = service();
    let r = call(&s, json!({"kind": "login", "user": LIMITED, "password": password(LIMITED), "workbook": WB}));
    assert_eq!(r["ok"], true);
    assert_eq!(r["revision"], 0);
    assert_eq!(r["role"], "limited-user");
    assert_eq!(r["token"].as_str().unwrap().len(), 32);
}

#[test]
fn wrong_password_and_throttling() {
    let s = service();
    let bad = json!({"kind": "login", "user": VIEWER, "password": "guess", "workbook": WB});
    for _ in 0..5 {
        assert_eq!(error_code(&call(&s, bad.clone())), "BadCredentials");
    }
    assert_eq!(error_code(&call(&s, bad)), "Throttled");
    let good = json!({"kind": "login", "user": VIEWER, "password": password(VIEWER), "workbook": WB});
    assert_eq!(error_code(&call(&s, good)), "Throttled");
    // Other users are unaffected.
    login(&s, OWNER);
}

#[test]
fn unknown_user_is_bad_credentials() {
    let s = service();
    let r = call(&s, json!({"kind": "login", "user": "mallory", "password": "x", "workbook": WB}));
    assert_eq!(error_code(&r), "BadCredentials");
}

#[test]
fn unknown_workbook_after_valid_login() {
    let s = service();
    let r = call(&s, json!({"kind": "login", "user": OWNER, "password": password(OWNER), "workbook": "nope"}));
    assert_eq!(error_code(&r), "UnknownWorkbook");
}

#[test]
fn malformed_requests() {
    let s = service();
    let r: serde_json::Value = serde_json::from_slice(&s.handle(b"not json")).unwrap();
    assert_eq!(error_code(&r), "BadRequest");
    assert_eq!(error_code(&call(&s, json!({"kind": "get_view"}))), "BadRequest");
    assert_eq!(error_code(&call(&s, json!({"kind": "get_view", "token": "0"}))), "NotAuthenticated");
}

#[test]
fn get_view_since_current_revision_is_unchanged() {
    let s = service();
    let t = login(&s, COLLABORATOR);
    let r = call(&s, json!({"kind": "get_view", "token": t}));
    assert_eq!(r["revision"], 0);
    assert_eq!(view_display(&r, "Sheet1", "A2").as_deref(), Some("10"));
    let r = call(&s, json!({"kind": "get_view", "token": t, "since": 0}));
    assert_eq!(r, json!({"ok": true, "revision": 0, "unchanged": true}));
    call(&s, json!({"kind": "edit", "token": t, "addr": "B1", "input": "x"}));
    let r = call(&s, json!({"kind": "get_view", "token": t, "since": 0}));
    assert_eq!(r["revision"], 1);
    assert!(r["view"].is_object());
}

#[test]
fn limited_user_sees_values_not_formulas() {
    let s = service();
    let t = login(&s, LIMITED);
    let r = call(&s, json!({"kind": "get_view", "token": t}));
    let cells = &r["view"]["sheets"][0]["cells"];
    let a2 = cells.as_array().unwrap().iter().find(|c| c["addr"] == "A2").unwrap();
    assert_eq!(a2, &json!({"addr": "A2", "display": "10", "editable": false}));
    let a1 = cells.as_array().unwrap().iter().find(|c| c["addr"] == "A1").unwrap();
    assert_eq!(a1, &json!({"addr": "A1", "display": "5", "editable": true, "contents": "5"}));
}

#[test]
fn edit_returns_deltas_and_bumps_revision() {
    let s = service();
    let t = login(&s, LIMITED);
    let r = call(&s, json!({"kind": "edit", "token": t, "addr": "A1", "input": "7"}));
    assert_eq!(r["ok"], true, "{r}");
    assert_eq!(r["revision"], 1);
    assert_eq!(
        r["deltas"],
        json!([
            {"addr": "Sheet1!A1", "display": "7"},
            {"addr": "Sheet1!A2", "display": "14"},
            {"addr": "Sheet1!C1", "display": "15"},
        ])
    );
}

#[test]
fn edit_gates() {
    let s = service();
    let lu = login(&s, LIMITED);
    let vw = login(&s, VIEWER);
    let col = login(&s, COLLABORATOR);
    let edit = |t: &str, addr: &str, input: &str| call(&s, json!({"kind": "edit", "token": t, "addr": addr, "input": input}));
    assert_eq!(error_code(&edit(&lu, "A2", "1")), "EditDenied");
    assert_eq!(error_code(&edit(&lu, "A1", "=1+1")), "FormulaForbidden");
    assert_eq!(error_code(&edit(&vw, "A1", "1")), "EditDenied");
    assert_eq!(error_code(&edit(&col, "A1", "=[other.pws]Sheet1!A1")), "ExternalLinkForbidden");
    assert_eq!(error_code(&edit(&col, "ZZZZ1", "1")), "UnknownAddress");
    assert_eq!(error_code(&edit(&col, "A1", "=SUM(")), "SyntaxError");
    let r = edit(&col, "A1", "=3");
    assert_eq!(r["ok"], true);
    // Failures carry the revision they were judged against.
    assert_eq!(edit(&lu, "A2", "1")["revision"], 1);
}

#[test]
fn copy_reveals_only_what_the_class_allows() {
    let s = service();
    let lu = login(&s, LIMITED);
    let col = login(&s, COLLABORATOR);
    let r = call(&s, json!({"kind": "copy", "token": lu, "rect": "A1:C2"}));
    assert_eq!(
        r["cells"],
        json!([
            {"addr": "Sheet1!A1", "text": "5"},
            {"addr": "Sheet1!B1", "text": "label"},
            {"addr": "Sheet1!C1", "text": "11"},
            {"addr": "Sheet1!A2", "text": "10"},
        ])
    );
    let r = call(&s, json!({"kind": "copy", "token": col, "rect": "A2"}));
    assert_eq!(r["cells"], json!([{"addr": "Sheet1!A2", "text": "=A1*2"}]));
    let r = call(&s, json!({"kind": "copy", "token": col, "rect": "Nope!A1:B2"}));
    assert_eq!(error_code(&r), "UnknownAddress");
}

#[test]
fn export_flattens_formulas_for_limited_user() {
    let s = service();
    let lu = login(&s, LIMITED);
    let r = call(&s, json!({"kind": "export", "token": lu}));
    let doc = Document::from_value(r["document"].clone()).unwrap();
    assert!(doc.acl.is_none());
    assert!(!doc.workbook.content(&a("A2")).unwrap().is_formula());
    assert!(!r.to_string().contains("A1*2"));

    let owner = login(&s, OWNER);
    let r = call(&s, json!({"kind": "export", "token": owner}));
    let doc = Document::from_value(r["document"].clone()).unwrap();
    assert_eq!(doc.workbook, workbook());
    assert!(doc.acl.is_some());
}

#[test]
fn grant_and_revoke_are_owner_only() {
    let s = service();
    let owner = login(&s, OWNER);
    let col = login(&s, COLLABORATOR);
    let r = call(&s, json!({"kind": "grant", "token": col, "user": OUTSIDER, "role": "viewer"}));
    assert_eq!(error_code(&r), "NotOwner");
    let r = call(&s, json!({"kind": "grant", "token": owner, "user": OWNER, "role": "viewer"}));
    assert_eq!(error_code(&r), "CannotDemoteOwner");
    let r = call(&s, json!({"kind": "grant", "token": owner, "user": OUTSIDER, "role": "owner"}));
    assert_eq!(error_code(&r), "OwnerUnique");
    let r = call(&s, json!({"kind": "grant", "token": owner, "user": OUTSIDER, "role": "viewer"}));
    assert_eq!(r, json!({"ok": true, "revision": 1}));
    let r = call(&s, json!({"kind": "revoke", "token": col, "user": OUTSIDER}));
    assert_eq!(error_code(&r), "NotOwner");
}

#[test]
fn revoked_user_gets_revoked_access() {
    let s = service();
    let owner = login(&s, OWNER);
    let lu = login(&s, LIMITED);
    call(&s, json!({"kind": "revoke", "token": owner, "user": LIMITED}));
    let r = call(&s, json!({"kind": "get_view", "token": lu}));
    assert_eq!(error_code(&r), "RevokedAccess");
    // A fresh login succeeds but carries no role.
    let r = call(&s, json!({"kind": "login", "user": LIMITED, "password": password(LIMITED), "workbook": WB}));
    assert_eq!(r["role"], json!(null));
    let t = r["token"].as_str().unwrap();
    let r = call(&s, json!({"kind": "get_view", "token": t}));
    assert_eq!(error_code(&r), "RevokedAccess");
    let r = call(&s, json!({"kind": "get_view", "token": t, "since": 1}));
    assert_eq!(error_code(&r), "RevokedAccess");
}

#[test]
fn publish_requires_clean_audit_unless_forced() {
    let s = service();
    let owner = login(&s, OWNER);
    let col = login(&s, COLLABORATOR);
    let r = call(&s, json!({"kind": "publish", "token": col}));
    assert_eq!(error_code(&r), "NotOwner");
    let r = call(&s, json!({"kind": "publish", "token": owner}));
    assert_eq!(error_code(&r), "AuditFailed");
    assert!(r["findings"].as_array().unwrap().iter().all(|f| f["severity"] == "error"));

    let mut good = workbook();
    pws_core::protection::apply_recommended(&mut good, "pw").unwrap();
    let doc = Document::new(good.clone()).to_value();
    let r = call(&s, json!({"kind": "publish", "token": owner, "document": doc}));
    assert_eq!(r, json!({"ok": true, "revision": 1, "version": 2}));
    let r = call(&s, json!({"kind": "publish", "token": owner, "force": true}));
    assert_eq!(r["version"], 3);

    let versions = s.hosted(WB).unwrap().versions();
    assert_eq!(versions, vec![workbook(), good.clone(), good]);
    let r = call(&s, json!({"kind": "get_view", "token": col}));
    assert_eq!(r["view"]["workbook_version"], 3);
}

#[test]
fn publish_rejects_malformed_documents() {
    let s = service();
    let owner = login(&s, OWNER);
    let r = call(&s, json!({"kind": "publish", "token": owner, "document": {"version": 9}}));
    assert_eq!(error_code(&r), "InvalidDocument");
}

#[test]
fn audit_is_owner_only() {
    let s = service();
    let owner = login(&s, OWNER);
    let lu = login(&s, LIMITED);
    assert_eq!(error_code(&call(&s, json!({"kind": "audit", "token": lu}))), "NotOwner");
    let r = call(&s, json!({"kind": "audit", "token": owner}));
    assert_eq!(r["pass"], false);
    assert!(r["findings"].as_array().unwrap().iter().any(|f| f["rule"] == "R6"));
}

#[test]
fn expired_sessions_are_rejected() {
    let mut s = pws_server::Service::new(users(), std::time::Duration::from_millis(20));
    s.host(WB, workbook(), acl()).unwrap();
    let t = s.issue_session(OWNER, WB).unwrap();
    assert_eq!(call(&s, json!({"kind": "get_view", "token": t}))["ok"], true);
    std::thread::sleep(std::time::Duration::from_millis(40));
    assert_eq!(error_code(&call(&s, json!({"kind": "get_view", "token": t}))), "NotAuthenticated");
}

//! Stdout of each command is compared with `tests/golden/<name>.out`. Run with
//! `PWS_BLESS=1` to rewrite the golden files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pws");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn pws(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"))
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn golden(name: &str, args: &[&str], exit: i32) {
    let out = pws(args);
    assert_eq!(out.status.code(), Some(exit), "{name}: {}", stderr(&out));
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.out"));
    if std::env::var_os("PWS_BLESS").is_some() {
        std::fs::write(&path, stdout(&out)).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(stdout(&out), expected, "{name}");
}

fn fails_with(args: &[&str], exit: i32, code: &str) {
    let out = pws(args);
    assert_eq!(out.status.code(), Some(exit), "{args:?}");
    assert!(stdout(&out).is_empty());
    assert!(stderr(&out).starts_with(&format!("error: {code}: ")), "{}", stderr(&out));
}

#[test]
fn audit_text() {
    golden("audit_calc", &["audit", "calc.pws"], 1);
}

#[test]
fn audit_machine() {
    golden("audit_calc_machine", &["audit", "calc.pws", "--format", "machine"], 1);
}

#[test]
fn audit_compliant_prints_only_the_keyspace_notice() {
    golden("audit_compliant", &["audit", "compliant.pws"], 0);
}

#[test]
fn eval_sets_then_gets() {
    golden(
        "eval_calc",
        &["eval", "calc.pws", "--set", "A1=3", "--get", "Sheet1!B2", "--get", "C1", "--get", "D1"],
        0,
    );
}

#[test]
fn eval_enters_formulas() {
    let out = pws(&["eval", "calc.pws", "--set", "A1==2+2", "--get", "B2"]);
    assert_eq!(stdout(&out), "8\n");
}

#[test]
fn eval_bad_address() {
    fails_with(&["eval", "calc.pws", "--get", "Nope!A1"], 2, "UnknownAddress");
    fails_with(&["eval", "calc.pws", "--set", "A0=1", "--get", "A1"], 2, "UnknownAddress");
    fails_with(&["eval", "calc.pws", "--set", "A1==1+", "--get", "A1"], 2, "SyntaxError");
}

#[test]
fn crack_sheet_password() {
    golden("crack_evasion", &["crack-element", "evasion.pws", "--sheet", "Sheet1"], 0);
}

#[test]
fn crack_failures() {
    fails_with(&["crack-element", "evasion.pws"], 2, "NoPassword");
    fails_with(&["crack-element", "calc.pws", "--sheet", "Sheet1"], 2, "NoPassword");
    fails_with(&["crack-element", "open_protected.pws", "--sheet", "Sheet1"], 3, "Infeasible");
    fails_with(&["crack-element", "evasion.pws", "--sheet", "Nope"], 2, "UnknownAddress");
}

#[test]
fn attack_copy_leaks_then_does_not() {
    golden("attack_evasion", &["attack-copy", "evasion.pws", "--rect", "A1:C3"], 1);
    golden("attack_compliant", &["attack-copy", "compliant.pws", "--rect", "A1:C3"], 0);
    fails_with(&["attack-copy", "compliant.pws", "--rect", "A1:B2"], 2, "CornerNotSelectable");
}

#[test]
fn export_as_limited_user() {
    golden("export_calc_limited", &["export", "calc.pws", "--as-role", "limited-user"], 0);
    let out = pws(&["export", "calc.pws", "--as-role", "limited-user"]);
    assert!(!stdout(&out).contains("=A1*2"));
    let owner = pws(&["export", "calc.pws", "--as-role", "owner"]);
    assert!(stdout(&owner).contains("=A1*2"));
}

#[test]
fn protect_reproduces_the_compliant_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.pws");
    let o = pws(&[
        "protect",
        "evasion.pws",
        "--password",
        "4242#8/0",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(out).unwrap(),
        std::fs::read_to_string(fixture("compliant.pws")).unwrap()
    );
    fails_with(&["protect", "evasion.pws", "--password", "guess"], 2, "WrongPassword");
}

#[test]
fn share_and_add_user() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("wb.pws");
    std::fs::copy(fixture("evasion.pws"), &file).unwrap();
    let f = file.to_str().unwrap();
    fails_with(&["share", f, "--grant", "lu=limited-user"], 2, "InvalidInput");
    let o = pws(&["share", f, "--owner", "ann", "--grant", "lu=limited-user", "--grant", "vw=viewer"]);
    assert_eq!(stdout(&o), "owner\tann\nlimited-user\tlu\nviewer\tvw\n");
    let o = pws(&["share", f, "--revoke", "vw"]);
    assert_eq!(stdout(&o), "owner\tann\nlimited-user\tlu\n");
    fails_with(&["share", f, "--grant", "ann=viewer"], 2, "CannotDemoteOwner");

    let users = dir.path().join("users.json");
    let u = users.to_str().unwrap();
    assert_eq!(pws(&["add-user", u, "--user", "ann", "--password", "a"]).status.code(), Some(0));
    assert_eq!(pws(&["add-user", u, "--user", "lu", "--password", "b"]).status.code(), Some(0));
    fails_with(&["add-user", u, "--user", "lu", "--password", "c"], 2, "DuplicateUser");
    let parsed = pws_core::pws::parse_users(&std::fs::read_to_string(&users).unwrap()).unwrap();
    assert_eq!(parsed.len(), 2);
    assert!(parsed[1].password.verify("b"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(pws(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(pws(&["eval", "calc.pws"]).status.code(), Some(2));
    assert_eq!(pws(&["audit", "calc.pws", "--format", "xml"]).status.code(), Some(2));
    fails_with(&["audit", "missing.pws"], 2, "InvalidInput");
}

//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::{Duration, Instant};

use pws_core::access::{export_local, render_view, Session};
use pws_core::address::{CellAddress, Coord, Rect};
use pws_core::audit::{audit_protection, evasion_scan, Location, Rule, Severity};
use pws_core::engine::recalculate;
use pws_core::passwords::{element_hash, ElementPasswordRecord, OpenFilePasswordRecord, ELEMENT_KEYSPACE};
use pws_core::protection::{
    apply_recommended, copy_range, effective_capability, protect_sheet, protect_workbook, set_protection_format,
    unprotect_sheet, unprotect_workbook, Actor, ProtectionCapability, SheetOptions,
};
use pws_core::pws::{Document, UserRecord};
use pws_core::workbook::{CellProtectionFormat, SheetProtection, SheetVisibility, Workbook};
use pws_server::{serve_service, Client, Service};
use pws_testkit::fuzz::{random_workbook, FuzzOptions, LIMITED, VIEWER};
use pws_testkit::leaks::find_leak;
use pws_testkit::oracle::{GenBook, SHEET};
use pws_testkit::wire::{wire_case, WORKBOOK};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_pws");

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn pws<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(BIN).args(args).output().expect("pws runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn a(s: &str) -> CellAddress {
    CellAddress::parse_with_default(s, "Sheet1").unwrap()
}

fn random_password(rng: &mut impl Rng) -> String {
    let printable = Uniform::new_inclusive(b' ', b'~').unwrap();
    let len = rng.random_range(6..=16);
    (0..len).map(|_| printable.sample(rng) as char).collect()
}

fn keyspace() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(194_560);
    let mut worst_attempts = 0;
    let mut worst_time = Duration::ZERO;
    for i in 0..100 {
        let password = random_password(&mut rng);
        let mut wb = Workbook::new();
        protect_sheet(&mut wb, Actor::User, "Sheet1", SheetOptions::default(), Some(&password)).unwrap();
        let file = dir.path().join(format!("k{i}.pws"));
        std::fs::write(&file, Document::new(wb).to_json()).unwrap();

        let start = Instant::now();
        let out = pws(["crack-element".as_ref(), file.as_os_str(), "--sheet".as_ref(), "Sheet1".as_ref()]);
        let elapsed = start.elapsed();
        ensure(out.status.success(), || format!("crack {i} failed: {}", String::from_utf8_lossy(&out.stderr)))?;
        let text = stdout(&out);
        let found = text
            .lines()
            .find_map(|l| l.strip_prefix("password: "))
            .ok_or_else(|| format!("no password line: {text}"))?;
        let attempts: u32 = text
            .lines()
            .find_map(|l| l.strip_prefix("attempts: "))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| format!("no attempts line: {text}"))?;
        ensure(ElementPasswordRecord::new(&password).verify(found), || {
            format!("{found:?} does not unlock the record of {password:?}")
        })?;
        ensure(attempts <= ELEMENT_KEYSPACE, || format!("{attempts} attempts"))?;
        worst_attempts = worst_attempts.max(attempts);
        worst_time = worst_time.max(elapsed);
    }
    ensure(worst_time < Duration::from_secs(5), || format!("slowest crack took {worst_time:?}"))?;

    // Collision rate over independent random pairs.
    const PAIRS: u32 = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut collisions = 0u32;
    let mut classes: HashMap<u32, u64> = HashMap::new();
    for _ in 0..PAIRS {
        let (p, q) = (random_password(&mut rng), random_password(&mut rng));
        let (hp, hq) = (element_hash(&p), element_hash(&q));
        if hp == hq && p != q {
            collisions += 1;
        }
        *classes.entry(hp).or_default() += 1;
        *classes.entry(hq).or_default() += 1;
    }
    let expected = 1.0 / f64::from(ELEMENT_KEYSPACE);
    let rate = f64::from(collisions) / f64::from(PAIRS);
    // All pairs among the same 2*10^6 passwords, for comparison.
    let n = 2.0 * f64::from(PAIRS);
    let same: f64 = classes.values().map(|&k| (k * k.saturating_sub(1) / 2) as f64).sum();
    let pooled = same / (n * (n - 1.0) / 2.0);
    let detail = format!(
        "slowest crack {worst_time:.2?}, most attempts {worst_attempts}; {collisions} collisions in {PAIRS} pairs, \
         rate {rate:.3e} vs {expected:.3e} ({:+.1}%); pooled over all pairs {pooled:.3e} ({:+.1}%)",
        (rate / expected - 1.0) * 100.0,
        (pooled / expected - 1.0) * 100.0,
    );
    ensure((rate / expected - 1.0).abs() <= 0.10, || detail.clone())?;
    Ok(detail)
}

fn leak_fuzz() -> Outcome {
    const CASES: u32 = 10_000;
    const TCP_EVERY: u32 = 100;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let opts = FuzzOptions::default();
    let (mut payloads, mut formulas) = (0u64, 0u64);
    for case in 0..CASES {
        let c = wire_case(&mut rng, &opts);
        formulas += c.sources.len() as u64;
        let snap = c.service.hosted(WORKBOOK).expect("hosted").snapshot();
        for user in [LIMITED, VIEWER] {
            let session = Session::authenticated(user);
            let view = render_view(&snap.workbook, &snap.values, &snap.acl, &session, snap.version)
                .map_err(|e| e.to_string())?;
            let view = serde_json::to_string(&view).unwrap();
            let export = export_local(&snap.workbook, &snap.values, &snap.acl, &session)
                .map_err(|e| e.to_string())?
                .to_json();
            for (what, text) in [("view", &view), ("export", &export)] {
                if let Some(leak) = find_leak(text, &c.sources) {
                    return Err(format!("case {case}: {user} {what} carries {leak:?}"));
                }
                payloads += 1;
            }
        }
        let scripts = c.scripts;
        let sources = c.sources;
        if case % TCP_EVERY == 0 {
            let server = serve_service(Arc::new(c.service), "127.0.0.1:0").map_err(|e| e.to_string())?;
            for script in &scripts {
                let mut client = Client::connect(server.local_addr()).map_err(|e| e.to_string())?;
                for body in script {
                    let reply = client.send_raw(body).map_err(|e| e.to_string())?;
                    let text = String::from_utf8_lossy(&reply);
                    if let Some(leak) = find_leak(&text, &sources) {
                        return Err(format!("case {case}: tcp reply carries {leak:?}"));
                    }
                    payloads += 1;
                }
            }
        } else {
            for script in &scripts {
                for body in script {
                    let reply = c.service.handle(body);
                    let text = String::from_utf8_lossy(&reply);
                    if let Some(leak) = find_leak(&text, &sources) {
                        return Err(format!("case {case}: reply carries {leak:?}"));
                    }
                    payloads += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!("{CASES} workbooks, {formulas} formulas, {payloads} payloads, 0 leaks in {elapsed:.1?}");
    ensure(elapsed < Duration::from_secs(300), || detail.clone())?;
    Ok(detail)
}

fn leaking_cells(wb: &Workbook, window: u32) -> BTreeSet<CellAddress> {
    let coords: Vec<Coord> = (1..=window)
        .flat_map(|row| (1..=window).map(move |col| Coord { row, col }))
        .collect();
    let mut out = BTreeSet::new();
    for sheet in wb.sheets().iter().filter(|s| s.visibility == SheetVisibility::Visible) {
        for (i, p) in coords.iter().enumerate() {
            for q in &coords[i..] {
                let Ok(payload) = copy_range(wb, &Rect::spanning(sheet.name(), *p, *q)) else { continue };
                for cell in payload.cells {
                    if cell.source && wb.content(&cell.addr).is_some_and(|c| c.is_formula()) {
                        out.insert(cell.addr);
                    }
                }
            }
        }
    }
    out
}

fn evasion() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let evasion = fixture("evasion.pws");
    let attack = |file: &Path| pws(["attack-copy".as_ref(), file.as_os_str(), "--rect".as_ref(), "A1:C3".as_ref()]);

    let before = attack(&evasion);
    ensure(before.status.code() == Some(1) && stdout(&before).contains("=A1*C3+100"), || {
        format!("attack on the evasion fixture did not leak: {}", stdout(&before))
    })?;

    let cracked = pws(["crack-element".as_ref(), evasion.as_os_str(), "--sheet".as_ref(), "Sheet1".as_ref()]);
    let password = stdout(&cracked)
        .lines()
        .find_map(|l| l.strip_prefix("password: ").map(str::to_string))
        .ok_or("crack printed no password")?;
    let fixed = dir.path().join("fixed.pws");
    let protect = pws([
        "protect".as_ref(),
        evasion.as_os_str(),
        "--password".as_ref(),
        password.as_ref(),
        "--output".as_ref(),
        fixed.as_os_str(),
    ]);
    ensure(protect.status.success(), || String::from_utf8_lossy(&protect.stderr).into_owned())?;
    let after = attack(&fixed);
    ensure(
        after.status.code() == Some(0)
            && stdout(&after).contains("result: values only")
            && !stdout(&after).contains("=A1*C3"),
        || format!("attack after protect: {}", stdout(&after)),
    )?;

    let mut leaking = 0;
    for bits in 0..16u8 {
        let (locked, hidden, enabled, select_locked) = (bits & 1 != 0, bits & 2 != 0, bits & 4 != 0, bits & 8 != 0);
        let mut wb = Workbook::new();
        wb.set_cell(&a("A1"), "2").unwrap();
        wb.set_cell(&a("C3"), "3").unwrap();
        wb.set_cell(&a("B2"), "=A1*C3+100").unwrap();
        wb.set_format(&a("A1"), CellProtectionFormat::INPUT).unwrap();
        wb.set_format(&a("C3"), CellProtectionFormat::INPUT).unwrap();
        wb.set_format(&a("B2"), CellProtectionFormat { locked, hidden }).unwrap();
        wb.sheet_mut("Sheet1").unwrap().protection = SheetProtection {
            enabled,
            allow_select_locked: select_locked,
            ..SheetProtection::default()
        };
        let flagged: BTreeSet<CellAddress> = evasion_scan(&wb)
            .into_iter()
            .filter(|f| f.rule == Rule::R9)
            .filter_map(|f| match f.location {
                Location::Cell(addr) => Some(addr),
                _ => None,
            })
            .collect();
        let leaks = leaking_cells(&wb, 4);
        ensure(flagged == leaks, || {
            format!(
                "locked={locked} hidden={hidden} enabled={enabled} select_locked={select_locked}: \
                 R9 flags {flagged:?}, copies leak {leaks:?}"
            )
        })?;
        leaking += usize::from(!leaks.is_empty());
    }
    Ok(format!("attack-copy leaks before protect, values only after; R9 exact on 16 cases ({leaking} leaking)"))
}

fn clear_passwords(wb: &mut Workbook) {
    wb.protection.password = None;
    for s in wb.sheets_mut() {
        s.protection.password = None;
    }
}

fn checklist() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    for i in 0..100 {
        let mut wb = random_workbook(&mut rng, &FuzzOptions::default());
        // The owner knows the old passwords; the recipe sets one new password.
        clear_passwords(&mut wb);
        apply_recommended(&mut wb, "owner-secret").map_err(|e| format!("workbook {i}: {e}"))?;
        let findings = audit_protection(&wb);
        let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
        let r10 = findings.iter().filter(|f| f.rule == Rule::R10 && f.severity == Severity::Info).count();
        ensure(errors == 0 && r10 == 1, || format!("workbook {i}: {errors} errors, {r10} R10: {findings:?}"))?;
    }
    Ok("100 workbooks: 0 error findings, one R10 each".to_string())
}

fn state_cube() -> Outcome {
    for bits in 0..16u8 {
        let (locked, hidden, enabled, select_locked) = (bits & 1 != 0, bits & 2 != 0, bits & 4 != 0, bits & 8 != 0);
        let case = format!("locked={locked} hidden={hidden} enabled={enabled} select_locked={select_locked}");
        let mut wb = Workbook::new();
        wb.set_cell(&a("B2"), "=1+1").unwrap();
        wb.set_format(&a("B2"), CellProtectionFormat { locked, hidden }).unwrap();
        wb.sheet_mut("Sheet1").unwrap().protection = SheetProtection {
            enabled,
            allow_select_locked: select_locked,
            ..SheetProtection::default()
        };
        let want = if enabled {
            let selectable = !locked || select_locked;
            ProtectionCapability {
                selectable,
                editable: !locked,
                contents_visible_normal: selectable && !hidden,
                contents_visible_formula_view: !hidden,
                copy_reveals_contents: !hidden,
            }
        } else {
            ProtectionCapability::UNRESTRICTED
        };
        let got = effective_capability(&wb, &a("B2")).map_err(|e| format!("{case}: {e}"))?;
        ensure(got == want, || format!("{case}: got {got:?}, want {want:?}"))?;

        let lockout = set_protection_format(&mut wb, &a("B2"), CellProtectionFormat::INPUT, Actor::User);
        match (enabled, lockout) {
            (true, Err(e)) if e.code() == "ProtectionTabUnavailable" => {}
            (false, Ok(())) => {}
            (_, other) => return Err(format!("{case}: Format Cells gave {other:?}")),
        }
    }
    Ok("16 combinations match, Format Cells locked out under protection".to_string())
}

fn engine_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut cells = 0;
    for i in 0..1000 {
        let density = rng.random_range(0.2..1.0);
        let book = GenBook::random(&mut rng, 20, density);
        let values = recalculate(&book.to_workbook());
        let oracle = book.oracle();
        for (coord, want) in &oracle {
            let got = values.get(&CellAddress::from_coord(SHEET, *coord));
            ensure(got == Some(want), || format!("workbook {i} at {coord:?}: engine {got:?}, oracle {want:?}"))?;
        }
        cells += oracle.len();
    }
    Ok(format!("1000 workbooks, {cells} cells agree"))
}

fn call(s: &Service, req: Value) -> Value {
    serde_json::from_slice(&s.handle(&serde_json::to_vec(&req).unwrap())).unwrap()
}

fn code_of(r: &Value) -> String {
    r["error"].as_str().unwrap_or("ok").to_string()
}

fn feature_matrix() -> Outcome {
    use pws_core::access::{Role, SharingAcl};

    let mut wb = Workbook::new();
    wb.set_cell(&a("A1"), "5").unwrap();
    wb.set_format(&a("A1"), CellProtectionFormat::INPUT).unwrap();
    wb.set_cell(&a("A2"), "=A1*2").unwrap();
    let owner = Session::authenticated("ann");
    let mut acl = SharingAcl::new("ann");
    for (user, role) in [("col", Role::Collaborator), ("vw", Role::Viewer), ("lu", Role::LimitedUser)] {
        acl.grant(&owner, user, role).unwrap();
    }
    let users = vec![UserRecord {
        user: "lu".to_string(),
        password: OpenFilePasswordRecord::with_salt("lu-secret", [3; 16]),
    }];
    let mut service = Service::new(users, Duration::from_secs(600));
    service.host("book", wb, acl).map_err(|e| e.to_string())?;
    let token = |u: &str| service.issue_session(u, "book").unwrap();
    let (lu, vw, col) = (token("lu"), token("vw"), token("col"));
    let edit = |t: &str, addr: &str, input: &str| {
        code_of(&call(&service, json!({"kind": "edit", "token": t, "addr": addr, "input": input})))
    };
    let mut lines = Vec::new();
    let mut expect = |feature: &str, got: String, want: &str| -> Result<(), String> {
        ensure(got == want, || format!("{feature}: got {got}, want {want}"))?;
        lines.push(format!("{feature}={want}"));
        Ok(())
    };

    // 1. Cell classes gate edits.
    expect("1", edit(&lu, "A2", "7"), "EditDenied")?;
    expect("1", edit(&vw, "A1", "7"), "EditDenied")?;
    expect("1", edit(&lu, "A1", "7"), "ok")?;
    // 2. Limited users may not type formulas.
    expect("2", edit(&lu, "A1", "=A2"), "FormulaForbidden")?;
    // 3. External links are refused unless the owner allows them.
    expect("3", edit(&col, "A1", "=[other.pws]Sheet1!A1"), "ExternalLinkForbidden")?;
    // 4. Sharing is owner-only.
    let grant = call(&service, json!({"kind": "grant", "token": col, "user": "eve", "role": "viewer"}));
    expect("4", code_of(&grant), "NotOwner")?;

    // 5. One command applies the recipe and the result audits clean.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("protected.pws");
    let protect = pws([
        "protect".as_ref(),
        fixture("calc.pws").as_os_str(),
        "--password".as_ref(),
        "s3cret".as_ref(),
        "--output".as_ref(),
        out.as_os_str(),
    ]);
    let audit = pws(["audit".as_ref(), out.as_os_str()]);
    let status = format!("protect {:?}, audit {:?}", protect.status.code(), audit.status.code());
    expect("5", status, "protect Some(0), audit Some(0)")?;

    // 6. Passwords gate protection changes, logins and open-file recovery.
    let mut wb = Workbook::new();
    protect_sheet(&mut wb, Actor::User, "Sheet1", SheetOptions::default(), Some("pw")).unwrap();
    protect_workbook(&mut wb, true, false, Some("pw")).unwrap();
    let wrong = unprotect_sheet(&mut wb, Actor::User, "Sheet1", Some("nope")).map_err(|e| e.code());
    expect("6", format!("{wrong:?}"), "Err(\"WrongPassword\")")?;
    let wrong = unprotect_workbook(&mut wb, None).map_err(|e| e.code());
    expect("6", format!("{wrong:?}"), "Err(\"WrongPassword\")")?;
    let right = unprotect_sheet(&mut wb, Actor::User, "Sheet1", Some("pw")).is_ok()
        && unprotect_workbook(&mut wb, Some("pw")).is_ok();
    expect("6", right.to_string(), "true")?;
    let login = |pw: &str| {
        code_of(&call(&service, json!({"kind": "login", "user": "lu", "password": pw, "workbook": "book"})))
    };
    expect("6", login("guess"), "BadCredentials")?;
    expect("6", login("lu-secret"), "ok")?;
    let open = pws([
        "crack-element".as_ref(),
        fixture("open_protected.pws").as_os_str(),
        "--sheet".as_ref(),
        "Sheet1".as_ref(),
    ]);
    expect("6", format!("{:?}", open.status.code()), "Some(3)")?;

    lines.dedup();
    Ok(lines.join(" "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("keyspace", keyspace),
        ("leak-freedom fuzz", leak_fuzz),
        ("evasion reproduction", evasion),
        ("checklist fixed point", checklist),
        ("state cube", state_cube),
        ("engine oracle", engine_oracle),
        ("feature matrix", feature_matrix),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {name} ({took:.1?}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({took:.1?}): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

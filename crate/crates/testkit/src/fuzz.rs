//! Random multi-sheet workbooks with protection settings and sharing ACLs.

use pws_core::access::{AccessClass, Role, Session, SharingAcl};
use pws_core::address::{column_letters, format_sheet_name, CellAddress, Coord};
use pws_core::passwords::ElementPasswordRecord;
use pws_core::workbook::{CellProtectionFormat, SheetProtection, SheetVisibility, Workbook};
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

pub const OWNER: &str = "owner";
pub const COLLABORATOR: &str = "col";
pub const VIEWER: &str = "vw";
pub const LIMITED: &str = "lu";

pub const SHEETS: [&str; 3] = ["Sheet1", "Data", "Calc Sheet"];

/// String constants chosen to need JSON escaping. None contains `=`.
const STRINGS: [&str; 6] = ["tot\"al", "back\\slash", "tab\there", "ünïcödé", "<tag>&amp", "line\nbreak"];
const WORDS: [&str; 6] = ["alpha", "Beta 2", "quote\"d", "slash\\", "naïve", "a&b"];

#[derive(Debug, Clone, Copy)]
pub struct FuzzOptions {
    /// Cells per sheet side.
    pub size: u32,
    pub density: f64,
    pub allow_external: bool,
}

impl Default for FuzzOptions {
    fn default() -> Self {
        Self {
            size: 6,
            density: 0.5,
            allow_external: true,
        }
    }
}

fn coord(rng: &mut dyn RngCore, size: u32) -> Coord {
    Coord {
        row: rng.random_range(1..=size),
        col: rng.random_range(1..=size),
    }
}

fn a1(c: Coord) -> String {
    format!("{}{}", column_letters(c.col), c.row)
}

fn sheet_prefix(rng: &mut dyn RngCore, sheets: &[String]) -> String {
    if rng.random_bool(0.7) {
        String::new()
    } else {
        format!("{}!", format_sheet_name(sheets.choose(rng).expect("nonempty")))
    }
}

/// Source text of a random formula, with the leading `=`.
pub fn random_formula(rng: &mut impl Rng, sheets: &[String], size: u32, allow_external: bool) -> String {
    format!("={}", expr(rng, sheets, size, allow_external, 3))
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn expr(rng: &mut dyn RngCore, sheets: &[String], size: u32, ext: bool, depth: u32) -> String {
    let leaf = depth == 0 || rng.random_bool(0.35);
    if leaf {
        return match rng.random_range(0..10) {
            0..=1 => rng.random_range(0..100).to_string(),
            2 => quote(STRINGS.choose(rng).expect("nonempty")),
            3 if ext => format!("[ext.pws]Data!{}", a1(coord(rng, size))),
            _ => format!("{}{}", sheet_prefix(rng, sheets), a1(coord(rng, size))),
        };
    }
    let sub = |rng: &mut dyn RngCore| expr(rng, sheets, size, ext, depth - 1);
    match rng.random_range(0..8) {
        0 => {
            let (p, q) = (coord(rng, size), coord(rng, size));
            let f = ["SUM", "AVERAGE", "MIN", "MAX", "COUNT"].choose(rng).expect("nonempty");
            format!("{f}({}{}:{})", sheet_prefix(rng, sheets), a1(p), a1(q))
        }
        1 => {
            let op = [">", "<", ">=", "<=", "<>", "="].choose(rng).expect("nonempty");
            format!("IF({}{op}{},{},{})", sub(rng), sub(rng), sub(rng), sub(rng))
        }
        2 => format!("-{}", sub(rng)),
        3 => format!("({})", sub(rng)),
        _ => {
            let op = ["+", "-", "*", "/", "^", "&"].choose(rng).expect("nonempty");
            format!("{}{op}{}", sub(rng), sub(rng))
        }
    }
}

/// Typed input for a random cell: number, text (never starting with `=`)
/// or formula.
pub fn random_input(rng: &mut impl Rng, sheets: &[String], size: u32, allow_external: bool) -> String {
    match rng.random_range(0..10) {
        0..=2 => rng.random_range(-50..50).to_string(),
        3..=4 => WORDS.choose(rng).expect("nonempty").to_string(),
        _ => random_formula(rng, sheets, size, allow_external),
    }
}

fn random_format(rng: &mut impl Rng) -> CellProtectionFormat {
    CellProtectionFormat {
        locked: rng.random_bool(0.6),
        hidden: rng.random_bool(0.4),
    }
}

pub fn random_workbook(rng: &mut impl Rng, opts: &FuzzOptions) -> Workbook {
    let count = rng.random_range(1..=SHEETS.len());
    let names: Vec<String> = SHEETS[..count].iter().map(|s| s.to_string()).collect();
    let mut wb = Workbook::with_sheets(names.iter().cloned()).expect("valid names");
    for (i, name) in names.iter().enumerate() {
        for row in 1..=opts.size {
            for col in 1..=opts.size {
                if !rng.random_bool(opts.density) {
                    continue;
                }
                let addr = CellAddress::from_coord(name.clone(), Coord { row, col });
                let input = random_input(rng, &names, opts.size, opts.allow_external);
                wb.set_cell(&addr, &input).expect("generated input parses");
                wb.set_format(&addr, random_format(rng)).expect("valid");
                if rng.random_bool(0.2) {
                    wb.set_input_tag(&addr, true).expect("valid");
                }
            }
        }
        let sheet = wb.sheet_mut(name).expect("exists");
        if i > 0 {
            sheet.visibility = *[SheetVisibility::Visible, SheetVisibility::Hidden, SheetVisibility::VeryHidden]
                .choose(rng)
                .expect("nonempty");
        }
        if rng.random_bool(0.3) {
            sheet.default_format = random_format(rng);
        }
        sheet.protection = SheetProtection {
            enabled: rng.random_bool(0.6),
            password: rng
                .random_bool(0.5)
                .then(|| ElementPasswordRecord::new(&format!("pw{}", rng.random_range(0..1000))).into()),
            allow_select_locked: rng.random_bool(0.5),
            allow_select_unlocked: rng.random_bool(0.8),
            allow_format_cells: rng.random_bool(0.2),
        };
    }
    wb.protection.structure = rng.random_bool(0.5);
    wb.protection.windows = rng.random_bool(0.2);
    if rng.random_bool(0.5) {
        wb.protection.password = Some(ElementPasswordRecord::new("book").into());
    }
    wb
}

/// An ACL over `wb` with one user per role and random overrides.
pub fn random_acl(rng: &mut impl Rng, wb: &Workbook) -> SharingAcl {
    let owner = Session::authenticated(OWNER);
    let mut acl = SharingAcl::new(OWNER);
    acl.grant(&owner, COLLABORATOR, Role::Collaborator).expect("owner grants");
    acl.grant(&owner, VIEWER, Role::Viewer).expect("owner grants");
    acl.grant(&owner, LIMITED, Role::LimitedUser).expect("owner grants");
    acl.set_allow_external_links(&owner, rng.random_bool(0.5)).expect("owner");
    let cells: Vec<CellAddress> = wb.all_cells().map(|(a, _)| a).collect();
    for addr in cells {
        if !rng.random_bool(0.25) {
            continue;
        }
        let formula = wb.content(&addr).is_some_and(|c| c.is_formula());
        let class = match rng.random_range(0..3) {
            0 => AccessClass::NoAccess,
            1 => AccessClass::DisplayAccess,
            _ if formula => AccessClass::NoAccess,
            _ => AccessClass::FullAccess,
        };
        acl.set_override(wb, &owner, &addr, Some(class)).expect("allowed override");
    }
    acl
}

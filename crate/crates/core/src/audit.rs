//! Protection audit: checklist rules R1 to R10 and the rectangle-evasion scan.

use std::fmt;

use serde::Serialize;

use crate::address::{format_sheet_name, CellAddress, Coord, MAX_INDEX};
use crate::engine::data_entry_cells;
use crate::protection::ProtectionCapability;
use crate::workbook::{CellProtectionFormat, Sheet, SheetVisibility, Workbook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
    R10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl Rule {
    pub fn severity(self) -> Severity {
        match self {
            Rule::R1 | Rule::R3 | Rule::R6 | Rule::R9 => Severity::Error,
            Rule::R10 => Severity::Info,
            _ => Severity::Warning,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Location {
    Cell(CellAddress),
    Sheet(String),
    Workbook,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Cell(a) => write!(f, "{a}"),
            Location::Sheet(s) => f.write_str(&format_sheet_name(s)),
            Location::Workbook => f.write_str("(workbook)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Finding {
    pub rule: Rule,
    pub severity: Severity,
    pub location: Location,
    pub message: String,
}

impl Finding {
    fn new(rule: Rule, location: Location, message: impl Into<String>) -> Self {
        Self {
            rule,
            severity: rule.severity(),
            location,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "rule": self.rule.to_string(),
            "severity": self.severity,
            "location": self.location.to_string(),
            "message": self.message,
        })
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}: {}", self.rule, self.severity, self.location, self.message)
    }
}

/// True when no finding has Error severity.
pub fn passes(findings: &[Finding]) -> bool {
    findings.iter().all(|f| f.severity != Severity::Error)
}

/// One `rule<TAB>severity<TAB>location<TAB>message` line per finding.
pub fn render_machine(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(|f| format!("{}\t{}\t{}\t{}\n", f.rule, f.severity, f.location, f.message))
        .collect()
}

pub fn render_text(findings: &[Finding]) -> String {
    let mut out: String = findings.iter().map(|f| format!("{f}\n")).collect();
    let count = |s| findings.iter().filter(|f| f.severity == s).count();
    out.push_str(&format!(
        "{} error(s), {} warning(s), {} info\n",
        count(Severity::Error),
        count(Severity::Warning),
        count(Severity::Info)
    ));
    out
}

fn sort_key(wb: &Workbook, f: &Finding) -> (usize, u32, u32, Rule) {
    match &f.location {
        Location::Cell(a) => (wb.sheet_index(&a.sheet).unwrap_or(usize::MAX), a.row, a.col, f.rule),
        Location::Sheet(s) => (wb.sheet_index(s).unwrap_or(usize::MAX), 0, 0, f.rule),
        Location::Workbook => (usize::MAX, 0, 0, f.rule),
    }
}

/// All findings, ordered by sheet (workbook scope last), row, column, rule.
pub fn audit_protection(wb: &Workbook) -> Vec<Finding> {
    let inputs = data_entry_cells(wb);
    let mut out = Vec::new();

    for sheet in wb.sheets() {
        let name = sheet.name();
        let at_sheet = || Location::Sheet(name.to_string());
        let p = &sheet.protection;

        if sheet.default_format != CellProtectionFormat::LOCKED_HIDDEN {
            out.push(Finding::new(Rule::R1, at_sheet(), "blank cells are not formatted Locked+Hidden"));
        }
        if !sheet.default_format.locked && sheet.default_format.hidden {
            out.push(Finding::new(Rule::R8, at_sheet(), "blank cells are formatted unLocked+Hidden"));
        }
        if !p.enabled {
            out.push(Finding::new(Rule::R3, at_sheet(), "sheet protection is disabled"));
        } else {
            if p.allow_select_locked || p.allow_format_cells {
                out.push(Finding::new(
                    Rule::R4,
                    at_sheet(),
                    "sheet protection permits more than selecting unlocked cells",
                ));
            }
            if p.password.is_none() {
                out.push(Finding::new(Rule::R7, at_sheet(), "sheet protection has no password"));
            }
        }
        let has_unlocked = !sheet.default_format.locked || sheet.cells().any(|(_, c)| !c.format.locked);
        if sheet.visibility == SheetVisibility::Visible && !has_unlocked {
            out.push(Finding::new(Rule::R5, at_sheet(), "sheet has no unlocked cells but is not hidden"));
        }

        for (coord, cell) in sheet.cells() {
            let addr = CellAddress::from_coord(name, coord);
            let input = inputs.contains(&addr);
            let here = || Location::Cell(addr.clone());
            if !input && !cell.content.is_literal() && cell.format != CellProtectionFormat::LOCKED_HIDDEN {
                let what = if cell.content.is_formula() { "formula" } else { "blank" };
                out.push(Finding::new(Rule::R1, here(), format!("{what} cell is not Locked+Hidden")));
            }
            if input && cell.format != CellProtectionFormat::INPUT {
                out.push(Finding::new(Rule::R2, here(), "data-entry cell is not unLocked+unHidden"));
            }
            if !cell.format.locked && cell.format.hidden {
                out.push(Finding::new(Rule::R8, here(), "cell is unLocked+Hidden"));
            }
        }
    }

    out.extend(evasion_scan(wb));

    if !wb.protection.structure {
        out.push(Finding::new(Rule::R6, Location::Workbook, "workbook structure is not protected"));
    }
    if (wb.protection.structure || wb.protection.windows) && wb.protection.password.is_none() {
        out.push(Finding::new(Rule::R7, Location::Workbook, "workbook protection has no password"));
    }
    if wb.has_element_password() {
        out.push(Finding::new(
            Rule::R10,
            Location::Workbook,
            "element passwords fall into 194560 classes and are cracked in seconds",
        ));
    }

    out.sort_by_key(|f| sort_key(wb, f));
    out
}

/// Whether some selectable cell lies in the closed rectangle.
fn any_selectable(sheet: &Sheet, rows: (u32, u32), cols: (u32, u32)) -> bool {
    let selectable = |f| ProtectionCapability::derive(&sheet.protection, f).selectable;
    let area = u64::from(rows.1 - rows.0 + 1) * u64::from(cols.1 - cols.0 + 1);
    let mut explicit = 0u64;
    let inside = sheet.cells().filter(|(c, _)| {
        (rows.0..=rows.1).contains(&c.row) && (cols.0..=cols.1).contains(&c.col)
    });
    for (_, cell) in inside {
        if selectable(cell.format) {
            return true;
        }
        explicit += 1;
    }
    selectable(sheet.default_format) && explicit < area
}

/// R9 for every formula cell on a visible sheet that some rectangle between
/// two selectable cells covers and whose copy reveals its source. Each corner
/// pair is either top-left with bottom-right or top-right with bottom-left,
/// so a cell is exposed iff both quadrants of one diagonal hold a selectable
/// cell.
pub fn evasion_scan(wb: &Workbook) -> Vec<Finding> {
    let mut out = Vec::new();
    for sheet in wb.sheets() {
        if sheet.visibility != SheetVisibility::Visible {
            continue;
        }
        for (Coord { row, col }, cell) in sheet.cells() {
            if !cell.content.is_formula()
                || !ProtectionCapability::derive(&sheet.protection, cell.format).copy_reveals_contents
            {
                continue;
            }
            let (up, down) = ((1, row), (row, MAX_INDEX));
            let (left, right) = ((1, col), (col, MAX_INDEX));
            let exposed = (any_selectable(sheet, up, left) && any_selectable(sheet, down, right))
                || (any_selectable(sheet, up, right) && any_selectable(sheet, down, left));
            if exposed {
                out.push(Finding::new(
                    Rule::R9,
                    Location::Cell(CellAddress::from_coord(sheet.name(), Coord { row, col })),
                    "formula source is revealed by copying a rectangle between selectable cells",
                ));
            }
        }
    }
    out
}

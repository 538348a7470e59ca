//! Local protection model: capabilities, navigation, copy, structure gating.
//!
//! `Actor::Programmer` stands for the macro/programmer API. It may change
//! formats under protection, manage very-hidden sheets and bypass structure
//! protection, but still needs a password to lift a password-guarded setting.

use thiserror::Error;

use crate::address::{CellAddress, Coord, Rect, MAX_INDEX};
use crate::engine::{data_entry_cells, recalculate};
use crate::passwords::{ElementPasswordRecord, PasswordRecord};
use crate::workbook::{
    CellContent, CellProtectionFormat, Sheet, SheetProtection, SheetVisibility, Workbook, WorkbookError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Actor {
    Programmer,
    User,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtectionError {
    #[error("sheet `{0}` is not visible")]
    SheetNotVisible(String),
    #[error("sheet `{0}` has no unlocked cells to move between")]
    NoUnlockedCells(String),
    #[error("the Protection tab is unavailable while `{0}` is protected")]
    ProtectionTabUnavailable(String),
    #[error("selection corner {0} is not selectable")]
    CornerNotSelectable(CellAddress),
    #[error("workbook structure is protected")]
    StructureProtected,
    #[error("sheet `{0}` cannot be listed or unhidden by a user")]
    VeryHiddenNotListable(String),
    #[error("wrong password")]
    WrongPassword,
    #[error("workbook windows are protected")]
    WindowsProtected,
    #[error("a workbook must keep at least one visible sheet")]
    LastVisibleSheet,
    #[error(transparent)]
    Workbook(#[from] WorkbookError),
}

impl ProtectionError {
    /// Stable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ProtectionError::SheetNotVisible(_) => "SheetNotVisible",
            ProtectionError::NoUnlockedCells(_) => "NoUnlockedCells",
            ProtectionError::ProtectionTabUnavailable(_) => "ProtectionTabUnavailable",
            ProtectionError::CornerNotSelectable(_) => "CornerNotSelectable",
            ProtectionError::StructureProtected => "StructureProtected",
            ProtectionError::VeryHiddenNotListable(_) => "VeryHiddenNotListable",
            ProtectionError::WrongPassword => "WrongPassword",
            ProtectionError::WindowsProtected => "WindowsProtected",
            ProtectionError::LastVisibleSheet => "LastVisibleSheet",
            ProtectionError::Workbook(e) => e.code(),
        }
    }
}

/// What a local user can do with one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProtectionCapability {
    pub selectable: bool,
    pub editable: bool,
    pub contents_visible_normal: bool,
    pub contents_visible_formula_view: bool,
    pub copy_reveals_contents: bool,
}

impl ProtectionCapability {
    pub const UNRESTRICTED: Self = Self {
        selectable: true,
        editable: true,
        contents_visible_normal: true,
        contents_visible_formula_view: true,
        copy_reveals_contents: true,
    };

    pub fn derive(protection: &SheetProtection, format: CellProtectionFormat) -> Self {
        if !protection.enabled {
            return Self::UNRESTRICTED;
        }
        let selectable = if format.locked {
            protection.allow_select_locked
        } else {
            protection.allow_select_unlocked
        };
        Self {
            selectable,
            editable: !format.locked && selectable,
            contents_visible_normal: selectable && !format.hidden,
            contents_visible_formula_view: !format.hidden,
            copy_reveals_contents: !format.hidden,
        }
    }
}

fn visible_sheet<'a>(wb: &'a Workbook, name: &str) -> Result<&'a Sheet, ProtectionError> {
    let sheet = wb.sheet_or_err(name)?;
    if sheet.visibility != SheetVisibility::Visible {
        return Err(ProtectionError::SheetNotVisible(name.to_string()));
    }
    Ok(sheet)
}

pub fn effective_capability(wb: &Workbook, addr: &CellAddress) -> Result<ProtectionCapability, ProtectionError> {
    wb.check_address(addr)?;
    let sheet = visible_sheet(wb, &addr.sheet)?;
    Ok(ProtectionCapability::derive(&sheet.protection, sheet.format_at(addr.coord())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Enter,
    Tab,
    Up,
    Down,
    Left,
    Right,
}

/// Position of a cell in a linear traversal of the whole grid.
fn order_index(c: Coord, column_major: bool) -> u64 {
    let n = u64::from(MAX_INDEX);
    let (major, minor) = if column_major { (c.col, c.row) } else { (c.row, c.col) };
    u64::from(major - 1) * n + u64::from(minor - 1)
}

fn from_order_index(i: u64, column_major: bool) -> Coord {
    let n = u64::from(MAX_INDEX);
    let major = (i / n) as u32 + 1;
    let minor = (i % n) as u32 + 1;
    if column_major {
        Coord { row: minor, col: major }
    } else {
        Coord { row: major, col: minor }
    }
}

/// Next cell the cursor lands on under sheet protection. Tab, Enter and the
/// horizontal arrows move in row-major order, vertical arrows column-major;
/// both wrap at the grid edges. Only unlocked, selectable cells qualify.
pub fn navigate_next(
    wb: &Workbook,
    sheet: &str,
    from: Coord,
    direction: Direction,
) -> Result<Coord, ProtectionError> {
    let s = visible_sheet(wb, sheet)?;
    let qualifies = |f: CellProtectionFormat| {
        let cap = ProtectionCapability::derive(&s.protection, f);
        cap.selectable && (!s.protection.enabled || !f.locked)
    };
    let column_major = matches!(direction, Direction::Up | Direction::Down);
    let backward = matches!(direction, Direction::Up | Direction::Left);
    let total = u64::from(MAX_INDEX) * u64::from(MAX_INDEX);
    let start = order_index(from, column_major);
    let step = |i: u64| if backward { (i + total - 1) % total } else { (i + 1) % total };

    if qualifies(s.default_format) {
        // Every blank cell qualifies, so the walk ends within one step per
        // explicit cell.
        let mut i = step(start);
        for _ in 0..=s.len() {
            let c = from_order_index(i, column_major);
            if qualifies(s.format_at(c)) {
                return Ok(c);
            }
            i = step(i);
        }
        return Ok(from);
    }

    let mut keys: Vec<u64> = s
        .cells()
        .filter(|(_, cell)| qualifies(cell.format))
        .map(|(c, _)| order_index(c, column_major))
        .collect();
    if keys.is_empty() {
        return Err(ProtectionError::NoUnlockedCells(sheet.to_string()));
    }
    keys.sort_unstable();
    let next = if backward {
        keys.iter().rev().find(|&&k| k < start).or(keys.last())
    } else {
        keys.iter().find(|&&k| k > start).or(keys.first())
    };
    Ok(from_order_index(*next.expect("nonempty"), column_major))
}

/// Format change through the Format Cells dialog (user) or the programmer API.
pub fn set_protection_format(
    wb: &mut Workbook,
    addr: &CellAddress,
    format: CellProtectionFormat,
    actor: Actor,
) -> Result<(), ProtectionError> {
    wb.check_address(addr)?;
    if actor == Actor::User {
        let sheet = visible_sheet(wb, &addr.sheet)?;
        if sheet.protection.enabled {
            return Err(ProtectionError::ProtectionTabUnavailable(addr.sheet.clone()));
        }
    }
    wb.set_format(addr, format)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipboardCell {
    pub addr: CellAddress,
    pub text: String,
    /// True when `text` is the cell's source rather than its displayed value.
    pub source: bool,
}

/// What a user's copy puts on the clipboard; blank cells are omitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipboardPayload {
    pub rect: Rect,
    pub cells: Vec<ClipboardCell>,
}

impl ClipboardPayload {
    pub fn contains_text(&self, needle: &str) -> bool {
        self.cells.iter().any(|c| c.text.contains(needle))
    }

    /// One `address<TAB>text` line per non-blank cell.
    pub fn to_lines(&self) -> String {
        self.cells
            .iter()
            .map(|c| format!("{}\t{}\n", c.addr, c.text))
            .collect()
    }
}

/// User copy of a rectangle spanned by two selectable corners. Cells inside
/// need not be selectable themselves; unhidden formula cells paste as source.
pub fn copy_range(wb: &Workbook, rect: &Rect) -> Result<ClipboardPayload, ProtectionError> {
    let sheet = visible_sheet(wb, &rect.sheet)?;
    let corners = [
        rect.top_left,
        rect.bottom_right,
        Coord {
            row: rect.top_left.row,
            col: rect.bottom_right.col,
        },
        Coord {
            row: rect.bottom_right.row,
            col: rect.top_left.col,
        },
    ];
    let selectable = |c: Coord| ProtectionCapability::derive(&sheet.protection, sheet.format_at(c)).selectable;
    // Either diagonal pair can anchor the drag.
    let main = selectable(corners[0]) && selectable(corners[1]);
    let anti = selectable(corners[2]) && selectable(corners[3]);
    if !main && !anti {
        let bad = corners[..2]
            .iter()
            .chain(&corners[2..])
            .find(|c| !selectable(**c))
            .copied()
            .expect("some corner is unselectable");
        return Err(ProtectionError::CornerNotSelectable(CellAddress::from_coord(
            rect.sheet.clone(),
            bad,
        )));
    }

    let values = recalculate(wb);
    let mut cells = Vec::new();
    for row in rect.rows() {
        for (coord, cell) in sheet.row_span(row, rect.top_left.col, rect.bottom_right.col) {
            if cell.content.is_empty() {
                continue;
            }
            let addr = CellAddress::from_coord(rect.sheet.clone(), coord);
            let reveals = ProtectionCapability::derive(&sheet.protection, cell.format).copy_reveals_contents;
            let (text, source) = match &cell.content {
                CellContent::Formula(f) if reveals => (f.source().to_string(), true),
                CellContent::Literal(l) if reveals => (l.source(), true),
                _ => (values.display(&addr), false),
            };
            cells.push(ClipboardCell { addr, text, source });
        }
    }
    Ok(ClipboardPayload {
        rect: rect.clone(),
        cells,
    })
}

/// Sheets as shown in the user's Unhide dialog and tab bar.
pub fn list_sheets(wb: &Workbook, actor: Actor) -> Vec<(String, SheetVisibility)> {
    wb.sheets()
        .iter()
        .filter(|s| actor == Actor::Programmer || s.visibility != SheetVisibility::VeryHidden)
        .map(|s| (s.name().to_string(), s.visibility))
        .collect()
}

fn check_structure(wb: &Workbook, actor: Actor) -> Result<(), ProtectionError> {
    if actor == Actor::User && wb.protection.structure {
        return Err(ProtectionError::StructureProtected);
    }
    Ok(())
}

/// Users cannot even name a very-hidden sheet.
fn discoverable<'a>(wb: &'a Workbook, name: &str, actor: Actor) -> Result<&'a Sheet, ProtectionError> {
    let sheet = wb.sheet_or_err(name)?;
    if actor == Actor::User && sheet.visibility == SheetVisibility::VeryHidden {
        return Err(ProtectionError::VeryHiddenNotListable(name.to_string()));
    }
    Ok(sheet)
}

fn visible_count(wb: &Workbook) -> usize {
    wb.sheets()
        .iter()
        .filter(|s| s.visibility == SheetVisibility::Visible)
        .count()
}

pub fn add_sheet(wb: &mut Workbook, actor: Actor, name: &str) -> Result<(), ProtectionError> {
    check_structure(wb, actor)?;
    wb.add_sheet(name)?;
    Ok(())
}

pub fn delete_sheet(wb: &mut Workbook, actor: Actor, name: &str) -> Result<(), ProtectionError> {
    check_structure(wb, actor)?;
    let sheet = discoverable(wb, name, actor)?;
    if sheet.visibility == SheetVisibility::Visible && visible_count(wb) == 1 {
        return Err(ProtectionError::LastVisibleSheet);
    }
    wb.remove_sheet(name)?;
    Ok(())
}

pub fn rename_sheet(wb: &mut Workbook, actor: Actor, from: &str, to: &str) -> Result<(), ProtectionError> {
    check_structure(wb, actor)?;
    discoverable(wb, from, actor)?;
    wb.rename_sheet(from, to)?;
    Ok(())
}

pub fn move_sheet(wb: &mut Workbook, actor: Actor, name: &str, index: usize) -> Result<(), ProtectionError> {
    check_structure(wb, actor)?;
    discoverable(wb, name, actor)?;
    wb.move_sheet(name, index)?;
    Ok(())
}

/// Visibility change. Users may toggle Visible and Hidden only; setting or
/// clearing VeryHidden is reserved to the programmer API.
pub fn set_sheet_visibility(
    wb: &mut Workbook,
    actor: Actor,
    name: &str,
    visibility: SheetVisibility,
) -> Result<(), ProtectionError> {
    check_structure(wb, actor)?;
    let sheet = discoverable(wb, name, actor)?;
    if actor == Actor::User && visibility == SheetVisibility::VeryHidden {
        return Err(ProtectionError::VeryHiddenNotListable(name.to_string()));
    }
    if sheet.visibility == SheetVisibility::Visible && visibility != SheetVisibility::Visible && visible_count(wb) == 1
    {
        return Err(ProtectionError::LastVisibleSheet);
    }
    wb.sheet_mut(name).expect("exists").visibility = visibility;
    Ok(())
}

/// Options of the Protect Sheet dialog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SheetOptions {
    pub allow_select_locked: bool,
    pub allow_select_unlocked: bool,
    pub allow_format_cells: bool,
}

impl Default for SheetOptions {
    fn default() -> Self {
        let d = SheetProtection::default();
        Self {
            allow_select_locked: d.allow_select_locked,
            allow_select_unlocked: d.allow_select_unlocked,
            allow_format_cells: d.allow_format_cells,
        }
    }
}

impl SheetOptions {
    /// Only unlocked cells selectable, nothing else permitted.
    pub const UNLOCKED_ONLY: Self = Self {
        allow_select_locked: false,
        allow_select_unlocked: true,
        allow_format_cells: false,
    };
}

fn check_password(record: &Option<PasswordRecord>, password: Option<&str>) -> Result<(), ProtectionError> {
    match record {
        Some(r) if !r.verify(password.unwrap_or("")) => Err(ProtectionError::WrongPassword),
        _ => Ok(()),
    }
}

fn element_record(password: Option<&str>) -> Option<PasswordRecord> {
    password
        .filter(|p| !p.is_empty())
        .map(|p| ElementPasswordRecord::new(p).into())
}

/// Enables protection on a sheet. Re-protecting an already protected sheet
/// requires its current password.
pub fn protect_sheet(
    wb: &mut Workbook,
    actor: Actor,
    name: &str,
    options: SheetOptions,
    password: Option<&str>,
) -> Result<(), ProtectionError> {
    let sheet = discoverable(wb, name, actor)?;
    if sheet.protection.enabled {
        check_password(&sheet.protection.password, password)?;
    }
    wb.sheet_mut(name).expect("exists").protection = SheetProtection {
        enabled: true,
        password: element_record(password),
        allow_select_locked: options.allow_select_locked,
        allow_select_unlocked: options.allow_select_unlocked,
        allow_format_cells: options.allow_format_cells,
    };
    Ok(())
}

pub fn unprotect_sheet(wb: &mut Workbook, actor: Actor, name: &str, password: Option<&str>) -> Result<(), ProtectionError> {
    let sheet = discoverable(wb, name, actor)?;
    check_password(&sheet.protection.password, password)?;
    let p = &mut wb.sheet_mut(name).expect("exists").protection;
    p.enabled = false;
    p.password = None;
    Ok(())
}

pub fn protect_workbook(
    wb: &mut Workbook,
    structure: bool,
    windows: bool,
    password: Option<&str>,
) -> Result<(), ProtectionError> {
    if wb.protection.structure || wb.protection.windows {
        check_password(&wb.protection.password, password)?;
    }
    wb.protection.structure = structure;
    wb.protection.windows = windows;
    wb.protection.password = element_record(password);
    Ok(())
}

pub fn unprotect_workbook(wb: &mut Workbook, password: Option<&str>) -> Result<(), ProtectionError> {
    check_password(&wb.protection.password, password)?;
    wb.protection.structure = false;
    wb.protection.windows = false;
    wb.protection.password = None;
    Ok(())
}

/// Window geometry is not modelled; only the gate is.
pub fn resize_window(wb: &Workbook, actor: Actor) -> Result<(), ProtectionError> {
    if actor == Actor::User && wb.protection.windows {
        return Err(ProtectionError::WindowsProtected);
    }
    Ok(())
}

/// The recommended protection recipe in one command:
///
/// 1. formulas and blank cells Locked+Hidden, data-entry cells unLocked and
///    unHidden, other literals Locked;
/// 2. every sheet protected with only "select unlocked cells" permitted;
/// 3. visible sheets without unlocked cells hidden (one sheet always stays
///    visible);
/// 4. workbook structure protected;
/// 5. every protection guarded by `password`.
///
/// Existing passwords must match `password`.
pub fn apply_recommended(wb: &mut Workbook, password: &str) -> Result<(), ProtectionError> {
    if wb.protection.structure || wb.protection.windows {
        check_password(&wb.protection.password, Some(password))?;
    }
    for s in wb.sheets() {
        if s.protection.enabled {
            check_password(&s.protection.password, Some(password))?;
        }
    }

    let inputs = data_entry_cells(wb);
    let names: Vec<String> = wb.sheets().iter().map(|s| s.name().to_string()).collect();
    for name in &names {
        let sheet = wb.sheet_mut(name).expect("exists");
        sheet.default_format = CellProtectionFormat::LOCKED_HIDDEN;
        for (coord, cell) in sheet.cells_mut() {
            let addr = CellAddress::from_coord(name.clone(), coord);
            cell.format = if inputs.contains(&addr) {
                CellProtectionFormat::INPUT
            } else if cell.content.is_literal() {
                CellProtectionFormat::default()
            } else {
                CellProtectionFormat::LOCKED_HIDDEN
            };
        }
        sheet.protection = SheetProtection {
            enabled: true,
            password: element_record(Some(password)),
            allow_select_locked: false,
            allow_select_unlocked: true,
            allow_format_cells: false,
        };
    }

    for name in &names {
        let sheet = wb.sheet(name).expect("exists");
        let has_unlocked = sheet.cells().any(|(_, c)| !c.format.locked);
        if sheet.visibility == SheetVisibility::Visible && !has_unlocked && visible_count(wb) > 1 {
            wb.sheet_mut(name).expect("exists").visibility = SheetVisibility::Hidden;
        }
    }

    wb.protection.structure = true;
    wb.protection.password = element_record(Some(password));
    Ok(())
}

//! Workbook, sheet and cell model.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::address::{validate_sheet_name, AddressError, CellAddress, Coord};
use crate::formula::{parse_formula, Expr, FormulaError};
use crate::passwords::{OpenFilePasswordRecord, PasswordRecord};
use crate::value::format_number;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkbookError {
    #[error("unknown address `{0}`")]
    UnknownAddress(String),
    #[error("unknown sheet `{0}`")]
    UnknownSheet(String),
    #[error("sheet `{0}` already exists")]
    DuplicateSheet(String),
    #[error(transparent)]
    Address(#[from] AddressError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

impl WorkbookError {
    /// Stable error code.
    pub fn code(&self) -> &'static str {
        match self {
            WorkbookError::UnknownAddress(_) | WorkbookError::UnknownSheet(_) | WorkbookError::Address(_) => {
                "UnknownAddress"
            }
            WorkbookError::DuplicateSheet(_) => "DuplicateSheet",
            WorkbookError::Formula(_) => "SyntaxError",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Text(String),
}

impl Literal {
    pub fn source(&self) -> String {
        match self {
            Literal::Number(n) => format_number(*n),
            Literal::Text(t) => t.clone(),
        }
    }
}

/// Formula source text together with its parsed form.
#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    source: String,
    expr: Expr,
}

impl Formula {
    pub fn parse(source: &str) -> Result<Self, FormulaError> {
        Ok(Self {
            expr: parse_formula(source)?,
            source: source.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum CellContent {
    #[default]
    Empty,
    Literal(Literal),
    Formula(Formula),
}

impl CellContent {
    /// Interprets typed input: `=` starts a formula, plain decimals are
    /// numbers, anything else is text.
    pub fn from_input(input: &str) -> Result<Self, FormulaError> {
        if input.is_empty() {
            return Ok(CellContent::Empty);
        }
        if input.starts_with('=') {
            return Ok(CellContent::Formula(Formula::parse(input)?));
        }
        Ok(CellContent::Literal(
            match crate::formula::parse_numeric_text(input) {
                Some(n) if input.trim() == input => Literal::Number(n),
                _ => Literal::Text(input.to_string()),
            },
        ))
    }

    /// The text a user would see in the formula bar.
    pub fn source(&self) -> String {
        match self {
            CellContent::Empty => String::new(),
            CellContent::Literal(l) => l.source(),
            CellContent::Formula(f) => f.source.clone(),
        }
    }

    pub fn is_formula(&self) -> bool {
        matches!(self, CellContent::Formula(_))
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, CellContent::Literal(_))
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, CellContent::Empty)
    }

    pub fn formula(&self) -> Option<&Formula> {
        match self {
            CellContent::Formula(f) => Some(f),
            _ => None,
        }
    }
}

/// Per-cell Locked/Hidden bits. Only take effect under sheet protection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellProtectionFormat {
    pub locked: bool,
    pub hidden: bool,
}

impl CellProtectionFormat {
    pub const LOCKED_HIDDEN: Self = Self {
        locked: true,
        hidden: true,
    };
    pub const INPUT: Self = Self {
        locked: false,
        hidden: false,
    };
}

impl Default for CellProtectionFormat {
    fn default() -> Self {
        Self {
            locked: true,
            hidden: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cell {
    pub content: CellContent,
    pub format: CellProtectionFormat,
    /// Replaced by its displayed value during a flattening export.
    pub flattened: bool,
    /// Tagged by the programmer as a data-entry field.
    pub input: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SheetVisibility {
    #[default]
    Visible,
    Hidden,
    VeryHidden,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SheetProtection {
    pub enabled: bool,
    pub password: Option<PasswordRecord>,
    pub allow_select_locked: bool,
    pub allow_select_unlocked: bool,
    pub allow_format_cells: bool,
}

impl Default for SheetProtection {
    fn default() -> Self {
        Self {
            enabled: false,
            password: None,
            allow_select_locked: true,
            allow_select_unlocked: true,
            allow_format_cells: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorkbookProtection {
    pub structure: bool,
    pub windows: bool,
    pub password: Option<PasswordRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sheet {
    name: String,
    pub visibility: SheetVisibility,
    pub protection: SheetProtection,
    /// Format of every cell without an explicit entry.
    pub default_format: CellProtectionFormat,
    cells: BTreeMap<Coord, Cell>,
}

impl Sheet {
    pub fn new(name: impl Into<String>) -> Result<Self, WorkbookError> {
        let name = name.into();
        validate_sheet_name(&name)?;
        Ok(Self {
            name,
            visibility: SheetVisibility::Visible,
            protection: SheetProtection::default(),
            default_format: CellProtectionFormat::default(),
            cells: BTreeMap::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub(crate) fn set_name(&mut self, name: String) {
        self.name = name;
    }

    pub fn cell(&self, coord: Coord) -> Option<&Cell> {
        self.cells.get(&coord)
    }

    pub fn cell_mut(&mut self, coord: Coord) -> Option<&mut Cell> {
        self.cells.get_mut(&coord)
    }

    /// Explicit entry for `coord`, created with the sheet default format.
    pub fn entry(&mut self, coord: Coord) -> &mut Cell {
        let default_format = self.default_format;
        self.cells.entry(coord).or_insert_with(|| Cell {
            format: default_format,
            ..Cell::default()
        })
    }

    pub fn remove_cell(&mut self, coord: Coord) -> Option<Cell> {
        self.cells.remove(&coord)
    }

    /// Explicit cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (Coord, &Cell)> {
        self.cells.iter().map(|(c, cell)| (*c, cell))
    }

    pub fn cells_mut(&mut self) -> impl Iterator<Item = (Coord, &mut Cell)> {
        self.cells.iter_mut().map(|(c, cell)| (*c, cell))
    }

    /// Explicit cells in one row between two columns, inclusive.
    pub fn row_span(&self, row: u32, from_col: u32, to_col: u32) -> impl Iterator<Item = (Coord, &Cell)> {
        self.cells
            .range(Coord { row, col: from_col }..=Coord { row, col: to_col })
            .map(|(c, cell)| (*c, cell))
    }

    pub fn format_at(&self, coord: Coord) -> CellProtectionFormat {
        self.cells
            .get(&coord)
            .map_or(self.default_format, |c| c.format)
    }

    pub fn content_at(&self, coord: Coord) -> &CellContent {
        static EMPTY: CellContent = CellContent::Empty;
        self.cells.get(&coord).map_or(&EMPTY, |c| &c.content)
    }

    pub fn has_formulas(&self) -> bool {
        self.cells.values().any(|c| c.content.is_formula())
    }

    /// Number of explicit cells.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// The programmer-level model; user-facing operations live in `protection`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workbook {
    sheets: Vec<Sheet>,
    pub protection: WorkbookProtection,
    pub open_password: Option<OpenFilePasswordRecord>,
}

impl Workbook {
    /// A workbook with a single empty `Sheet1`.
    pub fn new() -> Self {
        Self::with_sheets(["Sheet1"]).expect("valid name")
    }

    pub fn with_sheets<I, S>(names: I) -> Result<Self, WorkbookError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut wb = Self::default();
        for name in names {
            wb.add_sheet(name)?;
        }
        Ok(wb)
    }

    pub fn sheets(&self) -> &[Sheet] {
        &self.sheets
    }

    pub fn sheets_mut(&mut self) -> impl Iterator<Item = &mut Sheet> {
        self.sheets.iter_mut()
    }

    pub fn sheet_index(&self, name: &str) -> Option<usize> {
        self.sheets.iter().position(|s| s.name == name)
    }

    pub fn sheet(&self, name: &str) -> Option<&Sheet> {
        self.sheets.iter().find(|s| s.name == name)
    }

    pub fn sheet_mut(&mut self, name: &str) -> Option<&mut Sheet> {
        self.sheets.iter_mut().find(|s| s.name == name)
    }

    pub fn sheet_or_err(&self, name: &str) -> Result<&Sheet, WorkbookError> {
        self.sheet(name)
            .ok_or_else(|| WorkbookError::UnknownSheet(name.to_string()))
    }

    pub fn sheet_mut_or_err(&mut self, name: &str) -> Result<&mut Sheet, WorkbookError> {
        self.sheet_mut(name)
            .ok_or_else(|| WorkbookError::UnknownSheet(name.to_string()))
    }

    pub fn add_sheet(&mut self, name: impl Into<String>) -> Result<&mut Sheet, WorkbookError> {
        let sheet = Sheet::new(name)?;
        if self.sheet_index(&sheet.name).is_some() {
            return Err(WorkbookError::DuplicateSheet(sheet.name));
        }
        self.sheets.push(sheet);
        Ok(self.sheets.last_mut().expect("just pushed"))
    }

    /// Formula references to the removed sheet evaluate to `#NAME?`.
    pub fn remove_sheet(&mut self, name: &str) -> Result<Sheet, WorkbookError> {
        let idx = self
            .sheet_index(name)
            .ok_or_else(|| WorkbookError::UnknownSheet(name.to_string()))?;
        Ok(self.sheets.remove(idx))
    }

    /// Formula text is not rewritten; references under the old name break.
    pub fn rename_sheet(&mut self, from: &str, to: &str) -> Result<(), WorkbookError> {
        validate_sheet_name(to)?;
        if from != to && self.sheet_index(to).is_some() {
            return Err(WorkbookError::DuplicateSheet(to.to_string()));
        }
        self.sheet_mut_or_err(from)?.set_name(to.to_string());
        Ok(())
    }

    pub fn move_sheet(&mut self, name: &str, index: usize) -> Result<(), WorkbookError> {
        let idx = self
            .sheet_index(name)
            .ok_or_else(|| WorkbookError::UnknownSheet(name.to_string()))?;
        let sheet = self.sheets.remove(idx);
        let index = index.min(self.sheets.len());
        self.sheets.insert(index, sheet);
        Ok(())
    }

    /// Resolves an address to its sheet, failing for unknown sheets.
    pub fn check_address(&self, addr: &CellAddress) -> Result<&Sheet, WorkbookError> {
        Coord::new(addr.col, addr.row)
            .map_err(|_| WorkbookError::UnknownAddress(addr.to_string()))?;
        self.sheet(&addr.sheet)
            .ok_or_else(|| WorkbookError::UnknownAddress(addr.to_string()))
    }

    pub fn cell(&self, addr: &CellAddress) -> Option<&Cell> {
        self.sheet(&addr.sheet)?.cell(addr.coord())
    }

    pub fn content(&self, addr: &CellAddress) -> Option<&CellContent> {
        self.cell(addr).map(|c| &c.content)
    }

    pub fn format_at(&self, addr: &CellAddress) -> Result<CellProtectionFormat, WorkbookError> {
        Ok(self.check_address(addr)?.format_at(addr.coord()))
    }

    /// Sets content from typed input, keeping the cell's protection format.
    pub fn set_cell(&mut self, addr: &CellAddress, input: &str) -> Result<(), WorkbookError> {
        let content = CellContent::from_input(input)?;
        self.set_content(addr, content)
    }

    pub fn set_content(&mut self, addr: &CellAddress, content: CellContent) -> Result<(), WorkbookError> {
        self.check_address(addr)?;
        let sheet = self.sheet_mut(&addr.sheet).expect("checked");
        let coord = addr.coord();
        if content.is_empty() {
            let redundant = sheet
                .cell(coord)
                .is_some_and(|c| c.format == sheet.default_format && !c.input);
            if redundant {
                sheet.remove_cell(coord);
                return Ok(());
            }
            if sheet.cell(coord).is_none() {
                return Ok(());
            }
        }
        let cell = sheet.entry(coord);
        cell.content = content;
        cell.flattened = false;
        Ok(())
    }

    /// Programmer-level format change; ignores sheet protection.
    pub fn set_format(&mut self, addr: &CellAddress, format: CellProtectionFormat) -> Result<(), WorkbookError> {
        self.check_address(addr)?;
        self.sheet_mut(&addr.sheet)
            .expect("checked")
            .entry(addr.coord())
            .format = format;
        Ok(())
    }

    pub fn set_input_tag(&mut self, addr: &CellAddress, input: bool) -> Result<(), WorkbookError> {
        self.check_address(addr)?;
        self.sheet_mut(&addr.sheet)
            .expect("checked")
            .entry(addr.coord())
            .input = input;
        Ok(())
    }

    /// Every explicit cell as `(address, cell)`, sheet order then row-major.
    pub fn all_cells(&self) -> impl Iterator<Item = (CellAddress, &Cell)> {
        self.sheets.iter().flat_map(|s| {
            s.cells()
                .map(move |(c, cell)| (CellAddress::from_coord(s.name.clone(), c), cell))
        })
    }

    /// Any element password set on a sheet or on the workbook.
    pub fn has_element_password(&self) -> bool {
        self.protection.password.is_some()
            || self.sheets.iter().any(|s| s.protection.password.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> CellAddress {
        s.parse().unwrap()
    }

    #[test]
    fn new_cells_default_to_locked_unhidden() {
        let mut wb = Workbook::new();
        wb.set_cell(&a("Sheet1!B2"), "hello").unwrap();
        let cell = wb.cell(&a("Sheet1!B2")).unwrap();
        assert_eq!(cell.format, CellProtectionFormat { locked: true, hidden: false });
        assert_eq!(
            wb.format_at(&a("Sheet1!Z99")).unwrap(),
            CellProtectionFormat::default()
        );
    }

    #[test]
    fn input_classification() {
        assert_eq!(CellContent::from_input("").unwrap(), CellContent::Empty);
        assert_eq!(
            CellContent::from_input("5").unwrap(),
            CellContent::Literal(Literal::Number(5.0))
        );
        assert_eq!(
            CellContent::from_input("inf").unwrap(),
            CellContent::Literal(Literal::Text("inf".into()))
        );
        assert_eq!(
            CellContent::from_input(" 5").unwrap(),
            CellContent::Literal(Literal::Text(" 5".into()))
        );
        assert!(CellContent::from_input("=1+").is_err());
        let f = CellContent::from_input("=A1*2").unwrap();
        assert_eq!(f.source(), "=A1*2");
        assert_eq!(
            parse_formula(&f.source()).unwrap(),
            *f.formula().unwrap().expr()
        );
    }

    #[test]
    fn clearing_a_default_cell_removes_it() {
        let mut wb = Workbook::new();
        wb.set_cell(&a("Sheet1!A1"), "1").unwrap();
        wb.set_cell(&a("Sheet1!A1"), "").unwrap();
        assert!(wb.sheet("Sheet1").unwrap().is_empty());

        wb.set_format(&a("Sheet1!A2"), CellProtectionFormat::INPUT).unwrap();
        wb.set_cell(&a("Sheet1!A2"), "").unwrap();
        assert_eq!(wb.sheet("Sheet1").unwrap().len(), 1);
    }

    #[test]
    fn sheet_management() {
        let mut wb = Workbook::with_sheets(["A", "B"]).unwrap();
        assert!(matches!(wb.add_sheet("A"), Err(WorkbookError::DuplicateSheet(_))));
        assert!(wb.add_sheet("").is_err());
        wb.move_sheet("B", 0).unwrap();
        assert_eq!(wb.sheets()[0].name(), "B");
        wb.rename_sheet("B", "C").unwrap();
        assert!(wb.rename_sheet("C", "A").is_err());
        assert!(matches!(
            wb.set_cell(&a("Nope!A1"), "1"),
            Err(WorkbookError::UnknownAddress(_))
        ));
    }
}

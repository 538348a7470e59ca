//! Cell addresses and rectangles in `Sheet!A1` notation.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest row or column index on a sheet.
pub const MAX_INDEX: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("malformed address `{0}`")]
    Malformed(String),
    #[error("address `{0}` is outside the 1..=10000 grid")]
    OutOfRange(String),
    #[error("invalid sheet name `{0}`")]
    InvalidSheetName(String),
}

/// Sheet names must be nonempty and free of control characters.
pub fn validate_sheet_name(name: &str) -> Result<(), AddressError> {
    if name.is_empty() || name.chars().any(char::is_control) {
        return Err(AddressError::InvalidSheetName(name.to_string()));
    }
    Ok(())
}

/// A sheet name can be written bare when it looks like an identifier.
pub(crate) fn is_bare_sheet_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Writes a sheet name, quoting it with `'...'` when it is not bare.
pub fn format_sheet_name(name: &str) -> String {
    if is_bare_sheet_name(name) {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}

/// `1 -> A`, `27 -> AA`.
pub fn column_letters(mut col: u32) -> String {
    let mut out = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        out.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Position of a cell within a sheet; row-major ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub row: u32,
    pub col: u32,
}

impl Coord {
    pub fn new(col: u32, row: u32) -> Result<Self, AddressError> {
        if col == 0 || row == 0 || col > MAX_INDEX || row > MAX_INDEX {
            return Err(AddressError::OutOfRange(format!(
                "{}{}",
                column_letters(col),
                row
            )));
        }
        Ok(Self { row, col })
    }

    /// Parses a bare `A1` reference (case-insensitive column letters).
    pub fn parse(text: &str) -> Result<Self, AddressError> {
        let bad = || AddressError::Malformed(text.to_string());
        let split = text
            .find(|c: char| !c.is_ascii_alphabetic())
            .ok_or_else(bad)?;
        let (letters, digits) = text.split_at(split);
        if letters.is_empty()
            || letters.len() > 3
            || digits.is_empty()
            || digits.len() > 5
            || !digits.bytes().all(|b| b.is_ascii_digit())
            || digits.starts_with('0')
        {
            return Err(bad());
        }
        let col = letters
            .bytes()
            .fold(0u32, |acc, b| acc * 26 + u32::from(b.to_ascii_uppercase() - b'A' + 1));
        let row: u32 = digits.parse().map_err(|_| bad())?;
        Coord::new(col, row).map_err(|_| AddressError::OutOfRange(text.to_string()))
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", column_letters(self.col), self.row)
    }
}

/// A fully qualified cell address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddress {
    pub sheet: String,
    pub col: u32,
    pub row: u32,
}

impl CellAddress {
    pub fn new(sheet: impl Into<String>, col: u32, row: u32) -> Result<Self, AddressError> {
        let sheet = sheet.into();
        validate_sheet_name(&sheet)?;
        Coord::new(col, row)?;
        Ok(Self { sheet, col, row })
    }

    pub fn from_coord(sheet: impl Into<String>, coord: Coord) -> Self {
        Self {
            sheet: sheet.into(),
            col: coord.col,
            row: coord.row,
        }
    }

    pub fn coord(&self) -> Coord {
        Coord {
            row: self.row,
            col: self.col,
        }
    }

    /// Parses `Sheet!A1`, or a bare `A1` resolved against `default_sheet`.
    pub fn parse_with_default(text: &str, default_sheet: &str) -> Result<Self, AddressError> {
        match split_sheet(text)? {
            (Some(sheet), rest) => Ok(Self::from_coord(sheet, Coord::parse(rest)?)),
            (None, rest) => Ok(Self::from_coord(default_sheet, Coord::parse(rest)?)),
        }
    }
}

/// Splits an optional `Sheet!` or `'Quoted sheet'!` prefix off `text`.
pub(crate) fn split_sheet(text: &str) -> Result<(Option<String>, &str), AddressError> {
    let bad = || AddressError::Malformed(text.to_string());
    if let Some(quoted) = text.strip_prefix('\'') {
        let mut name = String::new();
        let mut chars = quoted.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if c == '\'' {
                if let Some((_, '\'')) = chars.peek() {
                    chars.next();
                    name.push('\'');
                    continue;
                }
                let rest = &quoted[i + 1..];
                let rest = rest.strip_prefix('!').ok_or_else(bad)?;
                validate_sheet_name(&name)?;
                return Ok((Some(name), rest));
            }
            name.push(c);
        }
        return Err(bad());
    }
    match text.rfind('!') {
        Some(i) => {
            let name = &text[..i];
            if !is_bare_sheet_name(name) {
                return Err(bad());
            }
            Ok((Some(name.to_string()), &text[i + 1..]))
        }
        None => Ok((None, text)),
    }
}

impl FromStr for CellAddress {
    type Err = AddressError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        match split_sheet(text)? {
            (Some(sheet), rest) => Ok(Self::from_coord(sheet, Coord::parse(rest)?)),
            (None, _) => Err(AddressError::Malformed(text.to_string())),
        }
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}!{}{}",
            format_sheet_name(&self.sheet),
            column_letters(self.col),
            self.row
        )
    }
}

/// An axis-aligned rectangle on one sheet, normalised so `top_left <= bottom_right`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rect {
    pub sheet: String,
    pub top_left: Coord,
    pub bottom_right: Coord,
}

impl Rect {
    pub fn spanning(sheet: impl Into<String>, a: Coord, b: Coord) -> Self {
        Self {
            sheet: sheet.into(),
            top_left: Coord {
                row: a.row.min(b.row),
                col: a.col.min(b.col),
            },
            bottom_right: Coord {
                row: a.row.max(b.row),
                col: a.col.max(b.col),
            },
        }
    }

    /// Parses `A1:C3` or `Sheet!A1:C3`; a bare range uses `default_sheet`.
    pub fn parse_with_default(text: &str, default_sheet: &str) -> Result<Self, AddressError> {
        let (sheet, rest) = split_sheet(text)?;
        let sheet = sheet.unwrap_or_else(|| default_sheet.to_string());
        let (a, b) = match rest.split_once(':') {
            Some((a, b)) => (Coord::parse(a)?, Coord::parse(b)?),
            None => {
                let c = Coord::parse(rest)?;
                (c, c)
            }
        };
        Ok(Self::spanning(sheet, a, b))
    }

    pub fn contains(&self, coord: Coord) -> bool {
        (self.top_left.row..=self.bottom_right.row).contains(&coord.row)
            && (self.top_left.col..=self.bottom_right.col).contains(&coord.col)
    }

    pub fn rows(&self) -> std::ops::RangeInclusive<u32> {
        self.top_left.row..=self.bottom_right.row
    }

    pub fn cols(&self) -> std::ops::RangeInclusive<u32> {
        self.top_left.col..=self.bottom_right.col
    }

    pub fn cell_count(&self) -> u64 {
        u64::from(self.bottom_right.row - self.top_left.row + 1)
            * u64::from(self.bottom_right.col - self.top_left.col + 1)
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}!{}:{}",
            format_sheet_name(&self.sheet),
            self.top_left,
            self.bottom_right
        )
    }
}

//! The `.pws` workbook file and the users file. Both are strict JSON:
//! unknown fields are rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{AccessClass, GrantEvent, Role, SharingAcl};
use crate::address::{CellAddress, Coord};
use crate::passwords::{OpenFilePasswordRecord, PasswordRecord};
use crate::workbook::{
    Cell, CellContent, CellProtectionFormat, Formula, Literal, Sheet, SheetProtection, SheetVisibility, Workbook,
    WorkbookProtection,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PwsError {
    #[error("malformed file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("invalid file: {0}")]
    Invalid(String),
}

fn invalid(msg: impl std::fmt::Display) -> PwsError {
    PwsError::Invalid(msg.to_string())
}

/// A workbook file: the workbook plus, for hosted masters, its ACL.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub workbook: Workbook,
    pub acl: Option<SharingAcl>,
}

impl Document {
    pub fn new(workbook: Workbook) -> Self {
        Self { workbook, acl: None }
    }

    pub fn from_json(text: &str) -> Result<Self, PwsError> {
        let repr: FileRepr = serde_json::from_str(text)?;
        repr.into_document()
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, PwsError> {
        let repr: FileRepr = serde_json::from_slice(bytes)?;
        repr.into_document()
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, PwsError> {
        let repr: FileRepr = serde_json::from_value(value)?;
        repr.into_document()
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(FileRepr::from_document(self)).expect("serializable")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&FileRepr::from_document(self)).expect("serializable");
        s.push('\n');
        s
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRepr {
    version: u32,
    sheets: Vec<SheetRepr>,
    workbook_protection: WorkbookProtectionRepr,
    #[serde(default)]
    acl: Option<AclRepr>,
    #[serde(default)]
    passwords: PasswordsRepr,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SheetRepr {
    name: String,
    visibility: VisibilityRepr,
    #[serde(default)]
    default_format: FormatRepr,
    protection: SheetProtectionRepr,
    cells: Vec<CellRepr>,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum VisibilityRepr {
    Visible,
    Hidden,
    VeryHidden,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormatRepr {
    locked: bool,
    hidden: bool,
}

impl Default for FormatRepr {
    fn default() -> Self {
        CellProtectionFormat::default().into()
    }
}

impl From<CellProtectionFormat> for FormatRepr {
    fn from(f: CellProtectionFormat) -> Self {
        Self {
            locked: f.locked,
            hidden: f.hidden,
        }
    }
}

impl From<FormatRepr> for CellProtectionFormat {
    fn from(f: FormatRepr) -> Self {
        Self {
            locked: f.locked,
            hidden: f.hidden,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SheetProtectionRepr {
    enabled: bool,
    password: Option<PasswordRecord>,
    allow_select_locked: bool,
    allow_select_unlocked: bool,
    allow_format_cells: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkbookProtectionRepr {
    structure: bool,
    windows: bool,
    password: Option<PasswordRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellRepr {
    addr: String,
    content: ContentRepr,
    #[serde(default)]
    format: FormatRepr,
    #[serde(default)]
    flattened: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    input: bool,
}

fn is_false(b: &bool) -> bool {
    !b
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ContentRepr {
    Empty,
    Literal { value: LiteralRepr },
    Formula { source: String },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LiteralRepr {
    Number(f64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AclRepr {
    owner: String,
    #[serde(default)]
    grants: BTreeMap<String, Role>,
    #[serde(default)]
    allow_external_links: bool,
    /// Keyed by qualified address, e.g. `Sheet1!B2`.
    #[serde(default)]
    overrides: BTreeMap<String, AccessClass>,
    #[serde(default)]
    grant_log: Vec<GrantEvent>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PasswordsRepr {
    open: Option<PasswordRecord>,
}

impl FileRepr {
    fn from_document(doc: &Document) -> Self {
        let wb = &doc.workbook;
        Self {
            version: FORMAT_VERSION,
            sheets: wb.sheets().iter().map(SheetRepr::from_sheet).collect(),
            workbook_protection: WorkbookProtectionRepr {
                structure: wb.protection.structure,
                windows: wb.protection.windows,
                password: wb.protection.password.clone(),
            },
            acl: doc.acl.as_ref().map(|acl| AclRepr {
                owner: acl.owner.clone(),
                grants: acl.grants().clone(),
                allow_external_links: acl.allow_external_links,
                overrides: acl.overrides().iter().map(|(a, c)| (a.to_string(), *c)).collect(),
                grant_log: acl.grant_log().to_vec(),
            }),
            passwords: PasswordsRepr {
                open: wb.open_password.clone().map(PasswordRecord::Open),
            },
        }
    }

    fn into_document(self) -> Result<Document, PwsError> {
        if self.version != FORMAT_VERSION {
            return Err(PwsError::Version(self.version));
        }
        let mut wb = Workbook::default();
        for s in self.sheets {
            s.into_sheet(&mut wb)?;
        }
        if wb.sheets().is_empty() {
            return Err(invalid("a workbook needs at least one sheet"));
        }
        let wp = self.workbook_protection;
        wb.protection = WorkbookProtection {
            structure: wp.structure,
            windows: wp.windows,
            password: wp.password,
        };
        wb.open_password = match self.passwords.open {
            None => None,
            Some(PasswordRecord::Open(r)) => Some(r),
            Some(PasswordRecord::Element(_)) => return Err(invalid("the open password must be an open-file record")),
        };
        let acl = match self.acl {
            None => None,
            Some(a) => {
                let mut overrides = BTreeMap::new();
                for (addr, class) in a.overrides {
                    let parsed: CellAddress = addr.parse().map_err(|e| invalid(format!("override `{addr}`: {e}")))?;
                    wb.check_address(&parsed).map_err(invalid)?;
                    overrides.insert(parsed, class);
                }
                Some(
                    SharingAcl::from_parts(a.owner, a.grants, a.allow_external_links, overrides, a.grant_log)
                        .map_err(|e| invalid(format!("acl: {e}")))?,
                )
            }
        };
        Ok(Document { workbook: wb, acl })
    }
}

impl SheetRepr {
    fn from_sheet(s: &Sheet) -> Self {
        Self {
            name: s.name().to_string(),
            visibility: match s.visibility {
                SheetVisibility::Visible => VisibilityRepr::Visible,
                SheetVisibility::Hidden => VisibilityRepr::Hidden,
                SheetVisibility::VeryHidden => VisibilityRepr::VeryHidden,
            },
            default_format: s.default_format.into(),
            protection: SheetProtectionRepr {
                enabled: s.protection.enabled,
                password: s.protection.password.clone(),
                allow_select_locked: s.protection.allow_select_locked,
                allow_select_unlocked: s.protection.allow_select_unlocked,
                allow_format_cells: s.protection.allow_format_cells,
            },
            cells: s
                .cells()
                .map(|(coord, cell)| CellRepr {
                    addr: coord.to_string(),
                    content: match &cell.content {
                        CellContent::Empty => ContentRepr::Empty,
                        CellContent::Literal(Literal::Number(n)) => ContentRepr::Literal {
                            value: LiteralRepr::Number(*n),
                        },
                        CellContent::Literal(Literal::Text(t)) => ContentRepr::Literal {
                            value: LiteralRepr::Text(t.clone()),
                        },
                        CellContent::Formula(f) => ContentRepr::Formula {
                            source: f.source().to_string(),
                        },
                    },
                    format: cell.format.into(),
                    flattened: cell.flattened,
                    input: cell.input,
                })
                .collect(),
        }
    }

    fn into_sheet(self, wb: &mut Workbook) -> Result<(), PwsError> {
        let name = self.name;
        let sheet = wb.add_sheet(name.clone()).map_err(invalid)?;
        sheet.visibility = match self.visibility {
            VisibilityRepr::Visible => SheetVisibility::Visible,
            VisibilityRepr::Hidden => SheetVisibility::Hidden,
            VisibilityRepr::VeryHidden => SheetVisibility::VeryHidden,
        };
        sheet.default_format = self.default_format.into();
        let p = self.protection;
        sheet.protection = SheetProtection {
            enabled: p.enabled,
            password: p.password,
            allow_select_locked: p.allow_select_locked,
            allow_select_unlocked: p.allow_select_unlocked,
            allow_format_cells: p.allow_format_cells,
        };
        for c in self.cells {
            let coord = Coord::parse(&c.addr).map_err(|e| invalid(format!("{name}!{}: {e}", c.addr)))?;
            if sheet.cell(coord).is_some() {
                return Err(invalid(format!("{name}!{} appears twice", c.addr)));
            }
            let content = match c.content {
                ContentRepr::Empty => CellContent::Empty,
                ContentRepr::Literal {
                    value: LiteralRepr::Number(n),
                } => CellContent::Literal(Literal::Number(n)),
                ContentRepr::Literal {
                    value: LiteralRepr::Text(t),
                } => {
                    if t.starts_with('=') {
                        return Err(invalid(format!("{name}!{}: literal text starts with `=`", c.addr)));
                    }
                    CellContent::Literal(Literal::Text(t))
                }
                ContentRepr::Formula { source } => CellContent::Formula(
                    Formula::parse(&source).map_err(|e| invalid(format!("{name}!{}: {e}", c.addr)))?,
                ),
            };
            *sheet.entry(coord) = Cell {
                content,
                format: c.format.into(),
                flattened: c.flattened,
                input: c.input,
            };
        }
        Ok(())
    }
}

/// One login account; passwords are open-file strength.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub user: String,
    pub password: OpenFilePasswordRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserRepr {
    user: String,
    password: PasswordRecord,
}

pub fn parse_users(text: &str) -> Result<Vec<UserRecord>, PwsError> {
    let reprs: Vec<UserRepr> = serde_json::from_str(text)?;
    let mut seen = std::collections::BTreeSet::new();
    reprs
        .into_iter()
        .map(|u| {
            if !seen.insert(u.user.clone()) {
                return Err(invalid(format!("user `{}` listed twice", u.user)));
            }
            match u.password {
                PasswordRecord::Open(password) => Ok(UserRecord { user: u.user, password }),
                PasswordRecord::Element(_) => Err(invalid(format!("user `{}` needs an open-file record", u.user))),
            }
        })
        .collect()
}

pub fn users_to_json(users: &[UserRecord]) -> String {
    let reprs: Vec<UserRepr> = users
        .iter()
        .map(|u| UserRepr {
            user: u.user.clone(),
            password: PasswordRecord::Open(u.password.clone()),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&reprs).expect("serializable");
    s.push('\n');
    s
}

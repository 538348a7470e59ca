//! Hosted sharing: roles, per-cell access classes, redacted views, edit
//! gating, flattened exports and versioned publishing.
//!
//! Redaction happens while the view is built. Protected contents are never
//! copied into a view or export, so serializing one cannot leak them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::{CellAddress, Rect};
use crate::audit::{audit_protection, Finding, Severity};
use crate::engine::{recalculate, Values};
use crate::pws::Document;
use crate::value::Value;
use crate::workbook::{Cell, CellContent, Literal, SheetVisibility, Workbook, WorkbookError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Owner,
    Collaborator,
    Viewer,
    LimitedUser,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Owner => "owner",
            Role::Collaborator => "collaborator",
            Role::Viewer => "viewer",
            Role::LimitedUser => "limited-user",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Role::Owner, Role::Collaborator, Role::Viewer, Role::LimitedUser]
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// Ordered by privilege: `NoAccess < DisplayAccess < FullAccess`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessClass {
    NoAccess,
    DisplayAccess,
    FullAccess,
}

impl fmt::Display for AccessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessClass::NoAccess => "no-access",
            AccessClass::DisplayAccess => "display-access",
            AccessClass::FullAccess => "full-access",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user: String,
    pub authenticated: bool,
}

impl Session {
    pub fn authenticated(user: impl Into<String>) -> Self {
        Self {
            user: user.into(),
            authenticated: true,
        }
    }
}

/// One entry of the sharing log. `role == None` records a revocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrantEvent {
    pub grantor: String,
    pub grantee: String,
    pub role: Option<Role>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingAcl {
    pub owner: String,
    grants: BTreeMap<String, Role>,
    pub allow_external_links: bool,
    overrides: BTreeMap<CellAddress, AccessClass>,
    grant_log: Vec<GrantEvent>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccessError {
    #[error("session is not authenticated")]
    NotAuthenticated,
    #[error("user has no access to this workbook")]
    RevokedAccess,
    #[error("sheet `{0}` is not visible to this role")]
    SheetNotVisibleToRole(String),
    #[error("cell is {0}; editing needs full-access")]
    EditDenied(AccessClass),
    #[error("this role may not enter formulas")]
    FormulaForbidden,
    #[error("external links are not allowed in this workbook")]
    ExternalLinkForbidden,
    #[error("only the owner may do this")]
    NotOwner,
    #[error("the owner's role cannot be changed")]
    CannotDemoteOwner,
    #[error("a workbook has exactly one owner")]
    OwnerUnique,
    #[error("formula cell {0} cannot be given full-access")]
    OverrideRejected(CellAddress),
    #[error("audit failed with {} error finding(s)", .0.len())]
    AuditFailed(Vec<Finding>),
    #[error("no version {0}")]
    UnknownVersion(u64),
    #[error(transparent)]
    Workbook(#[from] WorkbookError),
}

impl AccessError {
    /// Stable error code for the wire protocol.
    pub fn code(&self) -> &'static str {
        match self {
            AccessError::NotAuthenticated => "NotAuthenticated",
            AccessError::RevokedAccess => "RevokedAccess",
            AccessError::SheetNotVisibleToRole(_) => "SheetNotVisibleToRole",
            AccessError::EditDenied(_) => "EditDenied",
            AccessError::FormulaForbidden => "FormulaForbidden",
            AccessError::ExternalLinkForbidden => "ExternalLinkForbidden",
            AccessError::NotOwner => "NotOwner",
            AccessError::CannotDemoteOwner => "CannotDemoteOwner",
            AccessError::OwnerUnique => "OwnerUnique",
            AccessError::OverrideRejected(_) => "OverrideRejected",
            AccessError::AuditFailed(_) => "AuditFailed",
            AccessError::UnknownVersion(_) => "UnknownVersion",
            AccessError::Workbook(e) => e.code(),
        }
    }
}

impl SharingAcl {
    pub fn new(owner: impl Into<String>) -> Self {
        Self {
            owner: owner.into(),
            grants: BTreeMap::new(),
            allow_external_links: false,
            overrides: BTreeMap::new(),
            grant_log: Vec::new(),
        }
    }

    /// Rebuilds an ACL from stored parts; the owner never appears in `grants`.
    pub fn from_parts(
        owner: String,
        grants: BTreeMap<String, Role>,
        allow_external_links: bool,
        overrides: BTreeMap<CellAddress, AccessClass>,
        grant_log: Vec<GrantEvent>,
    ) -> Result<Self, AccessError> {
        if grants.contains_key(&owner) {
            return Err(AccessError::CannotDemoteOwner);
        }
        if grants.values().any(|r| *r == Role::Owner) {
            return Err(AccessError::OwnerUnique);
        }
        if grant_log.iter().any(|e| e.grantor != owner) {
            return Err(AccessError::NotOwner);
        }
        Ok(Self {
            owner,
            grants,
            allow_external_links,
            overrides,
            grant_log,
        })
    }

    pub fn role_of(&self, user: &str) -> Option<Role> {
        if user == self.owner {
            Some(Role::Owner)
        } else {
            self.grants.get(user).copied()
        }
    }

    pub fn grants(&self) -> &BTreeMap<String, Role> {
        &self.grants
    }

    pub fn overrides(&self) -> &BTreeMap<CellAddress, AccessClass> {
        &self.overrides
    }

    pub fn grant_log(&self) -> &[GrantEvent] {
        &self.grant_log
    }

    pub fn require_owner(&self, session: &Session) -> Result<(), AccessError> {
        authenticate(session)?;
        if session.user != self.owner {
            return Err(AccessError::NotOwner);
        }
        Ok(())
    }

    /// Invitation-only sharing: only the owner hands out roles.
    pub fn grant(&mut self, session: &Session, user: &str, role: Role) -> Result<(), AccessError> {
        self.require_owner(session)?;
        if user == self.owner {
            return Err(AccessError::CannotDemoteOwner);
        }
        if role == Role::Owner {
            return Err(AccessError::OwnerUnique);
        }
        self.grants.insert(user.to_string(), role);
        self.grant_log.push(GrantEvent {
            grantor: session.user.clone(),
            grantee: user.to_string(),
            role: Some(role),
        });
        Ok(())
    }

    pub fn revoke(&mut self, session: &Session, user: &str) -> Result<(), AccessError> {
        self.require_owner(session)?;
        if user == self.owner {
            return Err(AccessError::CannotDemoteOwner);
        }
        self.grants.remove(user);
        self.grant_log.push(GrantEvent {
            grantor: session.user.clone(),
            grantee: user.to_string(),
            role: None,
        });
        Ok(())
    }

    /// Sets or clears (`None`) a limited-user override. Formula cells can be
    /// restricted further but never opened to full-access.
    pub fn set_override(
        &mut self,
        wb: &Workbook,
        session: &Session,
        addr: &CellAddress,
        class: Option<AccessClass>,
    ) -> Result<(), AccessError> {
        self.require_owner(session)?;
        wb.check_address(addr)?;
        match class {
            Some(AccessClass::FullAccess) if wb.content(addr).is_some_and(CellContent::is_formula) => {
                Err(AccessError::OverrideRejected(addr.clone()))
            }
            Some(c) => {
                self.overrides.insert(addr.clone(), c);
                Ok(())
            }
            None => {
                self.overrides.remove(addr);
                Ok(())
            }
        }
    }

    pub fn set_allow_external_links(&mut self, session: &Session, allow: bool) -> Result<(), AccessError> {
        self.require_owner(session)?;
        self.allow_external_links = allow;
        Ok(())
    }
}

fn authenticate(session: &Session) -> Result<(), AccessError> {
    if session.authenticated {
        Ok(())
    } else {
        Err(AccessError::NotAuthenticated)
    }
}

/// Role of an authenticated session; users without a grant are refused.
pub fn session_role(acl: &SharingAcl, session: &Session) -> Result<Role, AccessError> {
    authenticate(session)?;
    acl.role_of(&session.user).ok_or(AccessError::RevokedAccess)
}

fn sheet_visible_to(wb: &Workbook, role: Role, sheet: &str) -> Result<bool, WorkbookError> {
    let s = wb.sheet_or_err(sheet)?;
    Ok(role == Role::Owner || s.visibility == SheetVisibility::Visible)
}

pub fn derive_access_class(
    wb: &Workbook,
    acl: &SharingAcl,
    role: Role,
    addr: &CellAddress,
) -> Result<AccessClass, AccessError> {
    wb.check_address(addr)?;
    if !sheet_visible_to(wb, role, &addr.sheet)? {
        return Err(AccessError::SheetNotVisibleToRole(addr.sheet.clone()));
    }
    Ok(class_of(wb, acl, role, addr))
}

fn class_of(wb: &Workbook, acl: &SharingAcl, role: Role, addr: &CellAddress) -> AccessClass {
    match role {
        Role::Owner | Role::Collaborator => AccessClass::FullAccess,
        Role::Viewer => AccessClass::DisplayAccess,
        Role::LimitedUser => {
            let over = acl.overrides.get(addr).copied();
            if wb.content(addr).is_some_and(CellContent::is_formula) {
                over.unwrap_or(AccessClass::DisplayAccess).min(AccessClass::DisplayAccess)
            } else {
                over.unwrap_or(AccessClass::FullAccess)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ViewCell {
    /// Address within the sheet, e.g. `B2`.
    pub addr: String,
    pub display: String,
    pub editable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contents: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ViewSheet {
    pub name: String,
    pub cells: Vec<ViewCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RedactedView {
    pub workbook_version: u64,
    pub sheets: Vec<ViewSheet>,
}

/// The session's projection of the workbook. Only visible sheets appear;
/// no-access cells are left out entirely and `contents` is filled for
/// full-access cells only.
pub fn render_view(
    wb: &Workbook,
    values: &Values,
    acl: &SharingAcl,
    session: &Session,
    workbook_version: u64,
) -> Result<RedactedView, AccessError> {
    let role = session_role(acl, session)?;
    let mut sheets = Vec::new();
    for sheet in wb.sheets() {
        if sheet.visibility != SheetVisibility::Visible {
            continue;
        }
        let mut cells = Vec::new();
        for (coord, cell) in sheet.cells() {
            if cell.content.is_empty() {
                continue;
            }
            let addr = CellAddress::from_coord(sheet.name(), coord);
            let class = class_of(wb, acl, role, &addr);
            if class == AccessClass::NoAccess {
                continue;
            }
            let full = class == AccessClass::FullAccess;
            cells.push(ViewCell {
                addr: coord.to_string(),
                display: values.display(&addr),
                editable: full && role != Role::Viewer,
                contents: full.then(|| cell.content.source()),
            });
        }
        sheets.push(ViewSheet {
            name: sheet.name().to_string(),
            cells,
        });
    }
    Ok(RedactedView {
        workbook_version,
        sheets,
    })
}

/// Gate for an edit, without applying it.
pub fn check_edit(
    wb: &Workbook,
    acl: &SharingAcl,
    session: &Session,
    addr: &CellAddress,
    input: &str,
) -> Result<CellContent, AccessError> {
    let role = session_role(acl, session)?;
    let class = derive_access_class(wb, acl, role, addr)?;
    if class < AccessClass::FullAccess || role == Role::Viewer {
        return Err(AccessError::EditDenied(class));
    }
    if role == Role::LimitedUser && input.starts_with('=') {
        return Err(AccessError::FormulaForbidden);
    }
    let content = CellContent::from_input(input).map_err(WorkbookError::from)?;
    if !acl.allow_external_links && content.formula().is_some_and(|f| f.expr().contains_external()) {
        return Err(AccessError::ExternalLinkForbidden);
    }
    Ok(content)
}

/// Applies an edit and returns the changed `(address, display)` pairs the
/// session may see, always including the edited cell.
pub fn apply_edit(
    wb: &mut Workbook,
    acl: &SharingAcl,
    session: &Session,
    addr: &CellAddress,
    input: &str,
) -> Result<Vec<(CellAddress, String)>, AccessError> {
    let content = check_edit(wb, acl, session, addr, input)?;
    let role = session_role(acl, session)?;
    let before = recalculate(wb).to_map();
    wb.set_content(addr, content)?;
    let after = recalculate(wb);
    let after_map = after.to_map();

    let changed: BTreeSet<&CellAddress> = after_map
        .keys()
        .chain(before.keys())
        .filter(|a| before.get(*a) != after_map.get(*a))
        .chain(std::iter::once(addr))
        .collect();
    Ok(changed
        .into_iter()
        .filter(|a| sheet_visible_to(wb, role, &a.sheet).unwrap_or(false))
        .filter(|a| class_of(wb, acl, role, a) > AccessClass::NoAccess)
        .map(|a| (a.clone(), after.display(a)))
        .collect())
}

/// Literal standing in for a displayed value.
fn flatten(value: Option<&Value>) -> CellContent {
    match value {
        None => CellContent::Empty,
        Some(Value::Number(n)) => CellContent::Literal(Literal::Number(*n)),
        Some(v) => {
            let text = v.to_string();
            // A leading `=` would read back as a formula.
            let text = if text.starts_with('=') { format!("'{text}") } else { text };
            CellContent::Literal(Literal::Text(text))
        }
    }
}

/// The copy a session may save locally. The owner gets the master with its
/// ACL. Everyone else gets the visible sheets with every cell below
/// full-access replaced by its displayed value, no-access cells dropped and
/// no passwords.
pub fn export_local(
    wb: &Workbook,
    values: &Values,
    acl: &SharingAcl,
    session: &Session,
) -> Result<Document, AccessError> {
    let role = session_role(acl, session)?;
    if role == Role::Owner {
        return Ok(Document {
            workbook: wb.clone(),
            acl: Some(acl.clone()),
        });
    }
    let mut out = Workbook::default();
    for sheet in wb.sheets() {
        if sheet.visibility != SheetVisibility::Visible {
            continue;
        }
        let copy = out.add_sheet(sheet.name())?;
        copy.default_format = sheet.default_format;
        copy.protection = sheet.protection.clone();
        copy.protection.password = None;
        for (coord, cell) in sheet.cells() {
            let addr = CellAddress::from_coord(sheet.name(), coord);
            let class = class_of(wb, acl, role, &addr);
            let exported = match class {
                AccessClass::NoAccess => continue,
                AccessClass::FullAccess => cell.clone(),
                AccessClass::DisplayAccess => Cell {
                    content: flatten(values.get(&addr)),
                    flattened: true,
                    ..cell.clone()
                },
            };
            *copy.entry(coord) = exported;
        }
    }
    out.protection.structure = wb.protection.structure;
    out.protection.windows = wb.protection.windows;
    Ok(Document { workbook: out, acl: None })
}

/// Session-scoped clipboard: sources for full-access cells, displayed values
/// otherwise. Blank and no-access cells are left out.
pub fn copy_view(
    wb: &Workbook,
    values: &Values,
    acl: &SharingAcl,
    session: &Session,
    rect: &Rect,
) -> Result<Vec<(CellAddress, String)>, AccessError> {
    let role = session_role(acl, session)?;
    let sheet = wb.sheet_or_err(&rect.sheet)?;
    if sheet.visibility != SheetVisibility::Visible {
        return Err(AccessError::SheetNotVisibleToRole(rect.sheet.clone()));
    }
    let mut out = Vec::new();
    for row in rect.rows() {
        for (coord, cell) in sheet.row_span(row, rect.top_left.col, rect.bottom_right.col) {
            if cell.content.is_empty() {
                continue;
            }
            let addr = CellAddress::from_coord(rect.sheet.clone(), coord);
            let text = match class_of(wb, acl, role, &addr) {
                AccessClass::NoAccess => continue,
                AccessClass::DisplayAccess => values.display(&addr),
                AccessClass::FullAccess if role == Role::Viewer => values.display(&addr),
                AccessClass::FullAccess => cell.content.source(),
            };
            out.push((addr, text));
        }
    }
    Ok(out)
}

/// The hosted master: the live workbook, its ACL and the archived versions.
#[derive(Debug, Clone)]
pub struct MasterStore {
    acl: SharingAcl,
    /// `versions[i]` is version `i + 1`; the last one is live.
    versions: Vec<Workbook>,
}

impl MasterStore {
    pub fn new(workbook: Workbook, acl: SharingAcl) -> Self {
        Self {
            acl,
            versions: vec![workbook],
        }
    }

    /// Restores a store from its versions, oldest first; the last is live.
    /// Returns `None` for an empty list.
    pub fn from_versions(versions: Vec<Workbook>, acl: SharingAcl) -> Option<Self> {
        (!versions.is_empty()).then_some(Self { acl, versions })
    }

    /// All versions, oldest first.
    pub fn versions(&self) -> &[Workbook] {
        &self.versions
    }

    pub fn version(&self) -> u64 {
        self.versions.len() as u64
    }

    pub fn current(&self) -> &Workbook {
        self.versions.last().expect("never empty")
    }

    pub fn current_mut(&mut self) -> &mut Workbook {
        self.versions.last_mut().expect("never empty")
    }

    pub fn acl(&self) -> &SharingAcl {
        &self.acl
    }

    pub fn acl_mut(&mut self) -> &mut SharingAcl {
        &mut self.acl
    }

    /// Rolls out a new version. Without `force` the workbook must pass the
    /// protection audit.
    pub fn publish_version(&mut self, session: &Session, workbook: Workbook, force: bool) -> Result<u64, AccessError> {
        self.acl.require_owner(session)?;
        if !force {
            let errors: Vec<Finding> = audit_protection(&workbook)
                .into_iter()
                .filter(|f| f.severity == Severity::Error)
                .collect();
            if !errors.is_empty() {
                return Err(AccessError::AuditFailed(errors));
            }
        }
        self.versions.push(workbook);
        Ok(self.version())
    }

    /// A retained version, owner only.
    pub fn archived(&self, session: &Session, version: u64) -> Result<&Workbook, AccessError> {
        self.acl.require_owner(session)?;
        version
            .checked_sub(1)
            .and_then(|i| self.versions.get(i as usize))
            .ok_or(AccessError::UnknownVersion(version))
    }

    pub fn render_view(&self, session: &Session) -> Result<RedactedView, AccessError> {
        let wb = self.current();
        render_view(wb, &recalculate(wb), &self.acl, session, self.version())
    }
}

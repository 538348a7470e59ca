//! `pws`: operator and programmer entry points.
//!
//! Exit codes: 0 success or clean, 1 findings (audit errors, leaked formula
//! text), 2 usage or input error, 3 infeasible.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pws_core::access::{export_local, Role, Session, SharingAcl};
use pws_core::address::{CellAddress, Rect};
use pws_core::audit::{audit_protection, passes, render_machine, render_text};
use pws_core::engine::recalculate;
use pws_core::passwords::{crack, OpenFilePasswordRecord};
use pws_core::protection::{apply_recommended, copy_range};
use pws_core::pws::{parse_users, users_to_json, Document, UserRecord};
use pws_core::workbook::Workbook;
use pws_server::{serve, ServerConfig};

const FINDINGS: u8 = 1;
const INPUT: u8 = 2;
const INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "pws", version, about = "Protected spreadsheet tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Subcommand)]
enum Command {
    /// Lint a workbook's protection; exit 1 on any error finding.
    Audit {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Set cells, recalculate and print values.
    Eval {
        file: PathBuf,
        /// `ADDR=INPUT`, applied in order; `A1==B1*2` enters a formula.
        #[arg(long = "set", value_name = "ADDR=INPUT")]
        set: Vec<String>,
        #[arg(long = "get", value_name = "ADDR", required = true)]
        get: Vec<String>,
    },
    /// Recover a working password for a sheet or, without --sheet, the workbook.
    CrackElement {
        file: PathBuf,
        #[arg(long)]
        sheet: Option<String>,
    },
    /// Copy a rectangle as a local user would and print the clipboard.
    AttackCopy {
        file: PathBuf,
        #[arg(long)]
        rect: String,
    },
    /// Host the workbooks in a store directory.
    Serve {
        #[arg(long)]
        bind: String,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        users: PathBuf,
    },
    /// Write the copy a user with the given role may save locally.
    Export {
        file: PathBuf,
        #[arg(long = "as-role")]
        as_role: Role,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Apply the recommended protection settings with one password.
    Protect {
        file: PathBuf,
        #[arg(long)]
        password: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Edit the sharing list stored in a workbook file.
    Share {
        file: PathBuf,
        /// Required when the file has no sharing list yet.
        #[arg(long)]
        owner: Option<String>,
        #[arg(long = "grant", value_name = "USER=ROLE")]
        grant: Vec<String>,
        #[arg(long = "revoke", value_name = "USER")]
        revoke: Vec<String>,
        #[arg(long)]
        allow_external_links: Option<bool>,
    },
    /// Add a login to a users file, creating it if needed.
    AddUser {
        users: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        password: String,
    },
}

struct Failure {
    code: &'static str,
    message: String,
    exit: u8,
}

impl Failure {
    fn input(code: &'static str, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
            exit: INPUT,
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}: {}", f.code, f.message);
            ExitCode::from(f.exit)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Audit { file, format } => audit(&file, format),
        Command::Eval { file, set, get } => eval(&file, &set, &get),
        Command::CrackElement { file, sheet } => crack_element(&file, sheet.as_deref()),
        Command::AttackCopy { file, rect } => attack_copy(&file, &rect),
        Command::Serve { bind, store, users } => {
            let handle = serve(&ServerConfig::new(bind, store, users)).map_err(|e| Failure::input(e.code(), e))?;
            println!("listening on {}", handle.local_addr());
            let _ = std::io::stdout().flush();
            handle.wait();
            Ok(0)
        }
        Command::Export { file, as_role, output } => export(&file, as_role, output.as_deref()),
        Command::Protect { file, password, output } => protect(&file, &password, output.as_deref()),
        Command::Share {
            file,
            owner,
            grant,
            revoke,
            allow_external_links,
        } => share(&file, owner, &grant, &revoke, allow_external_links),
        Command::AddUser { users, user, password } => add_user(&users, &user, &password),
    }
}

fn load(path: &Path) -> Result<Document, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input("InvalidInput", format!("{}: {e}", path.display())))?;
    Document::from_json(&text).map_err(|e| Failure::input("InvalidInput", format!("{}: {e}", path.display())))
}

fn save(path: &Path, doc: &Document) -> Result<(), Failure> {
    fs::write(path, doc.to_json()).map_err(|e| Failure::input("InvalidInput", format!("{}: {e}", path.display())))
}

fn first_sheet(wb: &Workbook) -> String {
    wb.sheets().first().map(|s| s.name().to_string()).unwrap_or_default()
}

fn address(wb: &Workbook, text: &str) -> Result<CellAddress, Failure> {
    let addr = CellAddress::parse_with_default(text, &first_sheet(wb))
        .map_err(|e| Failure::input("UnknownAddress", format!("`{text}`: {e}")))?;
    wb.check_address(&addr).map_err(|e| Failure::input(e.code(), e))?;
    Ok(addr)
}

fn audit(file: &Path, format: Format) -> Outcome {
    let doc = load(file)?;
    let findings = audit_protection(&doc.workbook);
    match format {
        Format::Text => print!("{}", render_text(&findings)),
        Format::Machine => print!("{}", render_machine(&findings)),
    }
    Ok(if passes(&findings) { 0 } else { FINDINGS })
}

fn eval(file: &Path, set: &[String], get: &[String]) -> Outcome {
    let mut wb = load(file)?.workbook;
    for s in set {
        let (addr, input) = s
            .split_once('=')
            .ok_or_else(|| Failure::input("InvalidInput", format!("`{s}` is not ADDR=INPUT")))?;
        let addr = address(&wb, addr)?;
        wb.set_cell(&addr, input).map_err(|e| Failure::input(e.code(), e))?;
    }
    let addrs = get.iter().map(|g| address(&wb, g)).collect::<Result<Vec<_>, _>>()?;
    let values = recalculate(&wb);
    for a in addrs {
        println!("{}", values.display(&a));
    }
    Ok(0)
}

fn crack_element(file: &Path, sheet: Option<&str>) -> Outcome {
    let wb = load(file)?.workbook;
    let (record, scope) = match sheet {
        Some(name) => {
            let s = wb.sheet_or_err(name).map_err(|e| Failure::input(e.code(), e))?;
            (s.protection.password.clone(), format!("sheet `{name}`"))
        }
        None => (wb.protection.password.clone(), "the workbook".to_string()),
    };
    let record = record.ok_or_else(|| Failure::input("NoPassword", format!("{scope} has no password")))?;
    let found = crack(&record).map_err(|e| Failure {
        code: "Infeasible",
        message: e.to_string(),
        exit: INFEASIBLE,
    })?;
    println!("password: {}", found.password);
    println!("attempts: {}", found.attempts);
    Ok(0)
}

fn attack_copy(file: &Path, rect: &str) -> Outcome {
    let wb = load(file)?.workbook;
    let rect = Rect::parse_with_default(rect, &first_sheet(&wb))
        .map_err(|e| Failure::input("UnknownAddress", format!("`{rect}`: {e}")))?;
    let payload = copy_range(&wb, &rect).map_err(|e| Failure::input(e.code(), e))?;
    print!("{}", payload.to_lines());
    let leaked = payload
        .cells
        .iter()
        .filter(|c| c.source && wb.content(&c.addr).is_some_and(|x| x.is_formula()))
        .count();
    if leaked == 0 {
        println!("result: values only");
        Ok(0)
    } else {
        println!("result: {leaked} formula source(s) revealed");
        Ok(FINDINGS)
    }
}

fn export(file: &Path, role: Role, output: Option<&Path>) -> Outcome {
    let doc = load(file)?;
    let mut acl = doc.acl.clone().unwrap_or_else(|| SharingAcl::new("owner"));
    let user = match role {
        Role::Owner => acl.owner.clone(),
        _ => match acl.grants().iter().find(|(_, r)| **r == role) {
            Some((u, _)) => u.clone(),
            None => {
                let owner = Session::authenticated(acl.owner.clone());
                let user = format!("{}-export", role.name());
                acl.grant(&owner, &user, role).map_err(|e| Failure::input(e.code(), e))?;
                user
            }
        },
    };
    let values = recalculate(&doc.workbook);
    let out = export_local(&doc.workbook, &values, &acl, &Session::authenticated(user))
        .map_err(|e| Failure::input(e.code(), e))?;
    match output {
        Some(path) => save(path, &out)?,
        None => print!("{}", out.to_json()),
    }
    Ok(0)
}

fn protect(file: &Path, password: &str, output: Option<&Path>) -> Outcome {
    let mut doc = load(file)?;
    apply_recommended(&mut doc.workbook, password).map_err(|e| Failure::input(e.code(), e))?;
    save(output.unwrap_or(file), &doc)?;
    print!("{}", render_text(&audit_protection(&doc.workbook)));
    Ok(0)
}

fn share(
    file: &Path,
    owner: Option<String>,
    grant: &[String],
    revoke: &[String],
    allow_external_links: Option<bool>,
) -> Outcome {
    let mut doc = load(file)?;
    let mut acl = match (doc.acl.take(), owner) {
        (Some(acl), None) => acl,
        (Some(acl), Some(o)) if acl.owner == o => acl,
        (Some(_), Some(_)) => return Err(Failure::input("OwnerUnique", "the file already has a different owner")),
        (None, Some(o)) => SharingAcl::new(o),
        (None, None) => return Err(Failure::input("InvalidInput", "no sharing list yet; pass --owner")),
    };
    let owner = Session::authenticated(acl.owner.clone());
    for g in grant {
        let (user, role) = g
            .split_once('=')
            .ok_or_else(|| Failure::input("InvalidInput", format!("`{g}` is not USER=ROLE")))?;
        let role: Role = role.parse().map_err(|e| Failure::input("InvalidInput", e))?;
        acl.grant(&owner, user, role).map_err(|e| Failure::input(e.code(), e))?;
    }
    for user in revoke {
        acl.revoke(&owner, user).map_err(|e| Failure::input(e.code(), e))?;
    }
    if let Some(allow) = allow_external_links {
        acl.set_allow_external_links(&owner, allow).map_err(|e| Failure::input(e.code(), e))?;
    }
    println!("owner\t{}", acl.owner);
    for (user, role) in acl.grants() {
        if *user != acl.owner {
            println!("{role}\t{user}");
        }
    }
    doc.acl = Some(acl);
    save(file, &doc)?;
    Ok(0)
}

fn add_user(path: &Path, user: &str, password: &str) -> Outcome {
    let mut users = match fs::read_to_string(path) {
        Ok(text) => parse_users(&text).map_err(|e| Failure::input("InvalidInput", format!("{}: {e}", path.display())))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Failure::input("InvalidInput", format!("{}: {e}", path.display()))),
    };
    if users.iter().any(|u| u.user == user) {
        return Err(Failure::input("DuplicateUser", format!("`{user}` already exists")));
    }
    users.push(UserRecord {
        user: user.to_string(),
        password: OpenFilePasswordRecord::new(password),
    });
    fs::write(path, users_to_json(&users)).map_err(|e| Failure::input("InvalidInput", format!("{}: {e}", path.display())))?;
    Ok(0)
}

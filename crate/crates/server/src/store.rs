//! On-disk workbook store.
//!
//! ```text
//! <root>/<id>.pws                 seed, read once when <root>/<id>/ has no pointer
//! <root>/<id>/r00000007-v2.pws    revision 7, workbook version 2
//! <root>/<id>/current             name of the latest committed revision file
//! ```
//!
//! Every file is written to a temporary name, synced and renamed into place.
//! A revision counts as committed once `current` names it, so a crash at any
//! point leaves the store at some committed revision.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use pws_core::access::SharingAcl;
use pws_core::pws::Document;
use pws_core::workbook::Workbook;

use crate::ServerError;

const POINTER: &str = "current";
const TMP_SUFFIX: &str = ".tmp";

/// A hosted workbook as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub revision: u64,
    /// Oldest first; the last one is live. A version whose files are gone is
    /// restored as an empty workbook.
    pub versions: Vec<Workbook>,
    pub acl: SharingAcl,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn corrupt(path: &Path, msg: impl std::fmt::Display) -> ServerError {
    ServerError::CorruptStore(format!("{}: {msg}", path.display()))
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub fn revision_file(revision: u64, version: u64) -> String {
    format!("r{revision:08}-v{version}.pws")
}

fn parse_revision_file(name: &str) -> Option<(u64, u64)> {
    let rest = name.strip_prefix('r')?.strip_suffix(".pws")?;
    let (rev, ver) = rest.split_once("-v")?;
    if rev.len() < 8 || !rev.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((rev.parse().ok()?, ver.parse().ok()?))
}

/// Writes `bytes` to `path` through a synced temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!("{name}{TMP_SUFFIX}"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    File::open(dir)?.sync_all()
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServerError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| corrupt(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    /// Ids of every hosted workbook: seeds and initialised directories.
    pub fn ids(&self) -> Result<Vec<String>, ServerError> {
        let mut ids = Vec::new();
        let entries = fs::read_dir(&self.root).map_err(|e| corrupt(&self.root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| corrupt(&self.root, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let id = if entry.path().is_dir() {
                name
            } else if let Some(stem) = name.strip_suffix(".pws") {
                stem.to_string()
            } else {
                continue;
            };
            if valid_id(&id) {
                ids.push(id);
            }
        }
        ids.sort();
        ids.dedup();
        Ok(ids)
    }

    /// Loads a workbook, initialising its directory from the seed on first
    /// use. Uncommitted leftovers of an interrupted write are removed.
    pub fn load(&self, id: &str) -> Result<Loaded, ServerError> {
        let dir = self.dir(id);
        let pointer = dir.join(POINTER);
        if !pointer.exists() {
            return self.seed(id);
        }
        let current = fs::read_to_string(&pointer).map_err(|e| corrupt(&pointer, e))?;
        let current = current.trim();
        let (revision, version) =
            parse_revision_file(current).ok_or_else(|| corrupt(&pointer, format!("bad pointer `{current}`")))?;
        if !dir.join(current).is_file() {
            return Err(corrupt(&dir, format!("pointer names missing file `{current}`")));
        }

        let mut files: BTreeMap<u64, (u64, PathBuf)> = BTreeMap::new();
        for entry in fs::read_dir(&dir).map_err(|e| corrupt(&dir, e))? {
            let path = entry.map_err(|e| corrupt(&dir, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if name.ends_with(TMP_SUFFIX) {
                fs::remove_file(&path).map_err(|e| corrupt(&path, e))?;
                continue;
            }
            let Some((rev, ver)) = parse_revision_file(&name) else {
                continue;
            };
            if rev > revision || (rev == revision && name != current) {
                // Written but never committed.
                fs::remove_file(&path).map_err(|e| corrupt(&path, e))?;
                continue;
            }
            files.insert(rev, (ver, path));
        }

        // Final state of each version: its highest committed revision.
        let mut last_of: BTreeMap<u64, &PathBuf> = BTreeMap::new();
        for (ver, path) in files.values() {
            last_of.insert(*ver, path);
        }
        let live = read_document(&dir.join(current))?;
        let acl = live
            .acl
            .clone()
            .ok_or_else(|| corrupt(&dir.join(current), "hosted workbook has no acl"))?;
        let mut versions = Vec::new();
        for v in 1..version {
            versions.push(match last_of.get(&v) {
                Some(path) => read_document(path)?.workbook,
                None => Workbook::default(),
            });
        }
        versions.push(live.workbook);
        Ok(Loaded {
            revision,
            versions,
            acl,
        })
    }

    fn seed(&self, id: &str) -> Result<Loaded, ServerError> {
        let seed = self.root.join(format!("{id}.pws"));
        let doc = read_document(&seed)?;
        let Some(acl) = doc.acl.clone() else {
            return Err(corrupt(&seed, "hosted workbook has no acl"));
        };
        let dir = self.dir(id);
        fs::create_dir_all(&dir).map_err(|e| corrupt(&dir, e))?;
        self.commit(id, 0, 1, &doc).map_err(|e| corrupt(&dir, e))?;
        Ok(Loaded {
            revision: 0,
            versions: vec![doc.workbook],
            acl,
        })
    }

    /// Persists `doc` as `revision` and moves the pointer to it.
    pub fn commit(&self, id: &str, revision: u64, version: u64, doc: &Document) -> std::io::Result<()> {
        let dir = self.dir(id);
        fs::create_dir_all(&dir)?;
        let name = revision_file(revision, version);
        write_atomic(&dir.join(&name), doc.to_json().as_bytes())?;
        write_atomic(&dir.join(POINTER), format!("{name}\n").as_bytes())
    }
}

fn read_document(path: &Path) -> Result<Document, ServerError> {
    let bytes = fs::read(path).map_err(|e| corrupt(path, e))?;
    Document::from_slice(&bytes).map_err(|e| corrupt(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn revision_file_names_round_trip() {
        assert_eq!(revision_file(7, 2), "r00000007-v2.pws");
        assert_eq!(parse_revision_file("r00000007-v2.pws"), Some((7, 2)));
        assert_eq!(parse_revision_file("r123456789-v1.pws"), Some((123456789, 1)));
        assert_eq!(parse_revision_file("r7-v2.pws"), None);
        assert_eq!(parse_revision_file("r00000007-v2.pws.tmp"), None);
    }

    #[test]
    fn ids_are_plain() {
        assert!(valid_id("budget_2024-q1"));
        assert!(!valid_id("../etc"));
        assert!(!valid_id(""));
    }
}

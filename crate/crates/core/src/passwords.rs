//! Two password strengths.
//!
//! Workbook-element passwords guard sheet and workbook protection. Only a
//! class index in `0..ELEMENT_KEYSPACE` is stored, so any password landing in
//! the same class unlocks the element and the whole keyspace can be walked in
//! well under a second. Open-file passwords are salted and stretched with
//! PBKDF2-HMAC-SHA256 and can only be checked by exact guess.

use std::fmt;

use pbkdf2::pbkdf2_hmac;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use subtle::ConstantTimeEq;
use thiserror::Error;

/// Number of distinct element-password classes.
pub const ELEMENT_KEYSPACE: u32 = 194_560;

/// PBKDF2 rounds for open-file passwords.
pub const OPEN_FILE_ITERATIONS: u32 = 1 << 17;

const SALT_LEN: usize = 16;
const DIGEST_LEN: usize = 32;

/// `h = h * 31 + byte` over 32 bits, reduced into the element keyspace.
///
/// Stored in files; must never change.
pub fn element_hash(password: &str) -> u32 {
    fold(password.as_bytes()) % ELEMENT_KEYSPACE
}

fn fold(bytes: &[u8]) -> u32 {
    bytes
        .iter()
        .fold(0u32, |h, &b| h.wrapping_mul(31).wrapping_add(u32::from(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElementPasswordRecord {
    class: u32,
}

impl ElementPasswordRecord {
    pub fn new(password: &str) -> Self {
        Self {
            class: element_hash(password),
        }
    }

    pub fn from_class(class: u32) -> Option<Self> {
        (class < ELEMENT_KEYSPACE).then_some(Self { class })
    }

    pub fn class_index(&self) -> u32 {
        self.class
    }

    /// Any password in the same class verifies.
    pub fn verify(&self, password: &str) -> bool {
        element_hash(password) == self.class
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct OpenFilePasswordRecord {
    salt: [u8; SALT_LEN],
    digest: [u8; DIGEST_LEN],
}

impl fmt::Debug for OpenFilePasswordRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenFilePasswordRecord")
            .field("salt", &hex::encode(self.salt))
            .finish_non_exhaustive()
    }
}

impl OpenFilePasswordRecord {
    /// Derives a record under a fresh random salt.
    pub fn new(password: &str) -> Self {
        let mut salt = [0u8; SALT_LEN];
        rand::rng().fill_bytes(&mut salt);
        Self::with_salt(password, salt)
    }

    pub fn with_salt(password: &str, salt: [u8; SALT_LEN]) -> Self {
        Self {
            salt,
            digest: derive(password, &salt),
        }
    }

    pub fn salt(&self) -> &[u8; SALT_LEN] {
        &self.salt
    }

    /// Constant-time comparison against a fresh derivation.
    pub fn verify(&self, password: &str) -> bool {
        derive(password, &self.salt).ct_eq(&self.digest).into()
    }
}

fn derive(password: &str, salt: &[u8]) -> [u8; DIGEST_LEN] {
    let mut out = [0u8; DIGEST_LEN];
    pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, OPEN_FILE_ITERATIONS, &mut out);
    out
}

pub fn verify_element(record: &ElementPasswordRecord, password: &str) -> bool {
    record.verify(password)
}

pub fn verify_open_file(record: &OpenFilePasswordRecord, password: &str) -> bool {
    record.verify(password)
}

/// A password record as stored in workbook and users files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RecordRepr", into = "RecordRepr")]
pub enum PasswordRecord {
    Element(ElementPasswordRecord),
    Open(OpenFilePasswordRecord),
}

impl PasswordRecord {
    pub fn verify(&self, password: &str) -> bool {
        match self {
            PasswordRecord::Element(r) => r.verify(password),
            PasswordRecord::Open(r) => r.verify(password),
        }
    }

    pub fn is_element(&self) -> bool {
        matches!(self, PasswordRecord::Element(_))
    }
}

impl From<ElementPasswordRecord> for PasswordRecord {
    fn from(r: ElementPasswordRecord) -> Self {
        PasswordRecord::Element(r)
    }
}

impl From<OpenFilePasswordRecord> for PasswordRecord {
    fn from(r: OpenFilePasswordRecord) -> Self {
        PasswordRecord::Open(r)
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("element class {0} outside the keyspace")]
    ClassOutOfRange(u32),
    #[error("bad hex field `{0}`")]
    BadHex(&'static str),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RecordRepr {
    Element { class: u32 },
    Open { salt: String, digest: String },
}

impl TryFrom<RecordRepr> for PasswordRecord {
    type Error = RecordError;

    fn try_from(repr: RecordRepr) -> Result<Self, Self::Error> {
        match repr {
            RecordRepr::Element { class } => ElementPasswordRecord::from_class(class)
                .map(PasswordRecord::Element)
                .ok_or(RecordError::ClassOutOfRange(class)),
            RecordRepr::Open { salt, digest } => {
                let mut rec = OpenFilePasswordRecord {
                    salt: [0; SALT_LEN],
                    digest: [0; DIGEST_LEN],
                };
                hex::decode_to_slice(&salt, &mut rec.salt)
                    .map_err(|_| RecordError::BadHex("salt"))?;
                hex::decode_to_slice(&digest, &mut rec.digest)
                    .map_err(|_| RecordError::BadHex("digest"))?;
                Ok(PasswordRecord::Open(rec))
            }
        }
    }
}

impl From<PasswordRecord> for RecordRepr {
    fn from(r: PasswordRecord) -> Self {
        match r {
            PasswordRecord::Element(e) => RecordRepr::Element { class: e.class },
            PasswordRecord::Open(o) => RecordRepr::Open {
                salt: hex::encode(o.salt),
                digest: hex::encode(o.digest),
            },
        }
    }
}

const SUFFIX_LO: u32 = 33; // '!'
const SUFFIX_HI: u32 = 126; // '~'
const LOW_DIGIT_HI: u32 = SUFFIX_LO + 30;
const P31_4: u32 = 31 * 31 * 31 * 31;

/// Candidate suffix values whose four base-31 digits are always printable.
const SUFFIX_MIN: u32 = SUFFIX_LO * 29_791 + LOW_DIGIT_HI * (961 + 31 + 1);
const SUFFIX_MAX: u32 = SUFFIX_HI * 29_791 + SUFFIX_LO * (961 + 31 + 1);

/// Splits `value` into four printable bytes `b` with `sum b[i] * 31^(3-i) == value`.
fn suffix_digits(value: u32) -> Option<[u8; 4]> {
    let mut rest = value;
    let mut out = [0u8; 4];
    for slot in (1..4).rev() {
        let digit = SUFFIX_LO + (rest + 31 - SUFFIX_LO % 31) % 31;
        rest = rest.checked_sub(digit)? / 31;
        out[slot] = digit as u8;
    }
    (SUFFIX_LO..=SUFFIX_HI)
        .contains(&rest)
        .then(|| {
            out[0] = rest as u8;
            out
        })
}

/// The canonical password for an element class: the class index in decimal
/// followed by a four-character printable suffix whose value is advanced
/// until the whole string hashes into `class`.
pub fn canonical_candidate(class: u32) -> String {
    assert!(class < ELEMENT_KEYSPACE, "class {class} outside keyspace");
    let prefix = class.to_string();
    let shifted = fold(prefix.as_bytes()).wrapping_mul(P31_4);
    let mut suffix = SUFFIX_MIN;
    while suffix <= SUFFIX_MAX {
        let full = shifted.wrapping_add(suffix);
        let residue = full % ELEMENT_KEYSPACE;
        if residue == class {
            if let Some(digits) = suffix_digits(suffix) {
                let mut out = prefix;
                out.extend(digits.iter().map(|&b| b as char));
                return out;
            }
            suffix += 1;
            continue;
        }
        let step = (class + ELEMENT_KEYSPACE - residue) % ELEMENT_KEYSPACE;
        // Past the 32-bit wrap the residues restart from zero.
        let to_wrap = u64::from(u32::MAX) + 1 - u64::from(full);
        suffix += if u64::from(step) >= to_wrap {
            to_wrap as u32
        } else {
            step
        };
    }
    unreachable!("every class has a printable preimage")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crack {
    pub password: String,
    pub attempts: u32,
}

/// Walks the canonical candidates class by class, using the record only as a
/// verification oracle. Always succeeds within `ELEMENT_KEYSPACE` attempts.
pub fn crack_element(record: &ElementPasswordRecord) -> Crack {
    for (i, class) in (0..ELEMENT_KEYSPACE).enumerate() {
        let candidate = canonical_candidate(class);
        if record.verify(&candidate) {
            return Crack {
                password: candidate,
                attempts: i as u32 + 1,
            };
        }
    }
    unreachable!("canonical candidates cover every class")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("open-file passwords can only be checked by exact guess; recovery is infeasible")]
pub struct Infeasible;

/// Cracks a stored record if its keyspace is small enough. Open-file records
/// have no recovery path.
pub fn crack(record: &PasswordRecord) -> Result<Crack, Infeasible> {
    match record {
        PasswordRecord::Element(r) => Ok(crack_element(r)),
        PasswordRecord::Open(_) => Err(Infeasible),
    }
}

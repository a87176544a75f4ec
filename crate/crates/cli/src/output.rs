use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bicausal_core::io::{document, error_document, parse_document, to_canonical_string};
use bicausal_core::Error;
use serde_json::{json, Value};

use crate::OutArgs;

/// Why a command failed; every variant becomes an error document on stderr.
#[derive(Debug)]
pub enum Failure {
    Domain(Error),
    Io(String),
    /// A verification that ran to completion and found violations.
    Verification(Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl Failure {
    pub fn report(&self) -> String {
        let doc = match self {
            Failure::Domain(e) => error_document(e),
            Failure::Io(msg) => document("error", json!({ "code": "IO_ERROR", "message": msg })),
            Failure::Verification(report) => document(
                "error",
                json!({ "code": "VERIFICATION_FAILED", "message": "artifact violates its invariants", "details": report }),
            ),
        };
        to_canonical_string(&doc)
    }
}

pub fn read_document(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_document(&text)?)
}

/// Writes via a temporary file in the target directory and an atomic rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .map_err(|e| Failure::Io(format!("cannot create a temporary file in {}: {e}", dir.display())))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path).map_err(|e| Failure::Io(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

/// Emits a canonical document to `--out` or stdout, plus the optional
/// metadata sidecar.
pub fn emit(doc: &Value, out: &OutArgs) -> Result<(), Failure> {
    let text = to_canonical_string(doc);
    match &out.out {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Failure::Io(format!("cannot write to stdout: {e}")))?;
        }
        Some(path) => {
            write_atomic(path, &text)?;
            if out.meta {
                let meta = json!({
                    "created": chrono::Utc::now().to_rfc3339(),
                    "version": env!("CARGO_PKG_VERSION"),
                    "threads": rayon::current_num_threads(),
                    "args": std::env::args().collect::<Vec<_>>(),
                });
                write_atomic(&meta_path(path), &to_canonical_string(&document("meta", meta)))?;
            }
        }
    }
    Ok(())
}

/// Serializes, reads back, and requires the read-back value to match.
pub fn round_trip<T, F>(doc: &Value, original: &T, parse: F) -> Result<(), Failure>
where
    T: PartialEq + std::fmt::Debug,
    F: FnOnce(&Value) -> bicausal_core::Result<T>,
{
    let back = parse(&parse_document(&to_canonical_string(doc))?)?;
    if &back != original {
        return Err(Failure::Domain(Error::Schema("serialized artifact does not read back identically".into())));
    }
    Ok(())
}

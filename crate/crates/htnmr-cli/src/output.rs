use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const TOOL_VERSION: &str = concat!("htnmr ", env!("CARGO_PKG_VERSION"));

pub fn config_hash(run: &RunConfig) -> String {
    let canonical = serde_json::to_string(run).expect("run config serializes");
    Sha256::digest(canonical.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// One output file, rendered in memory.
pub struct Artifact {
    pub name: &'static str,
    pub body: String,
}

/// CSV with a `#` metadata line followed by a column header.
pub fn csv(name: &'static str, hash: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Artifact {
    let mut body = format!("# {TOOL_VERSION} config_sha256={hash}\n{}\n", columns.join(","));
    for row in rows {
        body.push_str(&row.join(","));
        body.push('\n');
    }
    Artifact { name, body }
}

/// Writes every artifact or none: each goes to a temporary name first and is renamed
/// only after all of them were written.
pub fn commit(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
    let io = |e: std::io::Error| CliError::Validation(format!("cannot write to {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let mut staged = Vec::new();
    for a in artifacts {
        let tmp = dir.join(format!(".{}.partial", a.name));
        if let Err(e) = fs::write(&tmp, &a.body) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(io(e));
        }
        staged.push((tmp, dir.join(a.name)));
    }
    for (tmp, dst) in &staged {
        fs::rename(tmp, dst).map_err(io)?;
    }
    Ok(staged.into_iter().map(|(_, d)| d).collect())
}

pub fn num(x: f64) -> String {
    format!("{x:e}")
}

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use noisy_circuit::Error;

/// Failure surfaced to the shell: exit code 2 for usage and configuration
/// problems, 1 for everything the pipeline itself rejects.
#[derive(Debug)]
pub struct CliError {
    kind: String,
    message: String,
    usage: bool,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: "ConfigError".into(),
            message: message.into(),
            usage: true,
        }
    }

    pub fn exit_code(&self) -> u8 {
        if self.usage {
            2
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind, "message": self.message }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = e.kind();
        let usage = matches!(
            kind,
            "ConfigError" | "ParseError" | "FileNotFound" | "InvalidTopology" | "OddHadamardLength"
        );
        Self {
            kind: kind.into(),
            message: e.to_string(),
            usage,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON of a command's arguments.
pub fn config_hash(args: &impl Serialize) -> String {
    sha256_hex(serde_json::to_string(args).expect("arguments serialize").as_bytes())
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

pub fn write_csv<R: Serialize>(dir: &Path, name: &str, rows: &[R]) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    for r in rows {
        w.serialize(r).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(path)
}

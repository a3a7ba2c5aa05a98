//! Report envelope, error classes and file output.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use eprsim_core::Error;
use serde::Serialize;

pub const REPORT_SCHEMA: &str = "eprsim-report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Validation(String),
    /// Anything else: exit code 1.
    Internal(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Json(ref j) if j.is_io() => CliError::Internal(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

#[derive(Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub schema: &'static str,
    pub schema_version: u32,
    pub generator: String,
    pub command: &'a str,
    pub seed: Option<u64>,
    pub config: &'a C,
    pub result: &'a R,
}

impl<'a, C: Serialize, R: Serialize> Report<'a, C, R> {
    pub fn new(command: &'a str, seed: Option<u64>, config: &'a C, result: &'a R) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            schema_version: REPORT_SCHEMA_VERSION,
            generator: format!("eprsim {}", env!("CARGO_PKG_VERSION")),
            command,
            seed,
            config,
            result,
        }
    }
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n"))
            .map_err(|e| CliError::Internal(format!("{}: {e}", p.display()))),
        None => match writeln!(io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                Err(CliError::Internal(e.to_string()))
            }
            _ => Ok(()),
        },
    }
}

pub fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    emit(&text, path)
}

/// Writes CSV rows with a header line.
pub fn write_csv(
    path: &Path,
    header: &str,
    rows: impl Iterator<Item = String>,
) -> Result<(), CliError> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

//! Machine-readable report envelope and file output.

use std::fs;
use std::path::Path;

use bl_core::DatumDocument;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Serialize)]
pub struct Report<'a> {
    pub command: &'a str,
    pub version: &'a str,
    /// SHA-256 of the canonical JSON form of the datum, when one was read.
    pub datum_sha256: Option<String>,
    pub seed: Option<u64>,
    pub options: Value,
    pub passed: bool,
    pub result: Value,
}

/// Digest of the datum as re-serialized, so whitespace and key order in the
/// input file do not matter.
pub fn datum_digest(doc: &DatumDocument) -> String {
    let canonical = serde_json::to_vec(doc).expect("datum documents serialize");
    Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_json(path: &Path, report: &Report) -> Result<(), Failure> {
    let mut text =
        serde_json::to_string_pretty(report).map_err(|e| Failure::Input(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

/// CSV with a header line, `,` separators and LF line endings.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Shortest round-trip decimal form; `nan`/`inf` spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::digest::Digest;
use crate::prompt::PromptKind;

/// One recorded model call. Stored one per line in a JSONL fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub context_hash: Digest,
    pub kind: PromptKind,
    pub profile: String,
    pub request_text: String,
    pub attachment_digests: Vec<Digest>,
    pub response_text: String,
    /// Wall-clock seconds.
    pub latency: f64,
    /// Seconds since the Unix epoch when the call completed.
    pub timestamp: f64,
}

/// Reads every record from a JSONL file, rejecting malformed lines.
pub fn read_records(path: &Path) -> Result<Vec<CallRecord>, GatewayError> {
    let file = File::open(path).map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CallRecord = serde_json::from_str(&line)
            .map_err(|e| GatewayError::Fixture(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if rec.latency.is_nan() || rec.latency < 0.0 {
            return Err(GatewayError::Fixture(format!("{} line {}: negative latency", path.display(), i + 1)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads all `*.jsonl` files in a directory, in file-name order.
pub fn read_fixture_dir(dir: &Path) -> Result<Vec<CallRecord>, GatewayError> {
    let entries = std::fs::read_dir(dir).map_err(|e| GatewayError::Fixture(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_records(&f)?);
    }
    Ok(out)
}

/// Append-only fixture writer: `<file>.jsonl` plus an `attachments/`
/// directory beside it holding attachment bytes by digest.
#[derive(Debug)]
pub struct FixtureWriter {
    file: File,
    attachments: PathBuf,
}

impl FixtureWriter {
    pub fn create(path: &Path) -> Result<Self, GatewayError> {
        let io = |e: std::io::Error| GatewayError::Fixture(format!("{}: {e}", path.display()));
        let parent = path.parent().unwrap_or(Path::new("."));
        let attachments = parent.join("attachments");
        std::fs::create_dir_all(&attachments).map_err(io)?;
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(FixtureWriter { file, attachments })
    }

    pub fn append(&mut self, rec: &CallRecord, blobs: &[(Digest, &[u8])]) -> Result<(), GatewayError> {
        let io = |e: std::io::Error| GatewayError::Fixture(e.to_string());
        for (d, bytes) in blobs {
            let p = self.attachments.join(d.as_str());
            if !p.exists() {
                std::fs::write(p, bytes).map_err(io)?;
            }
        }
        let line = serde_json::to_string(rec).expect("records serialize");
        writeln!(self.file, "{line}").map_err(io)?;
        self.file.flush().map_err(io)
    }
}

//! Artifact stamping: every file a stage produces embeds the producing
//! configuration hash and tool version, and stages refuse inputs stamped
//! with a different hash unless forced.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::TOOL_VERSION;
use crate::{CliError, ErrorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub config_hash: String,
    pub tool_version: String,
    pub stage: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    meta: Meta,
    data: T,
}

pub fn write_json<T: Serialize>(
    path: &Path,
    stage: &str,
    config_hash: &str,
    data: &T,
) -> Result<(), CliError> {
    let envelope = Envelope {
        meta: Meta {
            config_hash: config_hash.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            stage: stage.to_string(),
        },
        data,
    };
    let file = File::create(path).map_err(|e| CliError {
        kind: ErrorKind::Data,
        message: format!("cannot write {}: {e}", path.display()),
    })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &envelope).map_err(|e| CliError {
        kind: ErrorKind::Data,
        message: format!("cannot serialize {}: {e}", path.display()),
    })?;
    w.flush().map_err(|e| CliError {
        kind: ErrorKind::Data,
        message: format!("cannot flush {}: {e}", path.display()),
    })?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(
    path: &Path,
    expected_hash: &str,
    force: bool,
) -> Result<(T, Meta), CliError> {
    let file = File::open(path).map_err(|e| CliError {
        kind: ErrorKind::Data,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let envelope: Envelope<T> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError {
            kind: ErrorKind::Data,
            message: format!("cannot parse {}: {e}", path.display()),
        })?;
    check_hash(path, &envelope.meta, expected_hash, force)?;
    Ok((envelope.data, envelope.meta))
}

/// The stamped hash of a JSON artifact, if the file exists and parses.
pub fn peek_json_hash(path: &Path) -> Option<Meta> {
    #[derive(Deserialize)]
    struct MetaOnly {
        meta: Meta,
    }
    let file = File::open(path).ok()?;
    serde_json::from_reader::<_, MetaOnly>(BufReader::new(file))
        .ok()
        .map(|m| m.meta)
}

fn check_hash(path: &Path, meta: &Meta, expected: &str, force: bool) -> Result<(), CliError> {
    if meta.config_hash != expected && !force {
        return Err(CliError {
            kind: ErrorKind::Integrity,
            message: format!(
                "{} was produced under config {} but the current config hashes to {}; \
                 rerun the producing stage or pass --force",
                path.display(),
                meta.config_hash,
                expected
            ),
        });
    }
    Ok(())
}

/// Comment lines stamped at the top of TSV artifacts.
pub fn tsv_meta_comments(stage: &str, config_hash: &str) -> Vec<String> {
    vec![format!(
        "config_hash={config_hash} tool_version={TOOL_VERSION} stage={stage}"
    )]
}

/// Parse a stamped TSV comment back into a meta record.
pub fn parse_tsv_meta(comments: &[String]) -> Option<Meta> {
    for c in comments {
        let mut hash = None;
        let mut version = None;
        let mut stage = None;
        for field in c.split_whitespace() {
            if let Some(v) = field.strip_prefix("config_hash=") {
                hash = Some(v.to_string());
            } else if let Some(v) = field.strip_prefix("tool_version=") {
                version = Some(v.to_string());
            } else if let Some(v) = field.strip_prefix("stage=") {
                stage = Some(v.to_string());
            }
        }
        if let (Some(config_hash), Some(tool_version), Some(stage)) = (hash, version, stage) {
            return Some(Meta {
                config_hash,
                tool_version,
                stage,
            });
        }
    }
    None
}

pub fn check_tsv_meta(
    path: &Path,
    comments: &[String],
    expected: &str,
    force: bool,
) -> Result<(), CliError> {
    match parse_tsv_meta(comments) {
        Some(meta) => check_hash(path, &meta, expected, force),
        // Unstamped files are external inputs, not our artifacts.
        None => Ok(()),
    }
}

/// The stamped hash of a TSV artifact, if present.
pub fn peek_tsv_hash(path: &Path) -> Option<Meta> {
    let file = File::open(path).ok()?;
    let mut comments = Vec::new();
    for line in BufReader::new(file).lines().take(5) {
        let line = line.ok()?;
        if let Some(c) = line.strip_prefix("# ") {
            comments.push(c.to_string());
        } else {
            break;
        }
    }
    parse_tsv_meta(&comments)
}

/// Write arbitrary lines with stamped comments (for plain TSV outputs).
pub fn write_stamped_tsv(
    path: &Path,
    stage: &str,
    config_hash: &str,
    header: &str,
    lines: &[String],
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError {
        kind: ErrorKind::Data,
        message: format!("cannot write {}: {e}", path.display()),
    })?;
    let mut w = BufWriter::new(file);
    let emit = |w: &mut BufWriter<File>, s: &str| -> Result<(), CliError> {
        writeln!(w, "{s}").map_err(|e| CliError {
            kind: ErrorKind::Data,
            message: format!("cannot write {}: {e}", path.display()),
        })
    };
    for c in tsv_meta_comments(stage, config_hash) {
        emit(&mut w, &format!("# {c}"))?;
    }
    emit(&mut w, header)?;
    for line in lines {
        emit(&mut w, line)?;
    }
    w.flush().map_err(|e| CliError {
        kind: ErrorKind::Data,
        message: format!("cannot flush {}: {e}", path.display()),
    })?;
    Ok(())
}

/// Read a stamped TSV produced by [`write_stamped_tsv`].
pub fn read_stamped_tsv(
    path: &Path,
    expected_header: &str,
    expected_hash: &str,
    force: bool,
) -> Result<Vec<Vec<String>>, CliError> {
    let file = File::open(path).map_err(|e| CliError {
        kind: ErrorKind::Data,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut comments = Vec::new();
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError {
            kind: ErrorKind::Data,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix("# ") {
            comments.push(c.to_string());
            continue;
        }
        if !saw_header {
            if line != expected_header {
                return Err(CliError {
                    kind: ErrorKind::Data,
                    message: format!(
                        "{} line {}: unexpected header {line:?}",
                        path.display(),
                        lineno + 1
                    ),
                });
            }
            saw_header = true;
            continue;
        }
        rows.push(line.split('\t').map(|s| s.to_string()).collect());
    }
    check_tsv_meta(path, &comments, expected_hash, force)?;
    Ok(rows)
}

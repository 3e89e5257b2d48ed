//! Persisted outputs: CSV tables, JSON summaries and the run manifest.
//!
//! Every file goes to a hidden temp file in the target directory and is
//! renamed into place only once fully written and synced.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One CSV cell. Floats carry 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(u64),
    S(String),
    B(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::I(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::I(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::F(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::F(v) if v.is_nan() => "nan".into(),
            Cell::F(v) if *v > 0.0 => "inf".into(),
            Cell::F(_) => "-inf".into(),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn lines(&self) -> impl Iterator<Item = String> + '_ {
        std::iter::once(self.columns.join(",")).chain(
            self.rows
                .iter()
                .map(|r| r.iter().map(Cell::render).collect::<Vec<_>>().join(",")),
        )
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Write `path` through `fill`. On any error the temp file is removed and
/// `path` keeps whatever it held before.
pub fn write_atomic<F>(path: &Path, fill: F) -> io::Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let tmp = temp_path(path);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        fill(&mut w)?;
        let file = w.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Called before every CSV row; an error aborts the write. Test hook for
/// crash injection.
pub type RowHook<'a> = &'a mut dyn FnMut(usize) -> io::Result<()>;

pub fn write_table(path: &Path, table: &Table, hook: Option<RowHook<'_>>) -> io::Result<()> {
    let mut hook = hook;
    write_atomic(path, |w| {
        for (i, line) in table.lines().enumerate() {
            if let Some(h) = hook.as_mut() {
                h(i)?;
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    write_atomic(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> io::Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((sha256_hex(&bytes), bytes.len() as u64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Warnings,
    IntegrityFailure,
}

/// Reproducibility record written after every other output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// SHA-256 of the canonical effective configuration.
    pub config_digest: String,
    pub seed: u64,
    pub workers: usize,
    pub started: String,
    pub finished: String,
    pub status: RunStatus,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputEntry>,
}

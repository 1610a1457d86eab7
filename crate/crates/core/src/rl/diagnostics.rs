use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// One line of the per-update diagnostics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update: usize,
    pub avg_return: f64,
    #[serde(rename = "J_c")]
    pub j_c: f64,
    pub bc_loss: f64,
    pub kl: f64,
    /// Realized surrogate objective gain of the accepted step.
    pub improvement: f64,
    /// Pooled samples consumed so far.
    pub steps: usize,
    pub env_steps: usize,
    pub episodes: usize,
    pub success_rate: f64,
    pub mode: String,
    pub accepted: bool,
    pub backtracks: usize,
    pub value_loss: f64,
    pub cost_value_loss: f64,
    pub logstd: [f64; 2],
}

/// Append-only JSON-lines log. The first line is a header object
/// (`{"config": ...}`); every following line is an [`UpdateRecord`].
#[derive(Debug)]
pub struct DiagnosticsLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl DiagnosticsLog {
    /// Creates (truncating) a log whose header embeds `config`.
    pub fn create(path: &Path, config: &serde_json::Value) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", serde_json::json!({ "config": config }))?;
        out.flush()?;
        Ok(Self { path: path.to_owned(), out })
    }

    /// Reopens an existing log for appending, rewriting the header with
    /// `config` and keeping only the first `keep` records (used when resuming
    /// from a checkpoint).
    pub fn resume(path: &Path, keep: usize, config: &serde_json::Value) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let kept: Vec<&str> = text.lines().skip(1).take(keep).collect();
        let mut out = BufWriter::new(OpenOptions::new().write(true).truncate(true).open(path)?);
        writeln!(out, "{}", serde_json::json!({ "config": config }))?;
        for line in kept {
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(Self { path: path.to_owned(), out })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &UpdateRecord) -> std::io::Result<()> {
        let line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        writeln!(self.out, "{line}")?;
        self.out.flush()
    }

    /// Reads back the header and all records.
    pub fn read(path: &Path) -> std::io::Result<(serde_json::Value, Vec<UpdateRecord>)> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header = match lines.next() {
            Some(line) => serde_json::from_str(&line?).map_err(std::io::Error::other)?,
            None => serde_json::Value::Null,
        };
        let mut records = Vec::new();
        for line in lines {
            records.push(serde_json::from_str(&line?).map_err(std::io::Error::other)?);
        }
        Ok((header, records))
    }
}

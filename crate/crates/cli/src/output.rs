use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

/// Output directory plus the provenance header shared by every file.
pub struct Output {
    pub dir: PathBuf,
    pub format: Format,
    meta: Value,
}

impl Output {
    pub fn new(
        dir: PathBuf,
        format: Format,
        command: &str,
        seed: Option<u64>,
        config: Value,
    ) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let meta = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp": timestamp,
            "seed": seed,
            "config": config,
        });
        Self { dir, format, meta }
    }

    pub fn csv(&self) -> bool {
        self.format != Format::Json
    }

    pub fn json(&self) -> bool {
        self.format != Format::Csv
    }

    /// Metadata as one JSON line, for CSV comment headers.
    pub fn meta_line(&self) -> String {
        self.meta.to_string()
    }

    /// Create (truncate) an output file. Called for every file before any
    /// computation so unwritable targets fail early.
    pub fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| {
            CliError::Validation(format!("cannot create {}: {e}", self.dir.display()))
        })?;
        let path = self.dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
    }

    /// Write `body` as a JSON object with a `meta` field prepended.
    pub fn write_json<T: Serialize>(
        &self,
        mut out: BufWriter<File>,
        body: &T,
    ) -> Result<(), CliError> {
        let mut doc = serde_json::Map::new();
        doc.insert("meta".into(), self.meta.clone());
        match serde_json::to_value(body).map_err(compute)? {
            Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("data".into(), other);
            }
        }
        serde_json::to_writer_pretty(&mut out, &Value::Object(doc)).map_err(compute)?;
        writeln!(out).map_err(compute)?;
        out.flush().map_err(compute)
    }
}

pub fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

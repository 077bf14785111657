use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// Version of the CSV layouts written by this tool. Bump when columns change.
pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Provenance written as `#` comment lines ahead of every CSV.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub tool_version: &'static str,
    pub timestamp: String,
    pub inputs: Vec<(String, String)>,
    pub notes: Vec<String>,
}

impl RunManifest {
    /// `config` is the canonical rendering of the resolved options.
    pub fn new(command: &str, config: &str) -> Self {
        Self {
            command: command.to_string(),
            config_hash: sha256_hex(config.as_bytes()),
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            inputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn input(&mut self, name: &str, contents: &[u8]) {
        self.inputs.push((name.to_string(), sha256_hex(contents)));
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn header(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# blindcrb schema_version={SCHEMA_VERSION}");
        let _ = writeln!(s, "# command: {}", self.command);
        let _ = writeln!(s, "# config_sha256: {}", self.config_hash);
        let _ = writeln!(s, "# tool_version: {}", self.tool_version);
        let _ = writeln!(s, "# timestamp: {}", self.timestamp);
        for (name, digest) in &self.inputs {
            let _ = writeln!(s, "# input {name} sha256: {digest}");
        }
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        s
    }
}

/// A CSV table under construction.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, manifest: &RunManifest) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let body = String::from_utf8(w.into_inner().context("flushing csv")?)?;
        Ok(manifest.header() + &body)
    }
}

/// Formats a float for CSV: ten significant digits, `inf`/`nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.9e}")
    }
}

pub fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

//! Report emission and tracking of files written during a run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Files created by the current command; removed again if it fails.
pub struct Outputs {
    dir: Option<PathBuf>,
    created: Vec<PathBuf>,
    format: Format,
}

impl Outputs {
    pub fn new(dir: Option<PathBuf>, format: Format) -> Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Self {
            dir,
            created: Vec::new(),
            format,
        })
    }

    pub fn format(&self) -> Format {
        self.format
    }

    /// Relative paths are placed under `--out` when given.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.dir {
            Some(d) if path.is_relative() => d.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn create(&mut self, path: &Path) -> Result<BufWriter<File>> {
        let path = self.resolve(path);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.created.push(path);
        Ok(BufWriter::new(file))
    }

    pub fn csv(&mut self, path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
        Ok(csv::Writer::from_writer(self.create(path)?))
    }

    pub fn discard(&mut self) {
        for p in self.created.drain(..) {
            let _ = std::fs::remove_file(p);
        }
    }

    /// Prints the JSON report, stamped with the command, version and the
    /// resolved configuration, and saves a copy under `--out`.
    pub fn json_report(&mut self, command: &str, config: &RunConfig, body: Value) -> Result<()> {
        let mut report = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
        });
        if let (Value::Object(dst), Value::Object(src)) = (&mut report, body) {
            dst.extend(src);
        }
        let text = serde_json::to_string_pretty(&report)?;
        to_stdout(format!("{text}\n").as_bytes())?;
        if self.dir.is_some() {
            let mut w = self.create(Path::new(&format!("{command}.json")))?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        Ok(())
    }

    /// Prints CSV rows and saves a copy under `--out`.
    pub fn csv_report(
        &mut self,
        command: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<()> {
        let render = |w: &mut dyn Write| -> Result<()> {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(header)?;
            for r in rows {
                c.write_record(r)?;
            }
            c.flush()?;
            Ok(())
        };
        let mut buf = Vec::new();
        render(&mut buf)?;
        to_stdout(&buf)?;
        if self.dir.is_some() {
            let mut w = self.create(Path::new(&format!("{command}.csv")))?;
            render(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }
}

/// A closed pipe on stdout (e.g. `| head`) is not an error.
fn to_stdout(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

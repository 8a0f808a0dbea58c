use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use condflow::io::{write_csv, write_json, CsvRow, Envelope};
use serde::Serialize;

use crate::cli::Format;
use crate::CliError;

/// Where data and summaries go.
pub struct Sink {
    pub format: Format,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub config: serde_json::Value,
}

#[derive(Serialize)]
struct WithRows<'a, S, R> {
    summary: &'a S,
    rows: &'a [R],
}

fn open(path: Option<&Path>, fallback: fn() -> Box<dyn Write>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(fallback()),
    }
}

fn stdout() -> Box<dyn Write> {
    Box::new(BufWriter::new(io::stdout().lock()))
}

fn stderr() -> Box<dyn Write> {
    Box::new(io::stderr().lock())
}

fn finish(mut w: Box<dyn Write>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Usage(format!("write failed: {e}")))
}

impl Sink {
    /// CSV rows to the data output and the summary envelope to the summary
    /// output, or one JSON envelope holding both.
    pub fn emit<R, S>(&self, rows: &[R], summary: &S) -> Result<(), CliError>
    where
        R: CsvRow + Serialize,
        S: Serialize,
    {
        match self.format {
            Format::Csv => {
                let mut w = open(self.out.as_deref(), stdout)?;
                write_csv(&mut w, rows)?;
                finish(w)?;
                self.emit_summary(summary)
            }
            Format::Json => {
                let mut w = open(self.out.as_deref(), stdout)?;
                write_json(&mut w, &Envelope::new(&self.config, WithRows { summary, rows }))?;
                writeln!(w).map_err(|e| CliError::Usage(e.to_string()))?;
                finish(w)
            }
        }
    }

    pub fn emit_summary<S: Serialize>(&self, summary: &S) -> Result<(), CliError> {
        let mut w = open(self.summary.as_deref(), stderr)?;
        write_json(&mut w, &Envelope::new(&self.config, summary))?;
        writeln!(w).map_err(|e| CliError::Usage(e.to_string()))?;
        finish(w)
    }

    /// A results-only envelope on the data output.
    pub fn emit_json<S: Serialize>(&self, results: &S) -> Result<(), CliError> {
        let mut w = open(self.out.as_deref(), stdout)?;
        write_json(&mut w, &Envelope::new(&self.config, results))?;
        writeln!(w).map_err(|e| CliError::Usage(e.to_string()))?;
        finish(w)
    }

    /// Plain text on the data output.
    pub fn emit_text(&self, text: &str) -> Result<(), CliError> {
        let mut w = open(self.out.as_deref(), stdout)?;
        w.write_all(text.as_bytes()).map_err(|e| CliError::Usage(e.to_string()))?;
        finish(w)
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use qgamma::io::fmt_f64;

use crate::CliError;

/// Output directory plus the enabled formats.
pub struct Sink {
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, csv: bool, json: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            csv,
            json,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        if !self.json {
            return Ok(());
        }
        let p = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
        fs::write(&p, text + "\n").map_err(|e| CliError::Output(format!("{}: {e}", p.display())))?;
        self.written.push(p);
        Ok(())
    }

    /// RFC 4180 CSV; floats with 17 significant digits.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<(), CliError> {
        if !self.csv {
            return Ok(());
        }
        let p = self.path(name);
        let err = |e: csv::Error| CliError::Output(format!("{}: {e}", p.display()));
        let mut w = csv::Writer::from_path(&p).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r.iter().map(Cell::render)).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::Output(format!("{}: {e}", p.display())))?;
        self.written.push(p);
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::Output(format!("{}: {e}", p.display())))?;
        self.written.push(p);
        Ok(())
    }

    pub fn note(&mut self, p: PathBuf) {
        self.written.push(p);
    }
}

pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    B(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }
}

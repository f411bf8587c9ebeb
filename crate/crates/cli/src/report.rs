use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use potlab_core::potential::export;
use potlab_core::TorusGrid;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;
use crate::CliError;

/// Run metadata that legitimately differs between identical runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub timestamp: String,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Body {
    pub command: String,
    pub passed: bool,
    pub config: RunConfig,
    pub result: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub header: Header,
    pub body: Body,
}

/// Collects the output of one command.
pub(crate) struct Sink<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    started: Instant,
}

impl<'a> Sink<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        let dir = cfg.output.directory.clone();
        fs::create_dir_all(&dir)?;
        Ok(Self { cfg, dir, started: Instant::now() })
    }

    /// CSV dump plus a gnuplot slice through the middle plane.
    pub fn field(&self, grid: &TorusGrid, name: &str, values: &[f64]) -> Result<(), CliError> {
        if !self.cfg.output.fields {
            return Ok(());
        }
        let mut w = BufWriter::new(File::create(self.dir.join(format!("{name}.csv")))?);
        export::write_csv(grid, values, &mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(self.dir.join(format!("{name}_slice.dat")))?);
        export::write_slice(grid, values, grid.cells_per_side() / 2, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn finish<T: Serialize>(self, command: &str, passed: bool, result: &T) -> Result<PathBuf, CliError> {
        let report = Report {
            header: Header {
                tool: "potlab".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                timestamp: chrono::Utc::now().to_rfc3339(),
                elapsed_seconds: self.started.elapsed().as_secs_f64(),
            },
            body: Body {
                command: command.into(),
                passed,
                config: self.cfg.clone(),
                result: serde_json::to_value(result).expect("reports serialize"),
            },
        };
        let path = self.dir.join(format!("{command}.json"));
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &report).expect("reports serialize");
        writeln!(w)?;
        w.flush()?;
        println!("report: {}", path.display());
        Ok(path)
    }
}

//! Run manifests and the bookkeeping shared by every subcommand.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const VERSION: &str = concat!("kslab-cli ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

impl Relation {
    pub fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Relation::AtMost => value <= bound,
            Relation::AtLeast => value >= bound,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Invariant {
    /// `None` when the measurement is not finite, which always fails.
    pub value: Option<f64>,
    pub relation: Relation,
    pub bound: f64,
    pub pass: bool,
}

impl Invariant {
    pub fn new(value: f64, relation: Relation, bound: f64) -> Self {
        let finite = value.is_finite();
        Self {
            value: finite.then_some(value),
            relation,
            bound,
            pass: finite && relation.holds(value, bound),
        }
    }

    pub fn line(&self, name: &str) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        let value = self
            .value
            .map_or("non-finite".to_string(), |v| format!("{v:.4e}"));
        format!(
            "{tag}  {name:<40} {value:>12} {} {:.4e}",
            self.relation.symbol(),
            self.bound
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub subcommand: String,
    /// The resolved union of defaults, config file and flags.
    pub config: Value,
    pub version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub invariants: BTreeMap<String, Invariant>,
    /// Grid and tolerance settings of individual checks.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub settings: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.invariants.values().all(|i| i.pass)
    }
}

/// Collects outputs and invariants of one subcommand.
pub struct Session {
    subcommand: &'static str,
    out: Option<PathBuf>,
    started: Instant,
    outputs: Vec<String>,
    invariants: BTreeMap<String, Invariant>,
    settings: BTreeMap<String, Value>,
}

impl Session {
    pub fn new(subcommand: &'static str, out: Option<PathBuf>) -> CliResult<Self> {
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            subcommand,
            out,
            started: Instant::now(),
            outputs: Vec::new(),
            invariants: BTreeMap::new(),
            settings: BTreeMap::new(),
        })
    }

    pub fn has_out(&self) -> bool {
        self.out.is_some()
    }

    /// Report lines go to stdout when data goes to files, and to stderr
    /// when the data itself is on stdout.
    pub fn report(&self, line: &str) {
        if self.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }

    fn sink(&mut self, name: &str) -> CliResult<Box<dyn Write>> {
        match &self.out {
            Some(dir) => {
                self.outputs.push(name.to_string());
                Ok(Box::new(BufWriter::new(File::create(dir.join(name))?)))
            }
            None => Ok(Box::new(std::io::stdout().lock())),
        }
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(self.sink(name)?);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut w = self.sink(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn check(
        &mut self,
        name: impl Into<String>,
        value: f64,
        relation: Relation,
        bound: f64,
    ) -> bool {
        let name = name.into();
        let inv = Invariant::new(value, relation, bound);
        self.report(&inv.line(&name));
        self.invariants.insert(name, inv);
        inv.pass
    }

    pub fn record_settings(&mut self, name: &str, settings: Value) {
        self.settings.insert(name.to_string(), settings);
    }

    /// Writes the manifest (with an output directory) and maps failed
    /// invariants onto the exit contract.
    pub fn finish(self, config: &impl Serialize) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            command: std::env::args().collect(),
            subcommand: self.subcommand.to_string(),
            config: serde_json::to_value(config)?,
            version: VERSION.to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
            invariants: self.invariants,
            settings: self.settings,
        };
        if let Some(dir) = &self.out {
            write_manifest(&dir.join("manifest.json"), &manifest)?;
        }
        if manifest.passed() {
            Ok(manifest)
        } else {
            let failed: Vec<&str> = manifest
                .invariants
                .iter()
                .filter(|(_, i)| !i.pass)
                .map(|(n, _)| n.as_str())
                .collect();
            Err(CliError::Invariant(failed.join(", ")))
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    writeln!(w)?;
    Ok(())
}

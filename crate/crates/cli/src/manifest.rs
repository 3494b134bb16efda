use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use oampdc::cache::{hex, setup_hash};
use oampdc::grid::GridSpec;
use oampdc::setup::OpticalSetup;

use crate::error::CliError;

/// Record of one run, written next to its outputs as `<command>_manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub setup_hash: String,
    pub setup: OpticalSetup,
    pub grid: GridSpec,
    pub outputs: Vec<String>,
    pub cache_dir: Option<PathBuf>,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub results: BTreeMap<String, f64>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, setup: &OpticalSetup, grid: &GridSpec) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION"),
            setup_hash: hex(&setup_hash(setup, grid)),
            setup: *setup,
            grid: *grid,
            outputs: Vec::new(),
            cache_dir: None,
            cache_hits: 0,
            cache_misses: 0,
            results: BTreeMap::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(format!("{}_manifest.json", self.command));
        serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), self)?;
        Ok(path)
    }
}

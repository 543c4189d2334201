//! Optional JSON config file shared by every command. Sections mirror the
//! long flags; explicit flags win over config values, which win over
//! built-in defaults. A top-level `seed` feeds every component unless the
//! component sets its own; the `--seed` flag overrides them all.

use crate::error::CliError;
use litr_core::{SimConfig, TrainingConfig};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub simulate: Option<SimConfig>,
    pub train: Option<TrainingConfig>,
    pub crossval: Option<CrossvalSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossvalSection {
    pub folds: usize,
    pub repeats: usize,
    pub direction: Option<String>,
    pub aggregate: Option<String>,
    pub outcomes: Vec<String>,
    pub baseline: bool,
}

impl Default for CrossvalSection {
    fn default() -> Self {
        CrossvalSection {
            folds: 4,
            repeats: 1,
            direction: None,
            aggregate: None,
            outcomes: Vec::new(),
            baseline: true,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: invalid config: {e}", path.display())))
    }
}

//! One module per subcommand plus shared output helpers.

pub mod crossval;
pub mod evaluate;
pub mod recommend;
pub mod simulate;
pub mod train;

use crate::error::{io_error, CliError};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Sidecar path for delimited outputs: `recs.csv` -> `recs.meta.json`.
pub fn meta_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

/// Write a JSON document with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

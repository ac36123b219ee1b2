pub mod approx;
pub mod bench;
pub mod gen;
pub mod oracle;
pub mod regimes;
pub mod stats;

use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// `dir/name.csv` or `dir/name.bin`, whichever exists.
pub(crate) fn find_matrix(dir: &Path, name: &str) -> CliResult<PathBuf> {
    ["csv", "bin"]
        .iter()
        .map(|ext| dir.join(format!("{name}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Usage(format!("no {name}.csv or {name}.bin in {}", dir.display())))
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

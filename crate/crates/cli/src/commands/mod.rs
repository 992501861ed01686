pub mod budget;
pub mod fdtd;
pub mod g2;
pub mod placement;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

use crate::GlobalArgs;

/// The `--config` file when given, otherwise `default`. Fields absent from
/// the file take the type's own defaults.
pub fn load_config<T: DeserializeOwned>(global: &GlobalArgs, default: impl FnOnce() -> T) -> Result<T> {
    match &global.config {
        Some(path) => read_json(path),
        None => Ok(default()),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

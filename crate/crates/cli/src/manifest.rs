//! Run manifests: the full invocation, hashes of every input file and
//! timings. Replaying a manifest re-runs the recorded invocation after
//! checking that the inputs are unchanged.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::commands::Invocation;
use crate::files::{read_json, sha256_file, write_json};
use crate::{CliError, CliResult};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputHash {
    pub fn of(path: &Path) -> CliResult<Self> {
        Ok(InputHash {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    /// Every parameter of the run, output location included.
    pub invocation: Invocation,
    pub seed: u64,
    pub inputs: Vec<InputHash>,
    pub version: String,
    /// Wall-clock seconds per phase. Not part of any reproduced output.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(
        invocation: Invocation,
        inputs: Vec<InputHash>,
        timings: BTreeMap<String, f64>,
    ) -> Self {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: invocation.name().to_owned(),
            seed: invocation.seed(),
            invocation,
            inputs,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            timings,
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let m: RunManifest = read_json(path)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "{}: manifest schema {} is not supported (expected {})",
                path.display(),
                m.schema_version,
                MANIFEST_SCHEMA_VERSION
            )));
        }
        Ok(m)
    }

    /// Fails if any recorded input is missing or its contents changed.
    pub fn verify_inputs(&self) -> CliResult<()> {
        for input in &self.inputs {
            let now = sha256_file(&input.path)?;
            if now != input.sha256 {
                return Err(CliError::Input(format!(
                    "{} changed since the manifest was written",
                    input.path.display()
                )));
            }
        }
        Ok(())
    }
}

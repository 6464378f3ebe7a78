//! Run manifest: what was run, with which settings, on which bytes.
//!
//! No timestamps or host details are recorded, so rerunning a command with
//! the manifest's config reproduces both the outputs and the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub library_version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: RunConfig,
    /// Fully resolved parameters of the command, where it has any beyond
    /// `config`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved: Option<serde_json::Value>,
    /// SHA-256 of every file read, keyed by path as given.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(command: &'static str, config: &RunConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            library_version: canmsg::VERSION,
            command,
            seed: config.seed,
            config: config.clone(),
            resolved: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Read an input file and record its checksum.
    pub fn read_input(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        self.inputs
            .insert(path.display().to_string(), sha256(&bytes));
        String::from_utf8(bytes)
            .map_err(|_| CliError::Config(format!("{}: not UTF-8", path.display())))
    }
}

/// Output directory that checksums everything written into it.
pub struct OutDir {
    dir: PathBuf,
    pub manifest: Manifest,
}

impl OutDir {
    /// Create `dir` and check that it accepts files.
    pub fn create(dir: &Path, manifest: Manifest) -> Result<Self, CliError> {
        let unwritable = |e: std::io::Error| {
            CliError::Config(format!(
                "output directory {} is not writable: {e}",
                dir.display()
            ))
        };
        std::fs::create_dir_all(dir).map_err(unwritable)?;
        let probe = dir.join(".canmsg-write-probe");
        std::fs::write(&probe, b"").map_err(unwritable)?;
        let _ = std::fs::remove_file(&probe);
        Ok(OutDir {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::write(&path, e))?;
        self.manifest
            .outputs
            .insert(name.to_string(), sha256(contents.as_bytes()));
        Ok(())
    }

    /// Write `manifest.json` last.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let path = self.dir.join("manifest.json");
        let text =
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::write(&path, e))?;
        Ok(path)
    }
}

/// Write a single output file and `<file>.manifest.json` beside it, or print
/// to stdout (no manifest) when no file is given.
pub fn emit(output: Option<&Path>, contents: &str, mut manifest: Manifest) -> Result<(), CliError> {
    let Some(path) = output else {
        print!("{contents}");
        return Ok(());
    };
    std::fs::write(path, contents).map_err(|e| CliError::write(path, e))?;
    let name = path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    manifest
        .outputs
        .insert(name.clone(), sha256(contents.as_bytes()));
    let mpath = path.with_file_name(format!("{name}.manifest.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&mpath, text).map_err(|e| CliError::write(&mpath, e))
}

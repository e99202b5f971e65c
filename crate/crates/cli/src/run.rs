//! Output directory bookkeeping: stage timing, file digests, the run
//! manifest and `.partial` renaming after a failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::settings::RunSettings;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub state: String,
    pub scheme: String,
    pub versions: BTreeMap<String, String>,
    pub config_path: Option<String>,
    pub config: String,
    pub settings: RunSettings,
    pub overrides: Vec<String>,
    pub stages: Vec<StageRecord>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    stage: String,
    seconds: f64,
}

/// Files touched by one stage.
#[derive(Default)]
pub struct StageIo {
    out_dir: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl StageIo {
    /// Registers a file in the output directory and returns its path.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    /// Registers a CSV and its JSON sidecar.
    pub fn output_with_sidecar(&mut self, name: &str) -> PathBuf {
        let p = self.output(name);
        self.outputs.push(levitomo::io::sidecar_path(&p));
        p
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Registers an input CSV plus its sidecar when one exists.
    pub fn input_with_sidecar(&mut self, path: &Path) {
        self.input(path);
        let side = levitomo::io::sidecar_path(path);
        if side.exists() {
            self.inputs.push(side);
        }
    }
}

pub struct Run {
    out_dir: PathBuf,
    manifest_name: String,
    manifest: Manifest,
    timings: Vec<Timing>,
    written: Vec<PathBuf>,
}

fn digest(path: &Path, label: String) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(FileDigest {
        path: label,
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

impl Run {
    pub fn new(out_dir: &Path, manifest_name: &str, mut manifest: Manifest) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", out_dir.display())))?;
        manifest.status = "running".into();
        Ok(Run {
            out_dir: out_dir.to_path_buf(),
            manifest_name: manifest_name.to_string(),
            manifest,
            timings: Vec::new(),
            written: Vec::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Paths inside the output directory are recorded relative to it so
    /// manifests from different directories compare equal.
    fn label(&self, p: &Path) -> String {
        p.strip_prefix(&self.out_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    }

    /// Runs one stage, recording its timing and file digests. On failure all
    /// files written so far are renamed with a `.partial` suffix.
    pub fn stage<R>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut StageIo) -> levitomo::Result<R>,
    ) -> Result<R, CliError> {
        let mut io = StageIo {
            out_dir: self.out_dir.clone(),
            ..StageIo::default()
        };
        let start = Instant::now();
        let result = f(&mut io);
        self.timings.push(Timing {
            stage: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        self.written.extend(io.outputs.iter().filter(|p| p.exists()).cloned());
        match result {
            Ok(r) => {
                let inputs = io
                    .inputs
                    .iter()
                    .map(|p| digest(p, self.label(p)))
                    .collect::<Result<_, _>>()?;
                let outputs = io
                    .outputs
                    .iter()
                    .map(|p| digest(p, self.label(p)))
                    .collect::<Result<_, _>>()?;
                self.manifest.stages.push(StageRecord {
                    name: name.to_string(),
                    inputs,
                    outputs,
                });
                Ok(r)
            }
            Err(source) => {
                let err = CliError::Stage {
                    stage: name.to_string(),
                    source,
                };
                self.fail(&err);
                Err(err)
            }
        }
    }

    fn fail(&mut self, err: &CliError) {
        let mut renamed = Vec::new();
        for p in &self.written {
            let mut partial = p.as_os_str().to_owned();
            partial.push(".partial");
            if fs::rename(p, &partial).is_ok() {
                renamed.push(PathBuf::from(partial));
            }
        }
        self.written = renamed;
        self.manifest.status = "failed".into();
        self.manifest.error = Some(err.to_string());
        let name = format!("{}.partial", self.manifest_name);
        // Best effort: the stage error is what gets reported.
        let _ = levitomo::io::write_json(&self.out_dir.join(name), &self.manifest);
    }

    /// Writes the manifest and the timings file.
    pub fn finish(mut self) -> Result<Vec<PathBuf>, CliError> {
        self.manifest.status = "complete".into();
        let manifest_path = self.out_dir.join(&self.manifest_name);
        let timings_name = self.manifest_name.replace("manifest", "timings");
        let timings_path = self.out_dir.join(timings_name);
        levitomo::io::write_json(&manifest_path, &self.manifest)?;
        levitomo::io::write_json(&timings_path, &self.timings)?;
        let mut files = self.written;
        files.push(manifest_path);
        files.push(timings_path);
        Ok(files)
    }
}

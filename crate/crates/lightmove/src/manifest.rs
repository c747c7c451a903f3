//! One manifest per run, written next to the run's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::digest::sha256_file;
use crate::run::{Outcome, Run};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT: &str = "lightmove-run/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
    /// Holds wall-clock measurements, so the digest changes between runs.
    #[serde(default)]
    pub timed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub seed: Option<u64>,
    pub threads: usize,
    pub config: Run,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

fn artifacts(paths: &[PathBuf], timed: &[PathBuf]) -> Result<Vec<Artifact>> {
    paths
        .iter()
        .map(|p| {
            Ok(Artifact {
                path: p.clone(),
                sha256: sha256_file(p)?,
                timed: timed.contains(p),
            })
        })
        .collect()
}

/// Executes `run` and writes its manifest into the run's output directory.
pub fn execute_recorded(run: &Run) -> Result<RunManifest> {
    let Outcome {
        inputs,
        outputs,
        timed,
    } = run.execute()?;
    let manifest = RunManifest {
        format: FORMAT.into(),
        command: run.name().into(),
        seed: run.seed(),
        threads: rayon::current_num_threads(),
        config: run.clone(),
        inputs: artifacts(&inputs, &[])?,
        outputs: artifacts(&outputs, &timed)?,
    };
    let path = run.out().join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if m.format != FORMAT {
        bail!(
            "{}: unsupported manifest format {:?}",
            path.display(),
            m.format
        );
    }
    Ok(m)
}

/// Output files whose digests differ between two runs of the same command,
/// matched by file name. Timed outputs are skipped.
pub fn differing_outputs(a: &RunManifest, b: &RunManifest) -> Vec<String> {
    let mut out = Vec::new();
    for x in a.outputs.iter().filter(|x| !x.timed) {
        let name = x.path.file_name();
        match b.outputs.iter().find(|y| y.path.file_name() == name) {
            Some(y) if y.sha256 == x.sha256 => {}
            _ => out.push(x.path.display().to_string()),
        }
    }
    out
}

/// Runs the recorded command again, optionally into another directory, and
/// fails if any untimed output differs from the recording.
pub fn replay(manifest_path: &Path, out: Option<PathBuf>) -> Result<RunManifest> {
    let recorded = read_manifest(manifest_path)?;
    for input in &recorded.inputs {
        let now = sha256_file(&input.path)?;
        if now != input.sha256 {
            bail!(
                "input {} changed since the recorded run",
                input.path.display()
            );
        }
    }
    let mut run = recorded.config.clone();
    if let Some(dir) = out {
        run.set_out(dir);
    }
    let fresh = execute_recorded(&run)?;
    let differ = differing_outputs(&recorded, &fresh);
    if !differ.is_empty() {
        bail!("replay produced different outputs: {}", differ.join(", "));
    }
    Ok(fresh)
}

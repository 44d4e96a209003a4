//! Run manifests: the resolved config plus digests, timing and seed lineage.
//! A manifest is itself a valid config for its command.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::{parse_sections, RunConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    /// Relative path → sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_s: f64,
    /// `(seed, stream)` pairs recorded by the producing fields.
    pub seed_lineage: Vec<(u64, u64)>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Files below `dir` (relative, `/`-separated), manifest excluded, sorted.
pub fn list_outputs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
        for e in std::fs::read_dir(dir)? {
            let p = e?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else if p.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

fn rel_name(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

impl RunManifest {
    pub fn collect(config: &RunConfig, out_dir: &Path, inputs: &[PathBuf], wall_clock_s: f64, seed_lineage: Vec<(u64, u64)>) -> CliResult<Self> {
        let mut outputs = BTreeMap::new();
        for p in list_outputs(out_dir)? {
            outputs.insert(rel_name(&p), sha256_file(&out_dir.join(&p))?);
        }
        let mut ins = BTreeMap::new();
        for p in inputs {
            ins.insert(p.display().to_string(), sha256_file(p)?);
        }
        Ok(RunManifest { version: env!("CARGO_PKG_VERSION").into(), config: config.clone(), inputs: ins, outputs, wall_clock_s, seed_lineage })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# rslab run manifest\n");
        s.push_str(&self.config.to_text());
        let _ = writeln!(s, "[manifest]");
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "wall_clock_s = {:.3}", self.wall_clock_s);
        let lineage: Vec<String> = self.seed_lineage.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        let _ = writeln!(s, "seed_lineage = {}", lineage.join(";"));
        for (name, map) in [("inputs", &self.inputs), ("outputs", &self.outputs)] {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in map {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        std::fs::write(dir.join(MANIFEST_FILE), self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        let secs = parse_sections(&text)?;
        let command = crate::config::command_of(&text)?;
        let config = RunConfig::resolve(&command, Some(&text), &[])?;
        let meta = secs.get("manifest").ok_or_else(|| CliError::Config("manifest section missing".into()))?;
        let lineage = meta
            .get("seed_lineage")
            .map(|v| {
                v.split(';')
                    .filter(|p| !p.is_empty())
                    .map(|p| {
                        let (a, b) = p.split_once(':').ok_or_else(|| CliError::Config(format!("bad lineage entry {p}")))?;
                        Ok((a.parse().map_err(|_| CliError::Config(p.into()))?, b.parse().map_err(|_| CliError::Config(p.into()))?))
                    })
                    .collect::<CliResult<Vec<_>>>()
            })
            .transpose()?
            .unwrap_or_default();
        Ok(RunManifest {
            version: meta.get("version").cloned().unwrap_or_default(),
            config,
            inputs: secs.get("inputs").cloned().unwrap_or_default(),
            outputs: secs.get("outputs").cloned().unwrap_or_default(),
            wall_clock_s: meta.get("wall_clock_s").and_then(|v| v.parse().ok()).unwrap_or(0.0),
            seed_lineage: lineage,
        })
    }

    /// Output names whose digests differ from `other` (RSF1 files only when
    /// `rsf1_only`), including files present in only one of the two.
    pub fn differing_outputs(&self, other: &RunManifest, rsf1_only: bool) -> Vec<String> {
        let keep = |k: &String| !rsf1_only || k.ends_with(".rsf1");
        let mut out: Vec<String> = self
            .outputs
            .iter()
            .filter(|(k, _)| keep(k))
            .filter(|(k, v)| other.outputs.get(*k) != Some(*v))
            .map(|(k, _)| k.clone())
            .collect();
        out.extend(other.outputs.keys().filter(|k| keep(k) && !self.outputs.contains_key(*k)).cloned());
        out
    }
}

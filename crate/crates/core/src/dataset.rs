//! Dataset splits, source→target pairing plans and hashed manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fda::FdaParams;
use crate::simulator::SimulationParams;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub unassigned: Vec<String>,
}

/// Seeded shuffle of `corpus` followed by contiguous train/val/test slices.
pub fn split(corpus: &[String], spec: &SplitSpec) -> Result<Split> {
    let wanted = spec.train + spec.val + spec.test;
    if wanted > corpus.len() {
        return Err(Error::Configuration(format!(
            "split {}/{}/{} needs {wanted} samples, corpus has {}",
            spec.train,
            spec.val,
            spec.test,
            corpus.len()
        )));
    }
    let mut ids = corpus.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let unassigned = ids.split_off(wanted);
    let test = ids.split_off(spec.train + spec.val);
    let val = ids.split_off(spec.train);
    Ok(Split { train: ids, val, test, unassigned })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    RandomPerIteration,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingPlan {
    pub mode: PairingMode,
    /// Present in fixed mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignments: Option<BTreeMap<String, String>>,
    pub target_pool: Vec<String>,
    pub seed: u64,
}

/// Index into a pool of `len` targets drawn from a stream keyed by
/// `(seed, iteration, source_id)`.
fn keyed_draw(seed: u64, iteration: u64, source_id: &str, len: usize) -> usize {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(iteration.to_le_bytes());
    hasher.update(source_id.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key).random_range(0..len)
}

fn check_pool(pool: &[String]) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::Configuration("target pool is empty".into()));
    }
    Ok(())
}

impl PairingPlan {
    pub fn random(target_pool: Vec<String>, seed: u64) -> Result<Self> {
        check_pool(&target_pool)?;
        Ok(Self { mode: PairingMode::RandomPerIteration, assignments: None, target_pool, seed })
    }

    /// A fixed plan drawn once from `seed`; later iterations reuse it.
    pub fn fixed_from_seed(sources: &[String], target_pool: Vec<String>, seed: u64) -> Result<Self> {
        check_pool(&target_pool)?;
        let assignments = sources
            .iter()
            .map(|s| {
                let t = keyed_draw(seed, 0, s, target_pool.len());
                (s.clone(), target_pool[t].clone())
            })
            .collect();
        Ok(Self { mode: PairingMode::Fixed, assignments: Some(assignments), target_pool, seed })
    }

    pub fn fixed(assignments: BTreeMap<String, String>, target_pool: Vec<String>, seed: u64) -> Result<Self> {
        let plan = Self { mode: PairingMode::Fixed, assignments: Some(assignments), target_pool, seed };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        check_pool(&self.target_pool)?;
        if self.mode == PairingMode::Fixed {
            let map = self
                .assignments
                .as_ref()
                .ok_or_else(|| Error::Manifest("fixed pairing has no assignments".into()))?;
            if let Some((s, t)) = map.iter().find(|(_, t)| !self.target_pool.contains(t)) {
                return Err(Error::Manifest(format!(
                    "source {s} is assigned to {t}, which is not in the target pool"
                )));
            }
        }
        Ok(())
    }

    /// Resolves the target of every source for `iteration`. Fixed plans
    /// ignore the iteration.
    pub fn resolve(&self, sources: &[String], iteration: u64) -> Result<PairingResolution> {
        self.validate()?;
        let mut assignments = BTreeMap::new();
        let mut indices = Vec::with_capacity(sources.len());
        for s in sources {
            let t = match self.mode {
                PairingMode::RandomPerIteration => {
                    keyed_draw(self.seed, iteration, s, self.target_pool.len())
                }
                PairingMode::Fixed => {
                    let target = self.assignments.as_ref().and_then(|m| m.get(s)).ok_or_else(|| {
                        Error::Manifest(format!("fixed pairing has no entry for source {s}"))
                    })?;
                    self.target_pool.iter().position(|p| p == target).expect("validated")
                }
            };
            indices.push(t);
            assignments.insert(s.clone(), self.target_pool[t].clone());
        }
        Ok(PairingResolution { iteration, indices, assignments })
    }
}

/// The concrete target chosen for each source at one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingResolution {
    pub iteration: u64,
    /// Target-pool index per source, in source order.
    pub indices: Vec<usize>,
    pub assignments: BTreeMap<String, String>,
}

pub fn make_pairing(
    sources: &[String],
    targets: &[String],
    mode: PairingMode,
    seed: u64,
    iteration: u64,
) -> Result<(PairingPlan, PairingResolution)> {
    let plan = match mode {
        PairingMode::RandomPerIteration => PairingPlan::random(targets.to_vec(), seed)?,
        PairingMode::Fixed => PairingPlan::fixed_from_seed(sources, targets.to_vec(), seed)?,
    };
    let resolution = plan.resolve(sources, iteration)?;
    Ok((plan, resolution))
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPairing {
    pub name: String,
    pub plan: PairingPlan,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resolutions: Vec<PairingResolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool_version: String,
    /// Directory the file records resolve against, relative to the
    /// manifest's own directory.
    #[serde(default = "default_root")]
    pub root: String,
    pub files: Vec<FileRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_spec: Option<SplitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairings: Vec<NamedPairing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fda: Option<FdaParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            tool_version: TOOL_VERSION.into(),
            root: default_root(),
            files: Vec::new(),
            split_spec: None,
            split: None,
            pairings: Vec::new(),
            fda: None,
            simulation: None,
            seed: None,
        }
    }
}

fn default_root() -> String {
    ".".into()
}

impl DatasetManifest {
    /// Hashes `paths` (relative to `root`) and records them in order.
    pub fn add_files<I, P>(&mut self, root: &Path, paths: I) -> Result<()>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<Path>,
    {
        for rel in paths {
            let rel = rel.as_ref();
            let sha256 = hash_file(&root.join(rel))?;
            self.files.push(FileRecord { path: id_from_relative(rel), sha256 });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn pairing(&self, name: &str) -> Option<&NamedPairing> {
        self.pairings.iter().find(|p| p.name == name)
    }
}

/// Relative path from directory `from` to directory `to`, `/`-separated.
/// Both are canonicalized first.
pub fn relative_dir(from: &Path, to: &Path) -> Result<String> {
    let from = fs::canonicalize(from).map_err(|e| Error::io(from, e))?;
    let to = fs::canonicalize(to).map_err(|e| Error::io(to, e))?;
    let a: Vec<_> = from.components().collect();
    let b: Vec<_> = to.components().collect();
    let common = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut parts: Vec<String> = vec!["..".into(); a.len() - common];
    parts.extend(b[common..].iter().map(|c| c.as_os_str().to_string_lossy().into_owned()));
    Ok(if parts.is_empty() { ".".into() } else { parts.join("/") })
}

/// Sample id for a relative path: components joined with `/`.
pub fn id_from_relative(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    fs::write(path, manifest.to_json()?).map_err(|e| Error::io(path, e))
}

/// Parses a manifest and checks every recorded file against its hash.
/// Paths resolve relative to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = DatasetManifest::from_json(&text)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    verify_files(&root, &manifest)?;
    Ok(manifest)
}

/// Checks every file record; `manifest_dir` is where the manifest lives.
pub fn verify_files(manifest_dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let root = manifest_dir.join(&manifest.root);
    for record in &manifest.files {
        let file: PathBuf = root.join(&record.path);
        let bytes = fs::read(&file).map_err(|e| Error::Integrity {
            path: file.clone(),
            reason: format!("cannot read recorded file: {e}"),
        })?;
        let actual = sha256_hex(&bytes);
        if actual != record.sha256 {
            return Err(Error::Integrity {
                path: file,
                reason: format!("hash mismatch: recorded {}, found {actual}", record.sha256),
            });
        }
    }
    Ok(())
}

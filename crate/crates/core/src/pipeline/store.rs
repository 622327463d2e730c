use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{decode_f64, encode_f64};
use crate::error::{Error, Result};
use crate::geometry::ParamVector;

use super::config::PipelineConfig;
use super::fom::FullOrder;
use super::sobol::sobol_sample;

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "igapod-snapshots";

/// Largest tolerated share of failed samples.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Validation];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Solved {
        file: String,
        iterations: usize,
        residual: f64,
        /// Full-order torque in N m, when torque evaluation is enabled.
        torque: Option<f64>,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub split: Split,
    pub params: ParamVector,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl SampleRecord {
    pub fn is_solved(&self) -> bool {
        matches!(self.outcome, Outcome::Solved { .. })
    }

    pub fn torque(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Solved { torque, .. } => torque,
            Outcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub n_dofs: usize,
    pub samples: Vec<SampleRecord>,
}

/// Directory of per-sample coefficient files plus a JSON manifest.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Sobol points for the three splits: consecutive blocks of one stream.
pub fn split_samples(cfg: &PipelineConfig) -> Result<Vec<(Split, ParamVector)>> {
    let s = cfg.samples;
    let points = sobol_sample(&cfg.ranges, s.total(), cfg.sobol_skip)?;
    let labels = std::iter::repeat_n(Split::Train, s.train)
        .chain(std::iter::repeat_n(Split::Test, s.test))
        .chain(std::iter::repeat_n(Split::Validation, s.validation));
    Ok(labels.zip(points).collect())
}

/// Solves every configured sample and persists the store.
pub fn generate_snapshots(cfg: &PipelineConfig) -> Result<SnapshotStore> {
    cfg.validate()?;
    generate_snapshots_for(cfg, &cfg.layout().snapshots(), &split_samples(cfg)?)
}

/// Solves the given samples into `dir`. Failed samples are recorded with
/// their reason; the manifest is written before a failure rate above
/// [`MAX_FAILURE_RATE`] is reported as an error.
pub fn generate_snapshots_for(
    cfg: &PipelineConfig,
    dir: &Path,
    samples: &[(Split, ParamVector)],
) -> Result<SnapshotStore> {
    if samples.is_empty() {
        return Err(Error::Input("no samples to solve".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    clear_samples(dir)?;
    let workers = cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;

    let results: Vec<Result<(SampleRecord, usize)>> = pool.install(|| {
        samples
            .par_iter()
            .enumerate()
            .map(|(index, &(split, params))| solve_sample(cfg, dir, index, split, params))
            .collect()
    });
    let mut records = Vec::with_capacity(samples.len());
    let mut n_dofs = None;
    for r in results {
        let (record, n) = r?;
        if record.is_solved() {
            if n_dofs.is_some_and(|m| m != n) {
                return Err(Error::Assembly(format!("sample {} has {n} coefficients, others {n_dofs:?}", record.index)));
            }
            n_dofs = Some(n);
        }
        records.push(record);
    }
    let store = SnapshotStore {
        dir: dir.to_path_buf(),
        manifest: Manifest {
            format: FORMAT.into(),
            version: 1,
            config_hash: cfg.snapshot_hash(),
            n_dofs: n_dofs.unwrap_or(0),
            samples: records,
        },
    };
    store.write_manifest()?;

    let failed: Vec<&SampleRecord> = store.manifest.samples.iter().filter(|r| !r.is_solved()).collect();
    for r in &failed {
        if let Outcome::Failed { reason } = &r.outcome {
            log::warn!("sample {} ({:?}) failed: {reason}", r.index, r.params);
        }
    }
    if failed.len() as f64 > MAX_FAILURE_RATE * samples.len() as f64 {
        return Err(Error::Solver(format!(
            "{} of {} samples failed (limit {:.0}%); see {}",
            failed.len(),
            samples.len(),
            100.0 * MAX_FAILURE_RATE,
            dir.join(MANIFEST).display()
        )));
    }
    Ok(store)
}

fn solve_sample(
    cfg: &PipelineConfig,
    dir: &Path,
    index: usize,
    split: Split,
    params: ParamVector,
) -> Result<(SampleRecord, usize)> {
    let attempt = || -> Result<(Vec<f64>, usize, f64, Option<f64>)> {
        let fom = FullOrder::build(cfg, &params)?;
        let sol = fom.solve(cfg)?;
        let u = sol.coefficients();
        let torque = if cfg.evaluation.torque.enabled { Some(fom.torque(cfg, &u)?) } else { None };
        Ok((u, sol.iterations, sol.residual_norm, torque))
    };
    let record = |outcome| SampleRecord { index, split, params, outcome };
    match attempt() {
        Ok((u, iterations, residual, torque)) => {
            let file = sample_file(index);
            let path = dir.join(&file);
            fs::write(&path, encode_f64(&u)).map_err(|e| Error::io(&path, e))?;
            log::info!("sample {index} solved in {iterations} iterations");
            Ok((record(Outcome::Solved { file, iterations, residual, torque }), u.len()))
        }
        Err(e @ Error::Io { .. }) => Err(e),
        Err(e) => Ok((record(Outcome::Failed { reason: e.to_string() }), 0)),
    }
}

fn sample_file(index: usize) -> String {
    format!("sample_{index:05}.f64")
}

fn clear_samples(dir: &Path) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name == MANIFEST || (name.starts_with("sample_") && name.ends_with(".f64")) {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

impl SnapshotStore {
    /// Opens an existing store. With `expected_hash` the configuration hash
    /// must match; every solved sample file must be present with the right size.
    pub fn open(dir: &Path, expected_hash: Option<&str>) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if manifest.format != FORMAT || manifest.version != 1 {
            return Err(Error::Format(format!("{} is not a snapshot manifest", path.display())));
        }
        if let Some(h) = expected_hash {
            if h != manifest.config_hash {
                return Err(Error::Usage(format!(
                    "snapshot store {} was generated with a different configuration",
                    dir.display()
                )));
            }
        }
        let store = Self { dir: dir.to_path_buf(), manifest };
        for r in &store.manifest.samples {
            if let Outcome::Solved { file, .. } = &r.outcome {
                let p = store.dir.join(file);
                let len = fs::metadata(&p).map_err(|e| Error::io(&p, e))?.len();
                if len != 8 * store.manifest.n_dofs as u64 {
                    return Err(Error::Format(format!("{}: {len} bytes, expected {}", p.display(), 8 * store.manifest.n_dofs)));
                }
            }
        }
        Ok(store)
    }

    pub fn write_manifest(&self) -> Result<()> {
        let path = self.dir.join(MANIFEST);
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn n_dofs(&self) -> usize {
        self.manifest.n_dofs
    }

    pub fn config_hash(&self) -> &str {
        &self.manifest.config_hash
    }

    /// Solved samples of one split, in sampling order.
    pub fn solved(&self, split: Split) -> Vec<&SampleRecord> {
        self.manifest.samples.iter().filter(|r| r.split == split && r.is_solved()).collect()
    }

    pub fn failures(&self) -> Vec<&SampleRecord> {
        self.manifest.samples.iter().filter(|r| !r.is_solved()).collect()
    }

    pub fn load(&self, record: &SampleRecord) -> Result<Vec<f64>> {
        let Outcome::Solved { file, .. } = &record.outcome else {
            return Err(Error::Input(format!("sample {} has no solution", record.index)));
        };
        let path = self.dir.join(file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() != 8 * self.n_dofs() {
            return Err(Error::Format(format!("{}: {} bytes, expected {}", path.display(), bytes.len(), 8 * self.n_dofs())));
        }
        Ok(decode_f64(&bytes))
    }
}

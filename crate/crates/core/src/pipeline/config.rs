use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{build_machine_geometry_with, MachineConfig, ParamRanges};
use crate::magnetostatics::{MaterialConfig, SolverConfig};
use crate::pod::ModeSelector;
use crate::surrogate::{SearchSpace, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleCounts {
    pub train: usize,
    pub test: usize,
    pub validation: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        Self { train: 128, test: 32, validation: 32 }
    }
}

impl SampleCounts {
    pub fn total(&self) -> usize {
        self.train + self.test + self.validation
    }
}

/// Which coefficients a snapshot contributes to POD and training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRegion {
    #[default]
    Full,
    /// Only coefficients whose basis function touches an air-gap ring patch.
    Airgap,
}

/// Matrix used for relative field errors during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalWeighting {
    /// Unit-reluctivity stiffness of the reference design (the POD weighting).
    #[default]
    Reference,
    /// Unit-reluctivity stiffness assembled on each sample's own geometry.
    SampleUnit,
    /// Each sample's stiffness with the converged reluctivity.
    SampleMaterial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub space: SearchSpace,
    pub trials: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { space: SearchSpace::default(), trials: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Replaces the fixed architecture by a random search when present.
    pub search: Option<SearchConfig>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            train: TrainConfig {
                learning_rate: 1e-3,
                l2_regularization: 3e-6,
                batch_size: Some(16),
                epochs: 20_000,
                patience: 20,
                ..TrainConfig::default()
            },
            search: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TorqueConfig {
    pub enabled: bool,
    /// Axial machine length in m.
    pub length: f64,
    pub n_quadrature: usize,
    /// Integration radius; `None` uses the middle of the rotor-side ring.
    pub radius: Option<f64>,
}

impl Default for TorqueConfig {
    fn default() -> Self {
        Self { enabled: true, length: 0.1, n_quadrature: 720, radius: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub weighting: EvalWeighting,
    pub torque: TorqueConfig,
    /// Full solves timed by the evaluation (median reported).
    pub timing_solves: usize,
    /// Surrogate predictions timed by the evaluation (median reported).
    pub timing_predictions: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            weighting: EvalWeighting::Reference,
            torque: TorqueConfig::default(),
            timing_solves: 5,
            timing_predictions: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub ranges: ParamRanges,
    pub machine: MachineConfig,
    pub solver: SolverConfig,
    pub materials: MaterialConfig,
    pub samples: SampleCounts,
    /// Sobol points skipped after the origin.
    pub sobol_skip: u64,
    pub region: FieldRegion,
    pub pod: ModeSelector,
    pub network: NetworkConfig,
    pub evaluation: EvalConfig,
    pub out_dir: PathBuf,
    /// Snapshot workers; `None` uses every available core.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            ranges: ParamRanges::default(),
            machine: MachineConfig::default(),
            solver: SolverConfig::default(),
            materials: MaterialConfig::default(),
            samples: SampleCounts::default(),
            sobol_skip: 0,
            region: FieldRegion::Full,
            pod: ModeSelector::Count(32),
            network: NetworkConfig::default(),
            evaluation: EvalConfig::default(),
            out_dir: PathBuf::from("igapod-run"),
            workers: None,
        }
    }
}

/// The subset of the configuration that determines snapshot contents.
#[derive(Serialize)]
struct SnapshotKey<'a> {
    ranges: &'a ParamRanges,
    machine: &'a MachineConfig,
    solver: &'a SolverConfig,
    materials: &'a MaterialConfig,
    samples: &'a SampleCounts,
    sobol_skip: u64,
    torque: &'a TorqueConfig,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.samples;
        if s.train < 1 || s.test < 1 || s.validation < 1 {
            return Err(Error::Config(format!("every split needs at least one sample, got {s:?}")));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.network.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        let t = &self.evaluation.torque;
        if t.enabled && !(t.length > 0.0 && t.n_quadrature > 0) {
            return Err(Error::Config("torque length and quadrature size must be positive".into()));
        }
        match self.pod {
            ModeSelector::Count(0) => return Err(Error::Config("POD needs at least one mode".into())),
            ModeSelector::Energy(e) if !(e > 0.0 && e <= 1.0) => {
                return Err(Error::Config(format!("POD energy tolerance {e} outside (0, 1]")))
            }
            _ => {}
        }
        self.ranges.validate()?;
        self.solver.validate()?;
        self.materials.validate()?;
        self.network.train.validate()?;
        if let Some(search) = &self.network.search {
            search.space.validate()?;
        }
        match build_machine_geometry_with(&self.machine, &self.ranges.midpoint()) {
            Err(Error::Parameter { constraint, detail }) => Err(Error::Config(format!(
                "the centre of the parameter ranges is infeasible: {constraint} ({detail})"
            ))),
            other => other.map(|_| ()),
        }
    }

    /// Hash of every setting that affects the snapshots.
    pub fn snapshot_hash(&self) -> String {
        let key = SnapshotKey {
            ranges: &self.ranges,
            machine: &self.machine,
            solver: &self.solver,
            materials: &self.materials,
            samples: &self.samples,
            sobol_skip: self.sobol_skip,
            torque: &self.evaluation.torque,
        };
        let json = serde_json::to_vec(&key).expect("configuration serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.out_dir)
    }
}

/// File locations below the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn snapshots(&self) -> PathBuf {
        self.root.join("snapshots")
    }

    pub fn basis(&self) -> PathBuf {
        self.root.join("pod").join("basis.bin")
    }

    pub fn eigenvalues(&self) -> PathBuf {
        self.root.join("pod").join("eigenvalues.csv")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model").join("network.bin")
    }

    pub fn history(&self) -> PathBuf {
        self.root.join("model").join("history.csv")
    }

    pub fn search(&self) -> PathBuf {
        self.root.join("model").join("search.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("eval").join("report.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("eval").join("samples.csv")
    }

    pub fn timing(&self) -> PathBuf {
        self.root.join("eval").join("timing.json")
    }

    pub fn bench(&self) -> PathBuf {
        self.root.join("bench.json")
    }
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

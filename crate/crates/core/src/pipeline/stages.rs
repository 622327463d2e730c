use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_machine_geometry_with, ParamVector};
use crate::magnetostatics::{DofMap, FieldView};
use crate::pod::{weighted_pod, ModeSelector, PodBasis, SnapshotMatrix};
use crate::postprocess::{export_field, seminorm_error, ExportFormat};
use crate::sparse::CsrMatrix;
use crate::surrogate::{random_search, train, Dataset, MlpModel, TrainHistory, Trial};

use super::config::{ensure_parent, EvalWeighting, FieldRegion, PipelineConfig};
use super::fom::{machine_torque, reference_weighting, Extraction, FullOrder};
use super::store::{generate_snapshots, SampleRecord, SnapshotStore, Split};

/// Training snapshots of a store, restricted to the configured region.
pub fn training_snapshots(store: &SnapshotStore, ext: &Extraction) -> Result<SnapshotMatrix> {
    let records = store.solved(Split::Train);
    let columns = records
        .iter()
        .map(|r| ext.restrict(&store.load(r)?))
        .collect::<Result<Vec<_>>>()?;
    SnapshotMatrix::new(&columns, records.iter().map(|r| r.params).collect())
}

/// Weighted POD of the training split; writes the basis and eigenvalue table.
pub fn run_pod(cfg: &PipelineConfig, store: &SnapshotStore, selector: ModeSelector) -> Result<PodBasis> {
    let (w, ext) = reference_weighting(cfg)?;
    check_store(store, &ext)?;
    let s = training_snapshots(store, &ext)?;
    if s.n_snapshots() < 2 {
        return Err(Error::Input("POD needs at least two training snapshots".into()));
    }
    let basis = weighted_pod(&s, &w, selector)?;
    let layout = cfg.layout();
    ensure_parent(&layout.basis())?;
    basis.save(&layout.basis())?;
    write_eigenvalues(&layout.eigenvalues(), &basis.spectrum)?;
    log::info!("POD kept {} modes ({:.10} of the energy)", basis.n_modes(), basis.energy);
    Ok(basis)
}

fn check_store(store: &SnapshotStore, ext: &Extraction) -> Result<()> {
    if store.n_dofs() != ext.n_full {
        return Err(Error::Usage(format!(
            "snapshots have {} coefficients, the configured machine has {}",
            store.n_dofs(),
            ext.n_full
        )));
    }
    Ok(())
}

fn write_eigenvalues(path: &Path, spectrum: &[f64]) -> Result<()> {
    let total: f64 = spectrum.iter().sum();
    let mut s = String::from("mode,eigenvalue,cumulative_energy\n");
    let mut acc = 0.0;
    for (i, l) in spectrum.iter().enumerate() {
        acc += l;
        let _ = writeln!(s, "{},{l:.17e},{:.17e}", i + 1, if total > 0.0 { acc / total } else { 0.0 });
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Basis, weighting and extraction that belong together.
fn checked_basis(cfg: &PipelineConfig, basis: &PodBasis) -> Result<(CsrMatrix, Extraction)> {
    let (w, ext) = reference_weighting(cfg)?;
    if basis.n_dofs() != ext.len() || basis.weighting_hash != w.content_hash() {
        return Err(Error::Usage(
            "the POD basis was not built for this machine configuration and region".into(),
        ));
    }
    Ok((w, ext))
}

fn check_model(basis: &PodBasis, model: &MlpModel) -> Result<()> {
    if model.n_outputs() != basis.n_modes() || model.basis_hash.as_deref() != Some(basis.content_hash().as_str()) {
        return Err(Error::Usage("the network was trained against a different POD basis".into()));
    }
    Ok(())
}

fn dataset(store: &SnapshotStore, split: Split, basis: &PodBasis, w: &CsrMatrix, ext: &Extraction) -> Result<Dataset> {
    let records = store.solved(split);
    let inputs = records.iter().map(|r| r.params.to_array().to_vec()).collect();
    let targets = records
        .iter()
        .map(|r| basis.project(w, &ext.restrict(&store.load(r)?)?))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(inputs, targets)
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: MlpModel,
    pub history: TrainHistory,
    /// Trials of the random search, if one was configured.
    pub trials: Vec<Trial>,
}

/// Projects the training and test splits onto the basis and trains the
/// network; writes the model and its loss history.
pub fn run_training(cfg: &PipelineConfig, store: &SnapshotStore, basis: &PodBasis) -> Result<TrainingOutcome> {
    let (w, ext) = checked_basis(cfg, basis)?;
    check_store(store, &ext)?;
    let train_set = dataset(store, Split::Train, basis, &w, &ext)?;
    let test_set = dataset(store, Split::Test, basis, &w, &ext)?;
    let net = &cfg.network;
    let base = crate::surrogate::TrainConfig { seed: net.train.seed ^ cfg.seed, ..net.train.clone() };
    let (mut model, history, trials) = match &net.search {
        None => {
            let (m, h) = train(&train_set, &test_set, &net.hidden, &base)?;
            (m, h, Vec::new())
        }
        Some(search) => {
            let out = random_search(&train_set, &test_set, &search.space, &base, search.trials, cfg.seed)?;
            (out.model, out.history, out.trials)
        }
    };
    model.basis_hash = Some(basis.content_hash());
    let layout = cfg.layout();
    ensure_parent(&layout.model())?;
    model.save(&layout.model())?;
    write_history(&layout.history(), &history)?;
    if !trials.is_empty() {
        fs::write(layout.search(), serde_json::to_string_pretty(&trials)?).map_err(|e| Error::io(layout.search(), e))?;
    }
    log::info!(
        "trained {:?} for {} epochs ({:?}), best epoch {}",
        model.layer_sizes(),
        history.train_loss.len(),
        history.stop,
        history.best_epoch
    );
    Ok(TrainingOutcome { model, history, trials })
}

fn write_history(path: &Path, h: &TrainHistory) -> Result<()> {
    let mut s = String::from("epoch,train_loss,test_loss\n");
    let mut checks = h.test_loss.iter().peekable();
    for (i, l) in h.train_loss.iter().enumerate() {
        let epoch = i + 1;
        let _ = write!(s, "{epoch},{l:.17e},");
        if let Some((_, t)) = checks.next_if(|(e, _)| *e == epoch) {
            let _ = write!(s, "{t:.17e}");
        }
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub max: f64,
    pub std: f64,
    pub count: usize,
}

impl ErrorStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub index: usize,
    pub split: Split,
    pub params: ParamVector,
    pub field_error: f64,
    pub pod_error: f64,
    pub torque_full: Option<f64>,
    pub torque_surrogate: Option<f64>,
    pub torque_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: Split,
    pub field_error: ErrorStats,
    pub pod_error: ErrorStats,
    pub torque_error: Option<ErrorStats>,
}

/// Accuracy of a surrogate on the stored splits. Contains no timings, so
/// identical runs give identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub basis_hash: String,
    pub n_dofs: usize,
    pub n_modes: usize,
    pub region: FieldRegion,
    pub weighting: EvalWeighting,
    pub splits: Vec<SplitReport>,
    /// Set when the mean POD error on validation is not below the mean
    /// surrogate error, i.e. more modes are kept than the network resolves.
    pub oversized_basis: bool,
    pub samples: Vec<SampleEval>,
}

impl EvalReport {
    pub fn split(&self, split: Split) -> Option<&SplitReport> {
        self.splits.iter().find(|s| s.split == split)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "index,split,mag,mh,mw,alpha_deg,field_error,pod_error,torque_full,torque_surrogate,torque_error\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.17e}"));
        for e in &self.samples {
            let p = e.params;
            let _ = writeln!(
                s,
                "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{}",
                e.index,
                e.split.name(),
                p.mag,
                p.mh,
                p.mw,
                p.alpha_deg,
                e.field_error,
                e.pod_error,
                opt(e.torque_full),
                opt(e.torque_surrogate),
                opt(e.torque_error)
            );
        }
        s
    }
}

/// Wall-clock comparison of full solves and surrogate predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub solve_median_s: f64,
    pub predict_median_s: f64,
    pub speedup: f64,
    pub n_solves: usize,
    pub n_predictions: usize,
}

/// Evaluates `predict` (parameters and reference coefficients to reduced
/// coefficients) on the requested splits.
pub fn evaluate_predictor(
    cfg: &PipelineConfig,
    store: &SnapshotStore,
    basis: &PodBasis,
    splits: &[Split],
    predict: &dyn Fn(&SampleRecord, &[f64]) -> Result<Vec<f64>>,
) -> Result<EvalReport> {
    let (w_ref, ext) = checked_basis(cfg, basis)?;
    check_store(store, &ext)?;
    let mut samples = Vec::new();
    let mut splits_out = Vec::new();
    for &split in splits {
        let mut rows = Vec::new();
        for r in store.solved(split) {
            rows.push(evaluate_sample(cfg, store, basis, &w_ref, &ext, r, predict)?);
        }
        let field: Vec<f64> = rows.iter().map(|e| e.field_error).collect();
        let pod: Vec<f64> = rows.iter().map(|e| e.pod_error).collect();
        let torque: Vec<f64> = rows.iter().filter_map(|e| e.torque_error).collect();
        if let (Some(field_error), Some(pod_error)) = (ErrorStats::of(&field), ErrorStats::of(&pod)) {
            splits_out.push(SplitReport { split, field_error, pod_error, torque_error: ErrorStats::of(&torque) });
        }
        samples.extend(rows);
    }
    let oversized_basis = splits_out
        .iter()
        .find(|s| s.split == Split::Validation)
        .is_some_and(|s| s.pod_error.mean >= s.field_error.mean);
    if oversized_basis {
        log::warn!("mean POD error is not below the surrogate error on validation: the basis keeps more modes than the network resolves");
    }
    Ok(EvalReport {
        config_hash: store.config_hash().to_string(),
        basis_hash: basis.content_hash(),
        n_dofs: basis.n_dofs(),
        n_modes: basis.n_modes(),
        region: cfg.region,
        weighting: cfg.evaluation.weighting,
        splits: splits_out,
        oversized_basis,
        samples,
    })
}

fn evaluate_sample(
    cfg: &PipelineConfig,
    store: &SnapshotStore,
    basis: &PodBasis,
    w_ref: &CsrMatrix,
    ext: &Extraction,
    r: &SampleRecord,
    predict: &dyn Fn(&SampleRecord, &[f64]) -> Result<Vec<f64>>,
) -> Result<SampleEval> {
    let full = store.load(r)?;
    let u = ext.restrict(&full)?;
    let v = basis.reconstruct(&predict(r, &u)?)?;
    let v_pod = basis.reconstruct(&basis.project(w_ref, &u)?)?;
    let fom = match cfg.evaluation.weighting {
        EvalWeighting::Reference => None,
        kind => {
            let fom = FullOrder::build(cfg, &r.params)?;
            let w = ext.restrict_matrix(&fom.weighting(kind, &full));
            Some((fom, w))
        }
    };
    let w = fom.as_ref().map_or(w_ref, |(_, w)| w);
    let field_error = seminorm_error(&u, &v, w)?;
    let pod_error = seminorm_error(&u, &v_pod, w)?;
    let torque_surrogate = if cfg.evaluation.torque.enabled {
        let v_full = ext.expand(&v)?;
        Some(match &fom {
            Some((fom, _)) => fom.torque(cfg, &v_full)?,
            None => {
                let model = build_machine_geometry_with(&cfg.machine, &r.params)?;
                machine_torque(cfg, &model, &DofMap::new(&model)?, &v_full)?
            }
        })
    } else {
        None
    };
    let torque_full = r.torque();
    let torque_error = match (torque_full, torque_surrogate) {
        (Some(f), Some(s)) if f != 0.0 => Some(((s - f) / f).abs()),
        _ => None,
    };
    Ok(SampleEval {
        index: r.index,
        split: r.split,
        params: r.params,
        field_error,
        pod_error,
        torque_full,
        torque_surrogate,
        torque_error,
    })
}

/// Evaluates the network on every split and writes the report, the
/// per-sample table and the timing file.
pub fn run_evaluation(
    cfg: &PipelineConfig,
    store: &SnapshotStore,
    basis: &PodBasis,
    model: &MlpModel,
) -> Result<(EvalReport, Timing)> {
    check_model(basis, model)?;
    let report = evaluate_predictor(cfg, store, basis, &Split::ALL, &|r, _| model.predict(&r.params))?;
    let p = store
        .solved(Split::Validation)
        .first()
        .map_or_else(|| cfg.ranges.midpoint(), |r| r.params);
    let timing = measure_timing(cfg, basis, model, &p, cfg.evaluation.timing_solves, cfg.evaluation.timing_predictions)?;
    let layout = cfg.layout();
    ensure_parent(&layout.report())?;
    let write = |path: &Path, text: String| fs::write(path, text).map_err(|e| Error::io(path, e));
    write(&layout.report(), serde_json::to_string_pretty(&report)?)?;
    write(&layout.report_csv(), report.to_csv())?;
    write(&layout.timing(), serde_json::to_string_pretty(&timing)?)?;
    Ok((report, timing))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall time of `n_solves` full solves (geometry, assembly, solve)
/// against `n_predictions` surrogate predictions (network and reconstruction).
pub fn measure_timing(
    cfg: &PipelineConfig,
    basis: &PodBasis,
    model: &MlpModel,
    p: &ParamVector,
    n_solves: usize,
    n_predictions: usize,
) -> Result<Timing> {
    if n_solves == 0 || n_predictions == 0 {
        return Err(Error::Input("timing needs at least one solve and one prediction".into()));
    }
    let mut solves = Vec::with_capacity(n_solves);
    for _ in 0..n_solves {
        let t = Instant::now();
        let fom = FullOrder::build(cfg, p)?;
        std::hint::black_box(fom.solve(cfg)?);
        solves.push(t.elapsed().as_secs_f64());
    }
    let mut predictions = Vec::with_capacity(n_predictions);
    for _ in 0..n_predictions {
        let t = Instant::now();
        let r = model.predict(std::hint::black_box(p))?;
        std::hint::black_box(basis.reconstruct(&r)?);
        predictions.push(t.elapsed().as_secs_f64());
    }
    let (s, q) = (median(solves), median(predictions));
    Ok(Timing {
        solve_median_s: s,
        predict_median_s: q,
        speedup: s / q,
        n_solves,
        n_predictions,
    })
}

/// Benchmark at the centre of the ranges; writes the result next to the run.
pub fn bench(cfg: &PipelineConfig, basis: &PodBasis, model: &MlpModel) -> Result<Timing> {
    check_model(basis, model)?;
    let t = measure_timing(cfg, basis, model, &cfg.ranges.midpoint(), 5, 1000)?;
    let path = cfg.layout().bench();
    ensure_parent(&path)?;
    fs::write(&path, serde_json::to_string_pretty(&t)?).map_err(|e| Error::io(&path, e))?;
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub params: ParamVector,
    pub reduced: Vec<f64>,
    /// Free coefficients of the full model (zero outside the trained region).
    pub coefficients: Vec<f64>,
    pub extrapolated: bool,
    pub torque: Option<f64>,
}

/// Surrogate field at `p`. Parameters outside the configured ranges give a
/// warning; torque and field export are optional.
pub fn predict(
    cfg: &PipelineConfig,
    basis: &PodBasis,
    model: &MlpModel,
    p: &ParamVector,
    with_torque: bool,
    export: Option<(&Path, ExportFormat, (usize, usize))>,
) -> Result<Prediction> {
    check_model(basis, model)?;
    let (_, ext) = checked_basis(cfg, basis)?;
    let extrapolated = !cfg.ranges.contains(p);
    if extrapolated {
        log::warn!("{p:?} lies outside the training ranges; the prediction is an extrapolation");
    }
    let reduced = model.predict(p)?;
    let coefficients = ext.expand(&basis.reconstruct(&reduced)?)?;
    let mut torque = None;
    if with_torque || export.is_some() {
        let geometry = build_machine_geometry_with(&cfg.machine, p)?;
        let dofs = DofMap::new(&geometry)?;
        if with_torque {
            torque = Some(machine_torque(cfg, &geometry, &dofs, &coefficients)?);
        }
        if let Some((path, format, resolution)) = export {
            let view = FieldView::new(&geometry, &dofs, &coefficients)?;
            ensure_parent(path)?;
            export_field(&view, resolution, format, path)?;
        }
    }
    Ok(Prediction { params: *p, reduced, coefficients, extrapolated, torque })
}

/// Artifacts of a complete run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub store: SnapshotStore,
    pub basis: PodBasis,
    pub training: TrainingOutcome,
    pub report: EvalReport,
    pub timing: Timing,
}

/// Snapshots, POD, training and evaluation. An existing snapshot store
/// generated with the same configuration is reused when `reuse_snapshots`.
pub fn run_all(cfg: &PipelineConfig, reuse_snapshots: bool) -> Result<RunArtifacts> {
    cfg.validate()?;
    let dir = cfg.layout().snapshots();
    let existing = if reuse_snapshots {
        SnapshotStore::open(&dir, Some(&cfg.snapshot_hash())).ok()
    } else {
        None
    };
    let store = match existing {
        Some(s) => s,
        None => generate_snapshots(cfg)?,
    };
    let basis = run_pod(cfg, &store, cfg.pod)?;
    let training = run_training(cfg, &store, &basis)?;
    let (report, timing) = run_evaluation(cfg, &store, &basis, &training.model)?;
    Ok(RunArtifacts { store, basis, training, report, timing })
}

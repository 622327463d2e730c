use std::fs;
use std::path::PathBuf;
use std::sync::OnceLock;

use igapod::geometry::{ParamRanges, ParamVector};
use igapod::magnetostatics::{MaterialConfig, SolverConfig};
use igapod::pipeline::*;
use igapod::pod::{ModeSelector, PodBasis};
use igapod::postprocess::{seminorm_error, ExportFormat};
use igapod::surrogate::MlpModel;
use igapod::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coarse(out_dir: PathBuf) -> PipelineConfig {
    let mut cfg = PipelineConfig { out_dir, workers: Some(2), ..PipelineConfig::default() };
    cfg.machine.rotor_elements = [2, 1];
    cfg.machine.stator_elements = [2, 1];
    cfg.solver = SolverConfig { harmonics: 4, ..SolverConfig::default() };
    cfg.materials = MaterialConfig::linear_iron(1.0 / (4e-7 * std::f64::consts::PI * 1000.0));
    cfg.samples = SampleCounts { train: 16, test: 4, validation: 4 };
    cfg.pod = ModeSelector::Count(2);
    cfg.network.hidden = vec![8];
    cfg.network.train.epochs = 400;
    cfg.evaluation.timing_solves = 1;
    cfg.evaluation.timing_predictions = 10;
    cfg
}

struct Toy {
    _dir: tempfile::TempDir,
    cfg: PipelineConfig,
    run: RunArtifacts,
}

fn toy() -> &'static Toy {
    static CELL: OnceLock<Toy> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = coarse(dir.path().to_path_buf());
        let run = run_all(&cfg, false).unwrap();
        Toy { _dir: dir, cfg, run }
    })
}

#[test]
fn sobol_first_points_match_the_reference_sequence() {
    let s = Sobol::new(4).unwrap();
    let expected = [
        [0.0, 0.0, 0.0, 0.0],
        [0.5, 0.5, 0.5, 0.5],
        [0.75, 0.25, 0.25, 0.25],
        [0.25, 0.75, 0.75, 0.75],
        [0.375, 0.375, 0.625, 0.875],
        [0.875, 0.875, 0.125, 0.375],
        [0.625, 0.125, 0.875, 0.625],
        [0.125, 0.625, 0.375, 0.125],
    ];
    for (i, e) in expected.iter().enumerate() {
        assert_eq!(s.point(i as u64), e.to_vec(), "point {i}");
    }
    let unit = ParamRanges { mag: [0.0, 1.0], mh: [0.0, 1.0], mw: [0.0, 1.0], alpha_deg: [0.0, 1.0] };
    let pts = sobol_sample(&unit, 3, 0).unwrap();
    let two: Vec<[f64; 2]> = pts.iter().map(|p| [p.mag, p.mh]).collect();
    assert_eq!(two, vec![[0.5, 0.5], [0.75, 0.25], [0.25, 0.75]]);
    assert!(Sobol::new(0).is_err() && Sobol::new(MAX_DIM + 1).is_err());
    assert!(sobol_sample(&unit, 0, 0).is_err());
}

#[test]
fn sobol_points_lie_in_the_ranges_and_skip_shifts_the_stream() {
    let r = ParamRanges::default();
    let pts = sobol_sample(&r, 300, 0).unwrap();
    assert!(pts.iter().all(|p| r.contains(p)));
    let later = sobol_sample(&r, 100, 200).unwrap();
    assert_eq!(&pts[200..], &later[..]);
}

#[test]
fn sobol_projections_beat_pseudo_random_discrepancy() {
    let s = Sobol::new(4).unwrap();
    let pts: Vec<Vec<f64>> = (1..=1024).map(|i| s.point(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in 0..4 {
        let qmc: Vec<f64> = pts.iter().map(|p| p[d]).collect();
        let mc: Vec<f64> = (0..1024).map(|_| rng.random::<f64>()).collect();
        let (a, b) = (star_discrepancy_1d(&qmc), star_discrepancy_1d(&mc));
        assert!(a < b, "dimension {d}: Sobol {a} vs random {b}");
        assert!(a <= 2.0 / 1024.0);
    }
}

#[test]
fn discrepancy_of_simple_sets() {
    assert!((star_discrepancy_1d(&[0.5]) - 0.5).abs() < 1e-15);
    assert!((star_discrepancy_1d(&[0.25, 0.75]) - 0.25).abs() < 1e-15);
}

#[test]
fn splits_are_consecutive_disjoint_blocks() {
    let cfg = PipelineConfig::default();
    let s = split_samples(&cfg).unwrap();
    assert_eq!(s.len(), 192);
    assert!(s[..128].iter().all(|(k, _)| *k == Split::Train));
    assert!(s[128..160].iter().all(|(k, _)| *k == Split::Test));
    assert!(s[160..].iter().all(|(k, _)| *k == Split::Validation));
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            assert_ne!(s[i].1, s[j].1);
        }
    }
}

#[test]
fn config_validation_and_round_trip() {
    let cfg = PipelineConfig::default();
    cfg.validate().unwrap();
    let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
    let partial: PipelineConfig = serde_json::from_str(r#"{"seed": 3, "samples": {"train": 8}}"#).unwrap();
    assert_eq!(partial.seed, 3);
    assert_eq!(partial.samples, SampleCounts { train: 8, test: 32, validation: 32 });

    let bad = |f: fn(&mut PipelineConfig)| {
        let mut c = PipelineConfig::default();
        f(&mut c);
        matches!(c.validate(), Err(Error::Config(_)))
    };
    assert!(bad(|c| c.samples.test = 0));
    assert!(bad(|c| c.ranges.mh = [3e-3, 3e-3]));
    assert!(bad(|c| c.pod = ModeSelector::Energy(1.5)));
    assert!(bad(|c| c.workers = Some(0)));
    assert!(bad(|c| c.network.train.epochs = 0));
    assert!(bad(|c| c.ranges.mag = [40e-3, 41e-3]));

    let mut other = cfg.clone();
    assert_eq!(other.snapshot_hash(), cfg.snapshot_hash());
    other.seed = 1;
    other.network.hidden = vec![3];
    assert_eq!(other.snapshot_hash(), cfg.snapshot_hash());
    other.solver.harmonics = 5;
    assert_ne!(other.snapshot_hash(), cfg.snapshot_hash());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, "{ not json").unwrap();
    assert!(matches!(PipelineConfig::from_file(&path), Err(Error::Config(_))));
}

#[test]
fn snapshot_generation_is_deterministic_and_hash_checked() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = coarse(dir.path().join("a"));
    cfg.samples = SampleCounts { train: 2, test: 1, validation: 1 };
    let a = generate_snapshots(&cfg).unwrap();
    let files = fs::read_dir(&a.dir).unwrap().count();
    assert_eq!(files, 5);
    assert_eq!(a.manifest.samples.len(), 4);
    assert!(a.failures().is_empty());

    cfg.out_dir = dir.path().join("b");
    cfg.workers = Some(1);
    let b = generate_snapshots(&cfg).unwrap();
    for (ra, rb) in a.manifest.samples.iter().zip(&b.manifest.samples) {
        assert_eq!(a.load(ra).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.load(rb).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
    assert_eq!(
        fs::read(a.dir.join(MANIFEST)).unwrap(),
        fs::read(b.dir.join(MANIFEST)).unwrap()
    );

    let reopened = SnapshotStore::open(&a.dir, Some(&cfg.snapshot_hash())).unwrap();
    assert_eq!(reopened.manifest, a.manifest);
    assert!(matches!(SnapshotStore::open(&a.dir, Some("0000")), Err(Error::Usage(_))));

    let victim = a.dir.join("sample_00001.f64");
    fs::write(&victim, [0u8; 16]).unwrap();
    assert!(matches!(SnapshotStore::open(&a.dir, None), Err(Error::Format(_))));
}

#[test]
fn infeasible_sample_is_recorded_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = coarse(dir.path().to_path_buf());
    let mid = cfg.ranges.midpoint();
    let samples = vec![
        (Split::Train, mid),
        (Split::Train, ParamVector::from_mm(40.0, 5.0, 10.0, 0.0)),
        (Split::Test, ParamVector { alpha_deg: 3.0, ..mid }),
        (Split::Validation, ParamVector { alpha_deg: 7.0, ..mid }),
    ];
    let out = dir.path().join("snap");
    let err = generate_snapshots_for(&cfg, &out, &samples).unwrap_err();
    assert!(err.is_numerical(), "{err}");
    let store = SnapshotStore::open(&out, Some(&cfg.snapshot_hash())).unwrap();
    assert_eq!(store.failures().len(), 1);
    assert_eq!(store.failures()[0].index, 1);
    match &store.failures()[0].outcome {
        Outcome::Failed { reason } => assert!(reason.contains("magnet_above_shaft"), "{reason}"),
        o => panic!("{o:?}"),
    }
    let solved: usize = Split::ALL.iter().map(|&s| store.solved(s).len()).sum();
    assert_eq!(solved, 3);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 4);
}

#[test]
fn pod_stage_selectors_and_eigenvalue_table() {
    let t = toy();
    let mut cfg = t.cfg.clone();
    let dir = tempfile::tempdir().unwrap();
    cfg.out_dir = dir.path().to_path_buf();

    let one = run_pod(&cfg, &t.run.store, ModeSelector::Count(1)).unwrap();
    assert_eq!(one.n_modes(), 1);

    let full = run_pod(&cfg, &t.run.store, ModeSelector::Energy(1.0 - 1e-12)).unwrap();
    let rank = full.spectrum.iter().filter(|&&l| l > 1e-12 * full.spectrum[0]).count();
    assert_eq!(full.n_modes(), rank);
    assert!(full.energy >= 1.0 - 1e-12);

    let csv = fs::read_to_string(cfg.layout().eigenvalues()).unwrap();
    let values: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 16);
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(PodBasis::load(&cfg.layout().basis()).unwrap(), full);
}

#[test]
fn training_stage_produces_a_decreasing_history() {
    let t = toy();
    let h = &t.run.training.history;
    let csv = fs::read_to_string(t.cfg.layout().history()).unwrap();
    let rows = csv.lines().count() - 1;
    assert_eq!(rows, h.train_loss.len());
    assert!(rows <= t.cfg.network.train.epochs);
    let smooth = |k: usize| h.train_loss[k * 50..(k + 1) * 50].iter().sum::<f64>() / 50.0;
    let n = h.train_loss.len() / 50;
    assert!(n >= 2);
    assert!(smooth(n - 1) < smooth(0));
    let model = MlpModel::load(&t.cfg.layout().model()).unwrap();
    assert_eq!(model.basis_hash.as_deref(), Some(t.run.basis.content_hash().as_str()));
}

#[test]
fn mismatched_basis_is_refused() {
    let t = toy();
    let other = t.run.basis.truncated_to(1).unwrap();
    let mut cfg = t.cfg.clone();
    let dir = tempfile::tempdir().unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    assert!(matches!(run_evaluation(&cfg, &t.run.store, &other, &t.run.training.model), Err(Error::Usage(_))));
    assert!(matches!(
        predict(&cfg, &other, &t.run.training.model, &cfg.ranges.midpoint(), false, None),
        Err(Error::Usage(_))
    ));
    cfg.machine.rotor_elements = [3, 1];
    assert!(matches!(run_training(&cfg, &t.run.store, &t.run.basis), Err(Error::Usage(_))));
    cfg.machine.rotor_elements = [2, 1];
    cfg.region = FieldRegion::Airgap;
    assert!(matches!(run_training(&cfg, &t.run.store, &t.run.basis), Err(Error::Usage(_))));
}

#[test]
fn oracle_network_reproduces_the_pod_error() {
    let t = toy();
    let (w, _) = reference_weighting(&t.cfg).unwrap();
    let basis = &t.run.basis;
    let report = evaluate_predictor(&t.cfg, &t.run.store, basis, &Split::ALL, &|_, u| basis.project(&w, u)).unwrap();
    for s in &report.samples {
        assert!((s.field_error - s.pod_error).abs() < 1e-10, "{s:?}");
    }
    assert!(report.oversized_basis);
}

#[test]
fn report_structure_and_files() {
    let t = toy();
    let r = &t.run.report;
    assert_eq!(r.splits.len(), 3);
    for s in &r.splits {
        assert!(s.field_error.mean <= s.field_error.max);
        assert!(s.pod_error.mean <= s.pod_error.max);
        assert!(s.field_error.std >= 0.0 && s.field_error.mean >= 0.0);
        let te = s.torque_error.unwrap();
        assert!(te.mean >= 0.0 && te.mean <= te.max);
    }
    assert_eq!(r.samples.len(), 24);
    let back: EvalReport = serde_json::from_str(&fs::read_to_string(t.cfg.layout().report()).unwrap()).unwrap();
    assert_eq!(&back, r);
    assert_eq!(fs::read_to_string(t.cfg.layout().report_csv()).unwrap().lines().count(), 25);
    let timing: Timing = serde_json::from_str(&fs::read_to_string(t.cfg.layout().timing()).unwrap()).unwrap();
    assert!(timing.speedup > 1.0);
}

#[test]
fn prediction_reproduces_the_evaluation_and_flags_extrapolation() {
    let t = toy();
    let (w, _) = reference_weighting(&t.cfg).unwrap();
    let rec = t.run.store.solved(Split::Train)[3];
    let u = t.run.store.load(rec).unwrap();
    let p = predict(&t.cfg, &t.run.basis, &t.run.training.model, &rec.params, true, None).unwrap();
    assert!(!p.extrapolated);
    let e = seminorm_error(&u, &p.coefficients, &w).unwrap();
    let stored = t.run.report.samples.iter().find(|s| s.index == rec.index).unwrap();
    assert!((e - stored.field_error).abs() < 1e-10);
    assert!((p.torque.unwrap() - stored.torque_surrogate.unwrap()).abs() <= 1e-10 * p.torque.unwrap().abs());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.csv");
    let outside = ParamVector { alpha_deg: 25.0, ..t.cfg.ranges.midpoint() };
    let q = predict(&t.cfg, &t.run.basis, &t.run.training.model, &outside, false, Some((&path, ExportFormat::Csv, (3, 3))))
        .unwrap();
    assert!(q.extrapolated);
    assert!(fs::read_to_string(&path).unwrap().lines().count() > 1);
}

#[test]
fn airgap_region_keeps_ring_coefficients() {
    let t = toy();
    let mut cfg = t.cfg.clone();
    cfg.region = FieldRegion::Airgap;
    let (w, ext) = reference_weighting(&cfg).unwrap();
    let (_, full) = reference_weighting(&t.cfg).unwrap();
    assert!(ext.len() < full.len() && !ext.is_empty());
    assert_eq!(w.nrows(), ext.len());
    let idx = ext.indices.as_ref().unwrap();
    assert!(idx.windows(2).all(|w| w[0] < w[1]));

    let u = t.run.store.load(t.run.store.solved(Split::Train)[0]).unwrap();
    let r = ext.restrict(&u).unwrap();
    let back = ext.expand(&r).unwrap();
    for (i, (&a, &b)) in u.iter().zip(&back).enumerate() {
        if idx.binary_search(&i).is_ok() {
            assert_eq!(a, b);
        } else {
            assert_eq!(b, 0.0);
        }
    }
    // the air-gap field is unchanged by zeroing the other coefficients
    let fom = FullOrder::build(&cfg, &t.run.store.solved(Split::Train)[0].params).unwrap();
    let (t_full, t_ring) = (fom.torque(&cfg, &u).unwrap(), fom.torque(&cfg, &back).unwrap());
    assert!((t_full - t_ring).abs() <= 1e-12 * t_full.abs());
}

#[test]
fn sample_weighting_options_evaluate() {
    let t = toy();
    let mut cfg = t.cfg.clone();
    let dir = tempfile::tempdir().unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    cfg.evaluation.torque.enabled = false;
    let basis = &t.run.basis;
    let model = &t.run.training.model;
    for kind in [EvalWeighting::SampleUnit, EvalWeighting::SampleMaterial] {
        cfg.evaluation.weighting = kind;
        let r = evaluate_predictor(&cfg, &t.run.store, basis, &[Split::Validation], &|s, _| model.predict(&s.params))
            .unwrap();
        assert_eq!(r.samples.len(), 4);
        assert!(r.samples.iter().all(|s| s.field_error.is_finite() && s.torque_error.is_none()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sobol_points_are_dyadic_and_in_unit_cube(i in 1u64..1_000_000) {
        let p = Sobol::new(MAX_DIM).unwrap().point(i);
        for x in p {
            prop_assert!((0.0..1.0).contains(&x));
            prop_assert_eq!((x * 2f64.powi(32)).fract(), 0.0);
        }
    }

    #[test]
    fn error_stats_are_ordered(v in prop::collection::vec(0.0f64..10.0, 1..40)) {
        let s = ErrorStats::of(&v).unwrap();
        prop_assert!(s.mean <= s.max + 1e-12);
        prop_assert!(s.std >= 0.0);
        prop_assert_eq!(s.count, v.len());
    }
}

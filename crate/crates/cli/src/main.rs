use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use igapod::geometry::{build_machine_geometry_with, validate_geometry, ParamVector};
use igapod::pipeline::{
    bench, generate_snapshots, predict, run_all, run_evaluation, run_pod, run_training, split_samples, PipelineConfig,
    SnapshotStore,
};
use igapod::pod::{ModeSelector, PodBasis};
use igapod::postprocess::ExportFormat;
use igapod::surrogate::MlpModel;
use igapod::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "igapod", version, about = "Isogeometric magnetostatics with POD and neural-network surrogates")]
struct Cli {
    /// JSON pipeline configuration; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Parallel workers for snapshot generation.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the machine geometry, validate it and write it as JSON.
    Geometry {
        #[command(flatten)]
        params: ParamArg,
        /// Output file (defaults to `<out-dir>/geometry.json`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the sampled parameter list as CSV.
    Sample,
    /// Solve every sample and store the coefficient vectors.
    Snapshot,
    /// Fit the weighted POD basis on the training snapshots.
    Pod {
        /// Number of modes (overrides the configuration).
        #[arg(long, conflicts_with = "energy")]
        modes: Option<usize>,
        /// Relative energy to retain (overrides the configuration).
        #[arg(long)]
        energy: Option<f64>,
    },
    /// Train the network on the projected training snapshots.
    Train,
    /// Evaluate the trained network on every split.
    Eval,
    /// Predict the field for one parameter vector.
    Predict {
        #[command(flatten)]
        params: ParamArg,
        /// Also compute the torque.
        #[arg(long)]
        torque: bool,
        /// Export the predicted field to this file.
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Samples per patch direction (CSV) or grid points per axis (VTK).
        #[arg(long, default_value_t = 20)]
        resolution: usize,
        /// Write the reduced and full coefficients as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time full solves against surrogate predictions.
    Bench,
    /// Run snapshot generation, POD, training and evaluation.
    Run {
        /// Reuse an existing snapshot store with a matching configuration.
        #[arg(long)]
        reuse: bool,
    },
}

#[derive(Debug, Args)]
struct ParamArg {
    /// Magnet depth, height and width in mm and rotor angle in degrees,
    /// comma separated; defaults to the centre of the ranges.
    #[arg(long, value_delimiter = ',')]
    params: Option<Vec<f64>>,
}

impl ParamArg {
    fn resolve(&self, cfg: &PipelineConfig) -> Result<ParamVector> {
        match self.params.as_deref() {
            None => Ok(cfg.ranges.midpoint()),
            Some(&[a, b, c, d]) => Ok(ParamVector::from_mm(a, b, c, d)),
            Some(v) => Err(Error::Usage(format!("--params needs 4 values, got {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Vtk,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_store(cfg: &PipelineConfig) -> Result<SnapshotStore> {
    SnapshotStore::open(&cfg.layout().snapshots(), Some(&cfg.snapshot_hash()))
}

fn load_artifacts(cfg: &PipelineConfig) -> Result<(PodBasis, MlpModel)> {
    let layout = cfg.layout();
    Ok((PodBasis::load(&layout.basis())?, MlpModel::load(&layout.model())?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn print_report(report: &igapod::pipeline::EvalReport) {
    println!("split       field mean  field max  field std  POD mean   torque mean");
    for s in &report.splits {
        let torque = s.torque_error.map_or("-".to_string(), |t| format!("{:.3}%", 100.0 * t.mean));
        println!(
            "{:<11} {:>9.3}% {:>9.3}% {:>9.3}% {:>8.3}%  {torque:>10}",
            s.split.name(),
            100.0 * s.field_error.mean,
            100.0 * s.field_error.max,
            100.0 * s.field_error.std,
            100.0 * s.pod_error.mean,
        );
    }
    if report.oversized_basis {
        println!("warning: the POD error is not below the surrogate error; fewer modes would do");
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let layout = cfg.layout();
    match &cli.command {
        Command::Geometry { params, output } => {
            let p = params.resolve(&cfg)?;
            let model = build_machine_geometry_with(&cfg.machine, &p)?;
            let report = validate_geometry(&model);
            let path = output.clone().unwrap_or_else(|| layout.root.join("geometry.json"));
            write_json(&path, &model)?;
            println!(
                "{} patches, minimum Jacobian {:.3e}, {} issues; written to {}",
                model.patches.len(),
                report.min_jacobian,
                report.issues.len(),
                path.display()
            );
            if !report.passed() {
                for issue in &report.issues {
                    eprintln!("{issue:?}");
                }
                return Err(Error::Input("geometry validation failed".into()));
            }
        }
        Command::Sample => {
            println!("index,split,mag,mh,mw,alpha_deg");
            for (i, (split, p)) in split_samples(&cfg)?.iter().enumerate() {
                println!("{i},{},{:e},{:e},{:e},{}", split.name(), p.mag, p.mh, p.mw, p.alpha_deg);
            }
        }
        Command::Snapshot => {
            let store = generate_snapshots(&cfg)?;
            println!(
                "{} samples solved, {} failed, {} coefficients each; store in {}",
                store.manifest.samples.len() - store.failures().len(),
                store.failures().len(),
                store.n_dofs(),
                store.dir.display()
            );
        }
        Command::Pod { modes, energy } => {
            let selector = match (modes, energy) {
                (Some(m), _) => ModeSelector::Count(*m),
                (_, Some(e)) => ModeSelector::Energy(*e),
                _ => cfg.pod,
            };
            let basis = run_pod(&cfg, &open_store(&cfg)?, selector)?;
            println!(
                "{} modes retain {:.10} of the energy{}; basis in {}",
                basis.n_modes(),
                basis.energy,
                if basis.truncated { " (truncated to the numerical rank)" } else { "" },
                layout.basis().display()
            );
        }
        Command::Train => {
            let basis = PodBasis::load(&layout.basis())?;
            let out = run_training(&cfg, &open_store(&cfg)?, &basis)?;
            let h = &out.history;
            println!(
                "{} epochs ({:?}), best epoch {}, final training loss {:.3e}, {:.1} s; model in {}",
                h.train_loss.len(),
                h.stop,
                h.best_epoch,
                h.train_loss.last().copied().unwrap_or(f64::NAN),
                h.duration_s,
                layout.model().display()
            );
        }
        Command::Eval => {
            let (basis, model) = load_artifacts(&cfg)?;
            let (report, timing) = run_evaluation(&cfg, &open_store(&cfg)?, &basis, &model)?;
            print_report(&report);
            println!(
                "full solve {:.3} s, prediction {:.3e} s, speed-up {:.0}x",
                timing.solve_median_s, timing.predict_median_s, timing.speedup
            );
        }
        Command::Predict { params, torque, export, format, resolution, output } => {
            let (basis, model) = load_artifacts(&cfg)?;
            let p = params.resolve(&cfg)?;
            let format = match format {
                Format::Csv => ExportFormat::Csv,
                Format::Vtk => ExportFormat::Vtk,
            };
            let export = export.as_deref().map(|path| (path, format, (*resolution, *resolution)));
            let pred = predict(&cfg, &basis, &model, &p, *torque, export)?;
            if pred.extrapolated {
                eprintln!("warning: parameters outside the training ranges");
            }
            println!("reduced coefficients: {:?}", pred.reduced);
            if let Some(t) = pred.torque {
                println!("torque: {t:.6} N m");
            }
            if let Some(path) = output {
                #[derive(serde::Serialize)]
                struct Out<'a> {
                    params: ParamVector,
                    extrapolated: bool,
                    torque: Option<f64>,
                    reduced: &'a [f64],
                    coefficients: &'a [f64],
                }
                write_json(
                    path,
                    &Out {
                        params: pred.params,
                        extrapolated: pred.extrapolated,
                        torque: pred.torque,
                        reduced: &pred.reduced,
                        coefficients: &pred.coefficients,
                    },
                )?;
            }
        }
        Command::Bench => {
            let (basis, model) = load_artifacts(&cfg)?;
            let t = bench(&cfg, &basis, &model)?;
            println!(
                "median full solve {:.4} s ({} runs), median prediction {:.3e} s ({} runs), speed-up {:.0}x",
                t.solve_median_s, t.n_solves, t.predict_median_s, t.n_predictions, t.speedup
            );
        }
        Command::Run { reuse } => {
            let out = run_all(&cfg, *reuse)?;
            print_report(&out.report);
            println!("speed-up {:.0}x; artifacts in {}", out.timing.speedup, layout.root.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

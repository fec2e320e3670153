//! `voxsem` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or validation error (bad flags, config,
//! missing inputs), 2 runtime failure (including failed checks).

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use voxsem::inference::{classify_view, evaluate, retrieve, PriorTable};
use voxsem::seeds::derive_seed;
use voxsem::slam::{em_run, simulate_world, synthetic_prior_table};
use voxsem::store::{
    export_em, export_metrics, fmt_f64, grid_to_bytes, history_csv, load_checkpoint, load_dataset, metrics_csv,
    save_checkpoint, save_dataset, save_json, weights_csv, RunConfig, FLAG_VIEW,
};
use voxsem::vae::fixtures::composite_grad_check;
use voxsem::vae::train_with;
use voxsem::verify::run_all;
use voxsem::voxeldata::build_dataset;

const THREADS_VAR: &str = "VOXSEM_THREADS";

#[derive(Parser)]
#[command(name = "voxsem", version, about = "Semantic shape encoding, classification, retrieval and EM SLAM")]
struct Cli {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Base seed for every random draw (overrides `run.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `run.out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic shape dataset into `<out>/data`.
    GenData,
    /// Train the model on a dataset and write `<out>/model.vsem`.
    Train {
        /// Dataset directory [default: <out>/data].
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Classify held-out views; writes predictions.csv and summary.csv.
    Classify {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint [default: <out>/model.vsem].
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Retrieve full shapes for held-out views; writes retrieval.csv and retrieved.vxg.
    Retrieve {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Simulate a world and run EM SLAM on it.
    SlamSim {
        /// Take prior means from this checkpoint instead of a synthetic table.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and write every metrics CSV.
    ExportMetrics {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Finite-difference check of the training loss gradient on a tiny model.
    GradCheck {
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Run the oracle identity suites and print a pass/fail table.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train { .. } => "train",
            Command::Classify { .. } => "classify",
            Command::Retrieve { .. } => "retrieve",
            Command::SlamSim { .. } => "slam-sim",
            Command::ExportMetrics { .. } => "export-metrics",
            Command::GradCheck { .. } => "grad-check",
            Command::Verify => "verify",
        }
    }
}

enum Failure {
    Validation(String),
    Runtime(String),
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Log file mirror of progress messages. The file carries no timings so
/// repeated runs leave identical logs.
struct Log {
    file: File,
    start: Instant,
}

impl Log {
    fn line(&mut self, msg: &str) -> Result<(), Failure> {
        eprintln!("[{:>8.1?}] {msg}", self.start.elapsed());
        writeln!(self.file, "{msg}").map_err(runtime)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(u8::from(usage));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid(format!("{THREADS_VAR}={value:?}: expected a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(runtime)
}

/// Defaults, then the config file, then `--set` overrides, then `--seed` and `--out`.
fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(invalid)?,
        None => RunConfig::default(),
    };
    for assignment in &cli.set {
        cfg.apply_override(assignment).map_err(invalid)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("run.seed", &seed.to_string()).map_err(invalid)?;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate().map_err(invalid)?;
    Ok(cfg)
}

fn existing(path: Option<&PathBuf>, default: PathBuf, what: &str) -> Result<PathBuf, Failure> {
    let path = path.cloned().unwrap_or(default);
    if path.exists() {
        Ok(path)
    } else {
        Err(invalid(format!("{what} {} does not exist", path.display())))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let cfg = resolve(&cli)?;
    let out = cfg.out.clone();
    let data_dir = |flag: Option<&PathBuf>| existing(flag, out.join("data"), "dataset directory");
    let model_file = |flag: Option<&PathBuf>| existing(flag, out.join("model.vsem"), "checkpoint");
    let (data, model) = match &cli.command {
        Command::Train { data } => (Some(data_dir(data.as_ref())?), None),
        Command::Classify { data, model }
        | Command::Retrieve { data, model }
        | Command::ExportMetrics { data, model } => (Some(data_dir(data.as_ref())?), Some(model_file(model.as_ref())?)),
        Command::SlamSim { model: Some(m) } => (None, Some(existing(Some(m), PathBuf::new(), "checkpoint")?)),
        _ => (None, None),
    };

    let name = cli.command.name();
    std::fs::create_dir_all(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    write_text(&out.join(format!("{name}.config.cfg")), &cfg.to_text())?;
    let log_path = out.join(format!("{name}.log"));
    let file = File::create(&log_path).map_err(|e| runtime(format!("{}: {e}", log_path.display())))?;
    let mut log = Log { file, start: Instant::now() };
    log.line(&format!("{name} seed={} out={}", cfg.seed, out.display()))?;

    let result = execute(&cli.command, &cfg, data.as_deref(), model.as_deref(), &mut log);
    if let Err(Failure::Runtime(msg) | Failure::Validation(msg)) = &result {
        let _ = writeln!(log.file, "error: {msg}");
    }
    result
}

fn execute(
    command: &Command,
    cfg: &RunConfig,
    data: Option<&Path>,
    model: Option<&Path>,
    log: &mut Log,
) -> Result<(), Failure> {
    let out = cfg.out.as_path();
    let load_data = || load_dataset(data.expect("dataset path resolved")).map_err(runtime);
    let load_model = || load_checkpoint(model.expect("checkpoint path resolved")).map_err(runtime);
    match command {
        Command::GenData => {
            let ds = build_dataset(&cfg.data, cfg.seed).map_err(runtime)?;
            let dir = out.join("data");
            save_dataset(&dir, &ds).map_err(runtime)?;
            log.line(&format!(
                "wrote {} samples ({} train, {} test) to {}",
                ds.samples.len(),
                ds.train().len(),
                ds.test().len(),
                dir.display()
            ))?;
        }
        Command::Train { .. } => {
            let ds = load_data()?;
            log.line(&format!("training on {} samples for {} epochs", ds.train().len(), cfg.train.epochs))?;
            let mut lines = Vec::new();
            let trained = train_with(&ds, &cfg.train, |e, r| {
                let msg = format!("epoch {e} kl {:.4} recon {:.4} reg {:.4} total {:.4}", r.kl, r.recon, r.reg, r.total);
                eprintln!("[{:>8.1?}] {msg}", log.start.elapsed());
                lines.push(msg);
            })
            .map_err(runtime)?;
            for l in lines {
                writeln!(log.file, "{l}").map_err(runtime)?;
            }
            let path = out.join("model.vsem");
            save_checkpoint(&path, &trained).map_err(runtime)?;
            write_text(&out.join("loss_history.csv"), &history_csv(&trained.history))?;
            log.line(&format!("saved {}", path.display()))?;
        }
        Command::Classify { .. } => {
            let (m, ds) = (load_model()?, load_data()?);
            let table = PriorTable::from_model(&m).map_err(runtime)?;
            let test = ds.test();
            let predictions = test
                .par_iter()
                .map(|s| classify_view(&m, &table, &s.view, cfg.eval.mode))
                .collect::<voxsem::Result<Vec<_>>>()
                .map_err(runtime)?;
            let mut csv = "sample,class,instance,viewpoint,translation,noisy,pred_class,pred_instance\n".to_string();
            for (k, (s, p)) in test.iter().zip(&predictions).enumerate() {
                let l = &s.label;
                let pi = p.instance.map_or(String::new(), |i| i.to_string());
                writeln!(
                    csv,
                    "{k},{},{},{},{},{},{},{pi}",
                    l.class_id, l.instance_id, l.viewpoint_id, l.translation_id, s.noisy, p.class
                )
                .expect("string write");
            }
            write_text(&out.join("predictions.csv"), &csv)?;
            let report = evaluate(&m, &ds, cfg.eval.mode).map_err(runtime)?;
            for (file, text) in metrics_csv(&report).into_iter().filter(|(f, _)| *f == "summary.csv") {
                write_text(&out.join(file), &text)?;
            }
            log.line(&format!("{} queries, accuracy {:.4}", test.len(), report.accuracy))?;
        }
        Command::Retrieve { .. } => {
            let (m, ds) = (load_model()?, load_data()?);
            let test = ds.test();
            let retrieved = test
                .par_iter()
                .map(|s| retrieve(&m, &s.view))
                .collect::<voxsem::Result<Vec<_>>>()
                .map_err(runtime)?;
            let mut csv = "sample,class,instance,viewpoint,translation,noisy,iou\n".to_string();
            let mut grids = Vec::new();
            let mut total = 0.0;
            for (k, (s, g)) in test.iter().zip(&retrieved).enumerate() {
                let iou = g.iou(&s.full);
                total += iou;
                let l = &s.label;
                writeln!(
                    csv,
                    "{k},{},{},{},{},{},{}",
                    l.class_id,
                    l.instance_id,
                    l.viewpoint_id,
                    l.translation_id,
                    s.noisy,
                    fmt_f64(iou)
                )
                .expect("string write");
                grid_to_bytes(g, 0, &mut grids).map_err(runtime)?;
                grid_to_bytes(&s.view, FLAG_VIEW, &mut grids).map_err(runtime)?;
            }
            write_text(&out.join("retrieval.csv"), &csv)?;
            std::fs::write(out.join("retrieved.vxg"), &grids).map_err(runtime)?;
            log.line(&format!("{} retrievals, mean IoU {:.4}", test.len(), total / test.len().max(1) as f64))?;
        }
        Command::SlamSim { .. } => {
            let table = match model {
                Some(_) => PriorTable::from_model(&load_model()?).map_err(runtime)?,
                None => synthetic_prior_table(
                    cfg.data.classes,
                    cfg.data.instances,
                    (cfg.train.dims[0], cfg.train.dims[1]),
                    cfg.train.delta[0],
                    derive_seed(cfg.seed, &[40]),
                )
                .map_err(runtime)?,
            };
            let world = simulate_world(&cfg.slam, &table, derive_seed(cfg.seed, &[41])).map_err(runtime)?;
            let result = em_run(&world, &table, &cfg.slam, derive_seed(cfg.seed, &[42])).map_err(runtime)?;
            save_json(&out.join("world.json"), &world).map_err(runtime)?;
            save_json(&out.join("em_result.json"), &result).map_err(runtime)?;
            export_em(out, &world, &result).map_err(runtime)?;
            write_text(&out.join("weights.csv"), &weights_csv(&result.weights, None))?;
            let d = &result.diagnostics;
            log.line(&format!(
                "EM {} iterations (converged: {}), pose RMSE {:.4} vs odometry {:.4}, landmark RMSE {:.4}, label accuracy {:.4}",
                result.iterations, result.converged, d.pose_rmse, d.odometry_rmse, d.landmark_rmse, d.label_accuracy
            ))?;
        }
        Command::ExportMetrics { .. } => {
            let (m, ds) = (load_model()?, load_data()?);
            let report = evaluate(&m, &ds, cfg.eval.mode).map_err(runtime)?;
            let dir = out.join("metrics");
            let paths = export_metrics(&dir, &report).map_err(runtime)?;
            write_text(&dir.join("loss_history.csv"), &history_csv(&m.history))?;
            log.line(&format!(
                "wrote {} files to {}: accuracy {:.4}, mAP {:.4}, AUC {:.4}, IoU {:.4}",
                paths.len() + 1,
                dir.display(),
                report.accuracy,
                report.map,
                report.auc,
                report.retrieval_iou
            ))?;
        }
        Command::GradCheck { step, tolerance } => {
            let report = composite_grad_check(cfg.seed, *step).map_err(runtime)?;
            let verdict = if report.max_relative_error < *tolerance { "pass" } else { "FAIL" };
            println!(
                "grad-check: {} parameters, max relative error {:.3e} at {} (tolerance {tolerance:.0e}) {verdict}",
                report.checked, report.max_relative_error, report.worst
            );
            log.line(&format!("max relative error {:e} at {} over {}", report.max_relative_error, report.worst, report.checked))?;
            if report.max_relative_error >= *tolerance {
                return Err(runtime(format!("gradient check exceeded tolerance {tolerance:e}")));
            }
        }
        Command::Verify => {
            let reports = run_all(cfg.seed).map_err(runtime)?;
            println!("{:<22} {:>9} {:>12} {:>10}  status", "suite", "instances", "max error", "tolerance");
            for r in &reports {
                let line = format!(
                    "{:<22} {:>9} {:>12.3e} {:>10.0e}  {}",
                    r.name,
                    r.instances,
                    r.max_error,
                    r.tolerance,
                    if r.passed { "pass" } else { "FAIL" }
                );
                println!("{line}");
                writeln!(log.file, "{line}").map_err(runtime)?;
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(runtime(format!("{failed} oracle suite(s) failed")));
            }
        }
    }
    Ok(())
}

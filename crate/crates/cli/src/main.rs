use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddlab::data::{load_noise_record, load_pools, DataSource, DatasetSpec, DATA_DIR_ENV};
use ddlab::diagnostics::{
    cam_similarity_stats, compute_cams, estimate_richness_capture, knn_noisy_prediction, sparsity_report,
    RichnessConfig, RichnessMode,
};
use ddlab::nn::load_checkpoint;
use ddlab::sweep::{run_frozen_rep_experiment, run_sweep_with, FrozenRepConfig, SweepConfig};
use ddlab::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "ddlab", version, about = "Width sweeps and representation diagnostics for small MLPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network per (width, replicate) and record diagnostics.
    Sweep(SweepArgs),
    /// Measure a saved checkpoint and print the results as JSON.
    Diagnose(DiagnoseArgs),
    /// Turn a sweep directory into plot-ready CSV files.
    Report {
        /// Sweep output directory.
        dir: PathBuf,
    },
    /// Train classifiers of several depths on a frozen random layer.
    FrozenRep(FrozenArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated widths, replacing the list in the config.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long)]
    noise_p: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct DiagnoseArgs {
    checkpoint: PathBuf,
    #[arg(long)]
    noise_record: PathBuf,
    /// Sweep config whose dataset section describes the data (IDX by default).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "errors,cam,richness,sparsity")]
    metrics: Vec<Metric>,
    #[arg(long, default_value_t = 10)]
    knn_k: usize,
    #[arg(long, default_value_t = 20)]
    group_size: usize,
    #[arg(long, default_value_t = 50)]
    draws: usize,
    #[arg(long, value_enum, default_value = "mean")]
    richness_mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, clap::ValueEnum)]
enum Metric {
    Errors,
    Cam,
    Richness,
    Knn,
    Sparsity,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Mean,
    Norm,
}

#[derive(Args)]
struct FrozenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    dry_run: bool,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Runtime => 3,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        // a missing config file is a usage problem, not a data problem
        std::io::ErrorKind::NotFound => Error::Config(format!("{}: {e}", path.display())),
        _ => Error::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn override_data_dir(spec: &mut DatasetSpec, dir: Option<PathBuf>) -> Result<(), Error> {
    let Some(dir) = dir else { return Ok(()) };
    match &mut spec.source {
        DataSource::Idx { dir: d } => {
            *d = Some(dir);
            Ok(())
        }
        DataSource::Synthetic { .. } => Err(Error::Config("--data-dir given for a synthetic dataset".into())),
    }
}

fn sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    let mut config: SweepConfig = read_json(&args.config)?;
    if let Some(w) = args.widths {
        config.widths = w;
    }
    if let Some(p) = args.noise_p {
        config.noise_p = p;
    }
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    if let Some(o) = args.output_dir {
        config.output_dir = o;
    }
    override_data_dir(&mut config.dataset, args.data_dir)?;
    config.validate()?;
    if args.dry_run {
        print!("{}", config.to_json());
        return Ok(ExitCode::SUCCESS);
    }
    let total = config.widths.len() * config.replicates;
    let mut done = 0;
    let outcome = run_sweep_with(&config, |r| {
        done += 1;
        match (r.is_ok(), r.test_error) {
            (true, Some(e)) => eprintln!("[{done}/{total}] k={} replicate={} test_error={e:.4}", r.k, r.replicate),
            _ => eprintln!(
                "[{done}/{total}] k={} replicate={} failed: {}",
                r.k,
                r.replicate,
                r.error.as_deref().unwrap_or("unknown")
            ),
        }
    })?;
    match outcome.threshold {
        Some(k) => eprintln!("interpolation threshold: k={k}"),
        None => eprintln!("interpolation threshold: not reached"),
    }
    eprintln!("wrote {}", config.output_dir.display());
    if outcome.records.iter().any(|r| r.is_ok()) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(3))
    }
}

fn diagnose(args: DiagnoseArgs) -> Result<ExitCode, Error> {
    let mut spec = match &args.config {
        Some(path) => read_json::<SweepConfig>(path)?.dataset,
        None => DatasetSpec::default(),
    };
    override_data_dir(&mut spec, args.data_dir.clone())?;
    let record = load_noise_record(&args.noise_record)?;
    let checkpoint = load_checkpoint(&args.checkpoint)?;

    let (pool, mut test) = load_pools(&spec.source)?;
    if let Some(n) = spec.test_size.filter(|&n| n < test.len()) {
        test = test.select(&(0..n).collect::<Vec<_>>())?;
    }
    let clean = pool.select(&record.source_indices)?;
    let noisy = record.apply(&clean)?;
    if let Some(hash) = checkpoint.dataset_hash {
        let found = clean.content_hash();
        if hash != found {
            return Err(Error::HashMismatch {
                expected: hex::encode(hash),
                found: hex::encode(found),
            });
        }
    }
    let model = checkpoint.model;
    let train = noisy.training_set();

    let mut out = serde_json::Map::new();
    let needs_train = args.metrics.iter().any(|m| matches!(m, Metric::Errors | Metric::Cam | Metric::Knn));
    let on_train = if needs_train { Some(model.forward(train.images())?) } else { None };
    let on_test = model.forward(test.images())?;
    for metric in &args.metrics {
        let (key, value) = match metric {
            Metric::Errors => {
                let tr = ddlab::nn::evaluate(&model, train.images(), train.labels())?;
                let te = ddlab::nn::evaluate(&model, test.images(), test.labels())?;
                let v = serde_json::json!({
                    "train_loss": tr.loss,
                    "train_error": tr.error,
                    "test_loss": te.loss,
                    "test_error": te.error,
                });
                ("errors", v)
            }
            Metric::Cam => {
                let cap = on_train.as_ref().expect("train capture");
                let ih = cam_similarity_stats(&compute_cams(cap, 0)?.cams)?;
                let ho = cam_similarity_stats(&compute_cams(cap, 1)?.cams)?;
                ("cam", serde_json::json!({ "input_hidden": ih, "hidden_output": ho }))
            }
            Metric::Richness => {
                let cfg = RichnessConfig {
                    group_size: args.group_size,
                    draws: args.draws,
                    mode: match args.richness_mode {
                        Mode::Mean => RichnessMode::Mean,
                        Mode::Norm => RichnessMode::Norm,
                    },
                    seed: args.seed,
                    ..RichnessConfig::default()
                };
                ("richness", serde_json::to_value(estimate_richness_capture(&on_test, &cfg)?)?)
            }
            Metric::Knn => {
                let cap = on_train.as_ref().expect("train capture");
                let reps = cap
                    .penultimate()
                    .ok_or_else(|| Error::InvalidArgument("model has no hidden layer".into()))?;
                ("knn", serde_json::to_value(knn_noisy_prediction(reps, &noisy, args.knn_k)?)?)
            }
            Metric::Sparsity => (
                "sparsity",
                serde_json::to_value(sparsity_report(&model, &on_test, &[0.1, 0.01])?)?,
            ),
        };
        out.insert(key.to_string(), value);
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}

fn frozen_rep(args: FrozenArgs) -> Result<ExitCode, Error> {
    let mut config: FrozenRepConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => FrozenRepConfig::default(),
    };
    if let Some(o) = args.output_dir {
        config.output_dir = Some(o);
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    override_data_dir(&mut config.dataset, args.data_dir)?;
    config.validate()?;
    if args.dry_run {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(ExitCode::SUCCESS);
    }
    let table = run_frozen_rep_experiment(&config)?;
    print!("{}", table.to_csv());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Report { dir } => {
            for path in ddlab::report::write_report(&dir)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::FrozenRep(a) => frozen_rep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

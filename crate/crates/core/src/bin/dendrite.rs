//! `dendrite`: command-line front end for the experiment runner.
//!
//! Subcommands: `prepare`, `train`, `eval`, `sweep`, `report`. All take a
//! TOML config (`--config`), an optional seed override (`--seed`) and an
//! output directory (`--out`). Exit code 0 on success; nonzero codes are
//! categorized by error kind.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dendritic::experiment::{self, files, resolve_out_dir};
use dendritic::ExperimentConfig;

#[derive(Parser)]
#[command(name = "dendrite", version, about = "Dendritic RRAM network experiments")]
struct Cli {
    /// Experiment config file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for run artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode the dataset and write train/test splits plus a manifest.
    Prepare,
    /// Run the full training procedure and persist the model.
    Train,
    /// Evaluate a persisted model on the held-out split.
    Eval {
        /// Model file; defaults to <out>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Prepare-train-evaluate across the HRS median grid.
    Sweep,
    /// Print footprint and delay statistics of a model file.
    Report {
        /// Model file; defaults to <out>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> dendritic::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: &Cli) -> dendritic::Result<()> {
    let config = load_config(cli)?;
    let out_dir = resolve_out_dir(&config, cli.out.as_deref());
    match &cli.command {
        Command::Prepare => {
            let manifest = experiment::cmd_prepare(&config, &out_dir)?;
            println!(
                "prepared {} train / {} test windows ({} normal / {} anomalous in train)",
                manifest.train.n_windows,
                manifest.test.n_windows,
                manifest.train.n_normal,
                manifest.train.n_anomalous
            );
            println!("train content hash: {}", manifest.train.content_hash);
        }
        Command::Train => {
            let outcome = experiment::cmd_train(&config, &out_dir)?;
            println!(
                "trained: test balanced accuracy {:.4} (full-precision baseline {:.4}), threshold {}",
                outcome.model.test_accuracy,
                outcome.model.fp_test_accuracy,
                outcome.model.decision_threshold
            );
            println!("model written to {}", out_dir.join(files::MODEL).display());
        }
        Command::Eval { model } => {
            let model_path = model.clone().unwrap_or_else(|| out_dir.join(files::MODEL));
            let report = experiment::cmd_eval(&config, &out_dir, &model_path)?;
            println!("balanced accuracy: {:.4}", report.balanced_accuracy);
            println!(
                "confusion: tn {} fp {} fn {} tp {}",
                report.true_normal,
                report.false_anomalous,
                report.false_normal,
                report.true_anomalous
            );
        }
        Command::Sweep => {
            let result = experiment::cmd_sweep(&config, &out_dir)?;
            for (median, acc) in result.mean_by_point(&config.sweep.hrs_medians_ohm) {
                println!(
                    "median {:>10.3e} ohm  (delay {:>7.2} ms): mean accuracy {:.4}",
                    median,
                    median * config.device.capacitance_f * 1e3,
                    acc
                );
            }
            if !result.failures.is_empty() {
                eprintln!("{} failed points:", result.failures.len());
                for f in &result.failures {
                    eprintln!("  {f}");
                }
            }
            println!("rows written to {}", out_dir.join(files::SWEEP).display());
        }
        Command::Report { model } => {
            let model_path = model.clone().unwrap_or_else(|| out_dir.join(files::MODEL));
            print!("{}", experiment::cmd_report(&model_path)?.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

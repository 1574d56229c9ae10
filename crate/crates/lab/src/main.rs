//! Command-line entry point for the crutch-gait locomotion laboratory:
//! `train`, `sweep`, `eval`, and `plot` subcommands.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 data error.

mod config;
mod plot;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{load_config, ConfigError};
use plot::{parse_cum_reward_column, render_learning_curves, Series};
use run::{evaluate_checkpoint, read_checkpoint_file, run_sweep, run_train, write_eval_metrics, write_trajectory};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "crutchgait", about = "Torque-level crutch-gait controller laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy and write logs, checkpoints, and evaluation metrics.
    Train {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate the full (weight x seed) grid.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Evaluate a trained checkpoint and dump metrics plus a trajectory.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render smoothed learning curves from train_log.csv files to SVG.
    Plot {
        logs: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Output root: --out flag, else $CRUTCHGAIT_OUT, else ./runs.
fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("CRUTCHGAIT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn config_exit(e: &ConfigError) -> u8 {
    eprintln!("error: {e}");
    EXIT_USAGE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Train { config, seed, iterations, out } => cmd_train(&config, seed, iterations, out),
        Command::Sweep { config, out, parallel } => cmd_sweep(&config, out, parallel),
        Command::Eval { checkpoint, config, out } => cmd_eval(&checkpoint, &config, out),
        Command::Plot { logs, window, out } => cmd_plot(&logs, window, out),
    };
    ExitCode::from(code)
}

fn cmd_train(
    config_path: &Path,
    seed: Option<u64>,
    iterations: Option<usize>,
    out: Option<PathBuf>,
) -> u8 {
    let loaded = match load_config(config_path) {
        Ok(l) => l,
        Err(e) => return config_exit(&e),
    };
    let seed = seed.unwrap_or_else(|| loaded.doc.experiment.seeds.first().copied().unwrap_or(0));
    let iterations = iterations.unwrap_or(loaded.doc.experiment.iterations);
    if iterations == 0 {
        eprintln!("error: invalid config: iterations must be >= 1");
        return EXIT_USAGE;
    }
    let out_dir = out_root(out).join(format!("train_seed{seed}"));
    match run_train(&loaded, seed, iterations, &out_dir) {
        Ok(output) => {
            println!(
                "trained {iterations} iterations (seed {seed}); final avg return {:.3}",
                output.result.logs.last().map(|l| l.cum_reward).unwrap_or(0.0)
            );
            println!(
                "evaluation: crutch cost {:.4}, velocity MAPE {:.1}%, {} steps realized",
                output.report.mean_crutch_cost, output.report.mape_velocity, output.trace.steps
            );
            println!("artifacts in {}", output.out_dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn cmd_sweep(config_path: &Path, out: Option<PathBuf>, parallel: usize) -> u8 {
    let loaded = match load_config(config_path) {
        Ok(l) => l,
        Err(e) => return config_exit(&e),
    };
    if loaded.doc.experiment.agent_weights.is_empty() {
        eprintln!("error: invalid config: empty agent list");
        return EXIT_USAGE;
    }
    let out_dir = out_root(out);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create output dir: {e}");
        return EXIT_DATA;
    }
    match run_sweep(&loaded.doc, parallel) {
        Ok(sweep) => {
            let comparison = out_dir.join("comparison.csv");
            let table5 = out_dir.join("table5.csv");
            if let Err(e) = std::fs::write(&comparison, &sweep.comparison_csv)
                .and_then(|_| std::fs::write(&table5, &sweep.table5_csv))
            {
                eprintln!("error: cannot write sweep outputs: {e}");
                return EXIT_DATA;
            }
            println!("{} cells complete", sweep.cells.len());
            println!("wrote {} and {}", comparison.display(), table5.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn cmd_eval(checkpoint_path: &Path, config_path: &Path, out: Option<PathBuf>) -> u8 {
    if !checkpoint_path.exists() {
        eprintln!("error: checkpoint not found: {}", checkpoint_path.display());
        return EXIT_USAGE;
    }
    let loaded = match load_config(config_path) {
        Ok(l) => l,
        Err(e) => return config_exit(&e),
    };
    let ckpt = match read_checkpoint_file(checkpoint_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            // Distinguish unreadable files (usage) from corrupt contents (data).
            return if e.starts_with("checkpoint corrupt") { EXIT_DATA } else { EXIT_USAGE };
        }
    };
    let out_dir = out_root(out);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create output dir: {e}");
        return EXIT_DATA;
    }
    match evaluate_checkpoint(&loaded.doc, &ckpt.actor, &ckpt.normalizer, None) {
        Ok((report, trace)) => {
            if let Err(e) = write_eval_metrics(&out_dir.join("eval_metrics.csv"), &report, &trace)
                .and_then(|_| write_trajectory(&out_dir.join("trajectory.csv"), &trace))
            {
                eprintln!("error: cannot write outputs: {e}");
                return EXIT_DATA;
            }
            println!(
                "crutch cost {:.4}, velocity MAPE {:.1}%, orientation MAPE {:.1}%, lateral {:.4} m",
                report.mean_crutch_cost,
                report.mape_velocity,
                report.mape_orientation,
                report.mean_abs_lateral_displacement
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn cmd_plot(logs: &[PathBuf], window: usize, out: Option<PathBuf>) -> u8 {
    if logs.is_empty() {
        eprintln!("error: at least one train_log.csv is required");
        return EXIT_USAGE;
    }
    if window == 0 {
        eprintln!("error: window must be >= 1");
        return EXIT_USAGE;
    }
    let mut series = Vec::new();
    for path in logs {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return EXIT_USAGE;
            }
        };
        match parse_cum_reward_column(&text) {
            Ok(values) => series.push(Series {
                label: path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string()),
                values,
            }),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return EXIT_DATA;
            }
        }
    }
    let svg = render_learning_curves(&series, window);
    let out_path = out.unwrap_or_else(|| PathBuf::from("learning_curves.svg"));
    if let Err(e) = std::fs::write(&out_path, svg) {
        eprintln!("error: cannot write {}: {e}", out_path.display());
        return EXIT_DATA;
    }
    println!("wrote {}", out_path.display());
    0
}

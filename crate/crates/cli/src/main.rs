use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nngpvae::data::{read_tensors, take_matrix, tensor_map, write_tensors, Dataset};
use nngpvae::runner::suites::{gradcheck_suite, recovery_suite};
use nngpvae::runner::{eval_checkpoint, load_checkpoint, metrics_row, predict, train, training_dataset, write_outputs, RunConfig, METRICS_HEADER};

#[derive(Parser)]
#[command(name = "nngpvae", version, about = "Nearest-neighbour GPVAE experiments", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training data described by a run config as an NNTS dataset.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes checkpoint, metrics and loss trace into --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        /// Directory for metrics.csv; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predictive means and variances at the inputs stored under "X" in --query.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks for every objective.
    CheckGrad {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full-batch recovery identities.
    Recover {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> nngpvae::Result<RunConfig> {
    let mut c = RunConfig::load(path)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn run(cmd: Command) -> nngpvae::Result<bool> {
    match cmd {
        Command::GenData { config, seed, out } => {
            let c = load_config(&config, seed)?;
            let d = training_dataset(&c, 0)?;
            d.save(&out)?;
            println!("wrote {} rows x {} columns to {}", d.n(), d.y.cols(), out.display());
        }
        Command::Train { config, seed, out } => {
            let c = load_config(&config, seed)?;
            let o = train(&c)?;
            write_outputs(&out, &c, &o)?;
            println!("{METRICS_HEADER}\n{}", metrics_row(&c, &o.metrics, o.wall_seconds));
        }
        Command::Eval { checkpoint, data, samples, out } => {
            let start = std::time::Instant::now();
            let d = Dataset::load(&data)?;
            let (c, m) = eval_checkpoint(&checkpoint, &d, samples)?;
            let text = format!("{METRICS_HEADER}\n{}\n", metrics_row(&c, &m, start.elapsed().as_secs_f64()));
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("metrics.csv"), &text)?;
                }
                None => print!("{text}"),
            }
        }
        Command::Predict { checkpoint, data, query, samples, out } => {
            let (params, c) = load_checkpoint(&checkpoint)?;
            let d = Dataset::load(&data)?;
            let q = take_matrix(&tensor_map(read_tensors(&query)?), "X")?;
            let t = predict(&params, &c, &d, &q, samples.unwrap_or(c.eval.samples))?;
            write_tensors(&out, &t)?;
            println!("wrote predictions for {} inputs to {}", q.rows(), out.display());
        }
        Command::CheckGrad { seed } => {
            let checks = gradcheck_suite(seed)?;
            println!("objective,tensor,entries,max_abs_err,max_rel_err,pass");
            for g in &checks {
                println!("{},{},{},{:.3e},{:.3e},{}", g.objective.name(), g.tensor, g.entries, g.max_abs_err, g.max_rel_err, g.pass);
            }
            return Ok(checks.iter().all(|g| g.pass));
        }
        Command::Recover { seed } => {
            let checks = recovery_suite(seed)?;
            println!("check,value,reference,tolerance,pass");
            for r in &checks {
                let kind = if r.relative { "rel" } else { "abs" };
                println!("{},{:.15e},{:.15e},{:e} {kind},{}", r.name, r.value, r.reference, r.tol, r.pass);
            }
            return Ok(checks.iter().all(|r| r.pass));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

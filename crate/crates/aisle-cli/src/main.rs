//! Command-line front-end: expert-dataset generation, agent training,
//! episode runs (learned policy, fixed-order baseline, enumeration upper
//! bound) and parameter sweeps. Log verbosity comes from RUST_LOG.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use aisle_core::learn::{
    expert_from_csv, expert_to_csv, generate_expert, random_starts, train_agent, QFunction,
};
use aisle_core::runner::{
    episode_summary_json, episode_to_csv, run_aisle, run_fsd, run_upper_bound, sweep,
    sweep_to_csv, SweepAxis,
};
use aisle_core::{load_config, Config};

#[derive(Parser)]
#[command(name = "aisle", about = "Multi-IRS UAV NOMA energy-efficiency toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an expert dataset by exhaustive association scoring.
    GenExpert {
        #[arg(long)]
        config: PathBuf,
        /// Minimum number of transitions to produce.
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the association agent on an expert dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Expert dataset CSV from gen-expert.
        #[arg(long)]
        expert: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the configured number of environment steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Output model checkpoint path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and write its per-slot CSV plus a JSON summary.
    Run {
        /// aisle | fsd | upper
        #[arg(long)]
        algo: String,
        #[arg(long)]
        config: PathBuf,
        /// Model checkpoint (required for aisle and fsd).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes <out>.csv and <out>.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one axis over a list of values and seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// elements | power | slots | start
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        model: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_config(path: &PathBuf) -> Result<Config> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    Ok(load_config(&text)?)
}

fn main() -> Result<()> {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::GenExpert {
            config,
            count,
            seed,
            out,
        } => {
            let cfg = read_config(&config)?;
            let sc = &cfg.scenario;
            let per_start = sc.slots.max(1);
            let n_starts = count.div_ceil(per_start).max(1);
            let starts = random_starts(sc, n_starts, seed);
            log::info!(
                "generating expert data: {} starts x {} slots",
                starts.len(),
                per_start
            );
            let data = generate_expert(sc, &cfg.solver, &starts, per_start)?;
            fs::write(&out, expert_to_csv(&data))
                .with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} transitions to {}", data.len(), out.display());
        }
        Command::Train {
            config,
            expert,
            seed,
            steps,
            out,
        } => {
            let mut cfg = read_config(&config)?;
            if let Some(s) = steps {
                cfg.learning.train_steps = s;
            }
            let text = fs::read_to_string(&expert)
                .with_context(|| format!("reading {}", expert.display()))?;
            let data = expert_from_csv(&text)?;
            log::info!(
                "training on {} expert transitions for {} steps",
                data.len(),
                cfg.learning.train_steps
            );
            let q = train_agent(&cfg.scenario, &cfg.solver, &cfg.learning, data, seed)?;
            fs::write(&out, q.save_json())
                .with_context(|| format!("writing {}", out.display()))?;
            println!("wrote model to {}", out.display());
        }
        Command::Run {
            algo,
            config,
            model,
            seed,
            out,
        } => {
            let cfg = read_config(&config)?;
            let load_model = |path: &Option<PathBuf>| -> Result<QFunction> {
                let path = path
                    .as_ref()
                    .ok_or_else(|| anyhow::anyhow!("--model is required for this algorithm"))?;
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                Ok(QFunction::load_json(&text)?)
            };
            let result = match algo.as_str() {
                "aisle" => run_aisle(&cfg.scenario, &cfg.solver, &load_model(&model)?, seed)?,
                "fsd" => run_fsd(&cfg.scenario, &cfg.solver, &load_model(&model)?, seed)?,
                "upper" => run_upper_bound(&cfg.scenario, &cfg.solver, seed)?,
                other => bail!("unknown algorithm '{other}' (aisle|fsd|upper)"),
            };
            let csv_path = out.with_extension("csv");
            let json_path = out.with_extension("json");
            fs::write(&csv_path, episode_to_csv(&result, cfg.scenario.n_users()))
                .with_context(|| format!("writing {}", csv_path.display()))?;
            fs::write(&json_path, episode_summary_json(&result, &algo, seed))
                .with_context(|| format!("writing {}", json_path.display()))?;
            println!(
                "{algo}: total efficiency {:.6} bits/Joule/Hz, effective throughput {:.4} bits/s/Hz",
                result.total_ee, result.avg_effective_throughput
            );
            println!("wrote {} and {}", csv_path.display(), json_path.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            model,
            out,
        } => {
            let cfg = read_config(&config)?;
            let axis = SweepAxis::parse(&axis)?;
            let text = fs::read_to_string(&model)
                .with_context(|| format!("reading {}", model.display()))?;
            let q = QFunction::load_json(&text)?;
            let rows = sweep(&cfg.scenario, &cfg.solver, &q, axis, &values, &seeds);
            fs::write(&out, sweep_to_csv(&rows))
                .with_context(|| format!("writing {}", out.display()))?;
            let failures = rows.iter().filter(|r| r.status != "ok").count();
            println!(
                "wrote {} rows to {} ({} failures)",
                rows.len(),
                out.display(),
                failures
            );
        }
    }
    Ok(())
}

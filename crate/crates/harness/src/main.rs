use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use mnl_bench::config::ExperimentConfig;
use mnl_bench::{measure_runtime, plot, run_experiment};

#[derive(Parser)]
#[command(
    name = "mnl-bench",
    about = "Benchmark harness for episodic MDP agents with softmax transition models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, seed) pair of an experiment config.
    Run {
        /// JSON experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Added to every seed in the config.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        /// Concurrent runs (defaults to the number of cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Time the agents on the configured environment and print a table.
    BenchRuntime {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Produce smoothed plot-ready CSVs from an aggregate file.
    PlotData {
        /// Path to an aggregate.csv produced by `run`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rolling window length in episodes.
        #[arg(long, default_value_t = 100)]
        window: usize,
    },
    /// Check every structural invariant of an environment file.
    Validate {
        /// Environment definition JSON.
        #[arg(long)]
        spec: PathBuf,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed_offset,
            jobs,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(dir) = out {
                config.output_dir = dir;
            }
            let report = run_experiment(&config, seed_offset, jobs.unwrap_or_else(default_jobs))?;
            println!(
                "{} runs ({} failed) in {:.1}s; aggregate at {}",
                report.manifest.runs.len(),
                report.manifest.failures,
                report.manifest.wall_seconds_total,
                report.aggregate_csv.display()
            );
            Ok(if report.manifest.failures > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::BenchRuntime { config, out, jobs } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(dir) = out {
                config.output_dir = dir;
            }
            config.timing = true;
            let summary = measure_runtime(&config, jobs.unwrap_or_else(default_jobs))?;
            print!("{}", summary.table());
            let path = config.output_dir.join("runtime_summary.json");
            std::fs::write(&path, serde_json::to_string_pretty(&summary)?)
                .with_context(|| format!("writing {}", path.display()))?;
            println!("summary written to {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::PlotData { input, out, window } => {
            let written = plot::emit_plot_data(&input, &out, window)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { spec } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading {}", spec.display()))?;
            let spec = mnl_mdp::MnlMdpSpec::from_json(&text)?;
            let mut checks = 0;
            for s in 0..spec.num_states {
                for a in 0..spec.num_actions {
                    for core in &spec.true_cores {
                        let dist = mnl_mdp::model::transition_probs(&spec, core, s, a)?;
                        let total: f64 = dist.probs.iter().sum();
                        anyhow::ensure!(
                            (total - 1.0).abs() < 1e-12,
                            "probabilities at ({s},{a}) sum to {total}"
                        );
                        checks += 1;
                    }
                }
            }
            println!(
                "ok: {} states, {} actions, horizon {}, dim {}; {} kernel checks passed",
                spec.num_states, spec.num_actions, spec.horizon, spec.dim, checks
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

//! Seeded multi-run execution, aggregation, manifest, and the runtime
//! comparison.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use mnl_mdp::agents::{elliptical_bound, AgentState};
use mnl_mdp::oracle;
use mnl_mdp::planner::AlgorithmKind;
use mnl_mdp::stats;
use mnl_mdp::MnlMdpSpec;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AlgorithmEntry, ExperimentConfig, MonitorFlags};
use crate::metrics::{parse_run_csv, MetricsRow, MetricsWriter, RunSeries, SCHEMA_VERSION};

/// Outcome of one (algorithm, seed) run, as recorded in the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub seed: u64,
    pub status: String,
    pub episodes: usize,
    pub csv: Option<String>,
    pub agent_seconds_total: f64,
    pub final_cumulative_regret: f64,
    /// Fraction of episodes whose estimated start value met the oracle one
    /// (present when the optimism monitor is on).
    pub optimism_rate: Option<f64>,
    /// Worst concentration ratio seen across the run (monitor on).
    pub concentration_max: Option<f64>,
    /// Cumulative feature-width sums against their bound (monitor on).
    pub elliptical: Option<EllipticalSummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EllipticalSummary {
    pub holds: bool,
    pub max_sum: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub package_version: String,
    pub config: ExperimentConfig,
    pub seed_offset: u64,
    pub effective_seeds: Vec<u64>,
    pub runs: Vec<RunSummary>,
    pub failures: usize,
    pub wall_seconds_total: f64,
    pub oracle_initial_value: f64,
}

/// Everything `run` produces on disk plus the in-memory summaries.
#[derive(Debug)]
pub struct ExperimentReport {
    pub manifest: Manifest,
    pub aggregate_csv: PathBuf,
}

fn run_one(
    spec: &MnlMdpSpec,
    entry: &AlgorithmEntry,
    alg_index: usize,
    seed: u64,
    episodes: usize,
    monitors: MonitorFlags,
    timing: bool,
    v_star: f64,
    out_path: &Path,
) -> Result<RunSummary> {
    let mut agent_rng = ChaCha20Rng::seed_from_u64(seed);
    agent_rng.set_stream(2 * alg_index as u64);
    let mut env_rng = ChaCha20Rng::seed_from_u64(seed);
    env_rng.set_stream(2 * alg_index as u64 + 1);
    let mut agent = AgentState::new(spec, entry.agent.clone(), agent_rng)?;
    agent.monitor_elliptical = monitors.elliptical_potential;

    let with_concentration =
        monitors.concentration && entry.agent.kind != AlgorithmKind::Baseline;
    let file = fs::File::create(out_path)
        .with_context(|| format!("creating {}", out_path.display()))?;
    let mut writer = MetricsWriter::new(BufWriter::new(file), monitors.optimism, with_concentration)?;

    let mut cumulative_regret = 0.0;
    let mut agent_seconds_total = 0.0;
    let mut optimistic = 0usize;
    let mut concentration_max: Option<f64> = None;
    let mut elliptical_sums = vec![0.0; spec.horizon];
    for k in 1..=episodes {
        let record = agent.run_episode(spec, &mut env_rng)?;
        let tables = agent.tables.as_ref().expect("tables cached after episode");
        let policy_value = oracle::evaluate_policy(spec, &tables.greedy_policy())?[0][0];
        let gap = (v_star - policy_value).max(0.0);
        cumulative_regret += gap;
        agent_seconds_total += record.agent_seconds;

        let optimism = monitors
            .optimism
            .then(|| u8::from(record.value_at_start >= v_star));
        if optimism == Some(1) {
            optimistic += 1;
        }
        let concentration_ratio = if with_concentration {
            let ratio = agent.concentration_ratio(spec, 0.1);
            if let Some(r) = ratio {
                concentration_max = Some(concentration_max.map_or(r, |m: f64| m.max(r)));
            }
            ratio
        } else {
            None
        };
        if let Some(terms) = &record.elliptical_terms {
            for (h, term) in terms.iter().enumerate() {
                elliptical_sums[h] += term;
            }
        }

        writer.write_row(&MetricsRow {
            episode: k,
            episodic_return: record.episodic_return(),
            cumulative_regret,
            wall_time_s: if timing { record.agent_seconds } else { 0.0 },
            optimism,
            concentration_ratio,
        })?;
    }
    writer.finish()?;

    let elliptical = (monitors.elliptical_potential
        && matches!(
            entry.agent.kind,
            AlgorithmKind::Rrl | AlgorithmKind::Baseline
        ))
    .then(|| {
        let bound = elliptical_bound(
            episodes,
            spec.dim,
            agent.params.kappa,
            agent.params.lambda,
            spec.max_reachable(),
            spec.l_phi,
        );
        let max_sum = elliptical_sums.iter().copied().fold(0.0, f64::max);
        EllipticalSummary {
            holds: max_sum <= bound,
            max_sum,
            bound,
        }
    });

    Ok(RunSummary {
        label: entry.label.clone(),
        seed,
        status: "ok".into(),
        episodes,
        csv: Some(out_path.file_name().unwrap().to_string_lossy().into_owned()),
        agent_seconds_total,
        final_cumulative_regret: cumulative_regret,
        optimism_rate: monitors
            .optimism
            .then(|| optimistic as f64 / episodes as f64),
        concentration_max,
        elliptical,
    })
}

pub fn run_file_name(label: &str, seed: u64) -> String {
    format!("alg={label}_seed={seed}.csv")
}

/// Execute every (algorithm, seed) run, write per-run CSVs, the aggregate
/// CSV, and the manifest. Failed runs are recorded and do not abort the
/// others.
pub fn run_experiment(
    config: &ExperimentConfig,
    seed_offset: u64,
    jobs: usize,
) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let spec = config.environment.build()?;
    let solution = oracle::exact_value_iteration(&spec)?;
    let v_star = solution.v_star[0][0];
    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;

    let effective_seeds: Vec<u64> = config.seeds.iter().map(|s| s + seed_offset).collect();
    let mut tasks = Vec::new();
    for (alg_index, entry) in config.algorithms.iter().enumerate() {
        for &seed in &effective_seeds {
            tasks.push((alg_index, entry.clone(), seed));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building thread pool")?;
    let summaries: Vec<RunSummary> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(alg_index, entry, seed)| {
                let path = out_dir.join(run_file_name(&entry.label, *seed));
                run_one(
                    &spec,
                    entry,
                    *alg_index,
                    *seed,
                    config.episodes,
                    config.monitors,
                    config.timing,
                    v_star,
                    &path,
                )
                .unwrap_or_else(|err| RunSummary {
                    label: entry.label.clone(),
                    seed: *seed,
                    status: format!("failed: {err:#}"),
                    episodes: 0,
                    csv: None,
                    agent_seconds_total: 0.0,
                    final_cumulative_regret: 0.0,
                    optimism_rate: None,
                    concentration_max: None,
                    elliptical: None,
                })
            })
            .collect()
    });

    let aggregate_csv = out_dir.join("aggregate.csv");
    write_aggregate(config, out_dir, &aggregate_csv)?;

    let failures = summaries.iter().filter(|s| s.status != "ok").count();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seed_offset,
        effective_seeds,
        runs: summaries,
        failures,
        wall_seconds_total: started.elapsed().as_secs_f64(),
        oracle_initial_value: v_star,
    };
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    Ok(ExperimentReport {
        manifest,
        aggregate_csv,
    })
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and standard deviation per (algorithm, episode) across seeds.
fn write_aggregate(config: &ExperimentConfig, out_dir: &Path, target: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut body = String::new();
    writeln!(body, "# mnl-bench aggregate schema v{SCHEMA_VERSION}")?;
    writeln!(
        body,
        "episode,algorithm,mean_return,std_return,mean_regret,std_regret,mean_wall_time_s"
    )?;
    for entry in &config.algorithms {
        let mut series: Vec<RunSeries> = Vec::new();
        for &seed in &config.seeds {
            let path = out_dir.join(run_file_name(&entry.label, seed));
            if let Ok(text) = fs::read_to_string(&path) {
                series.push(parse_run_csv(&text)?);
            }
        }
        if series.is_empty() {
            continue;
        }
        let episodes = series.iter().map(|s| s.episodes.len()).min().unwrap_or(0);
        for k in 0..episodes {
            let returns: Vec<f64> = series.iter().map(|s| s.returns[k]).collect();
            let regrets: Vec<f64> = series.iter().map(|s| s.regrets[k]).collect();
            let walls: Vec<f64> = series.iter().map(|s| s.wall_times[k]).collect();
            let (mr, sr) = mean_and_std(&returns);
            let (mg, sg) = mean_and_std(&regrets);
            let (mw, _) = mean_and_std(&walls);
            writeln!(
                body,
                "{},{},{},{},{},{},{}",
                k + 1,
                entry.label,
                mr,
                sr,
                mg,
                sg,
                mw
            )?;
        }
    }
    fs::write(target, body).with_context(|| format!("writing {}", target.display()))?;
    Ok(())
}

/// Per-algorithm timing profile over the first `episodes` episodes of one
/// seed: total agent compute and the regression slope of per-episode time
/// against the episode index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuntimeEntry {
    pub label: String,
    pub total_seconds: f64,
    pub slope_seconds_per_episode: f64,
    /// Two-sided p-value for slope = 0.
    pub p_slope_zero: f64,
    /// One-sided p-value for slope <= 0.
    pub p_slope_positive: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuntimeSummary {
    pub episodes: usize,
    pub warmup_dropped: usize,
    pub entries: Vec<RuntimeEntry>,
}

/// Warmup episodes excluded from the slope regression (allocator and cache
/// effects concentrate there).
pub const RUNTIME_WARMUP: usize = 20;

pub fn measure_runtime(config: &ExperimentConfig, jobs: usize) -> Result<RuntimeSummary> {
    let mut timed = config.clone();
    timed.timing = true;
    timed.seeds = vec![config.seeds[0]];
    let report = run_experiment(&timed, 0, jobs)?;
    anyhow::ensure!(
        report.manifest.failures == 0,
        "runtime measurement had failing runs"
    );
    let mut entries = Vec::new();
    for entry in &timed.algorithms {
        let path = timed
            .output_dir
            .join(run_file_name(&entry.label, timed.seeds[0]));
        let series = parse_run_csv(&fs::read_to_string(&path)?)?;
        let total = series.wall_times.iter().sum::<f64>();
        let xs: Vec<f64> = (RUNTIME_WARMUP..series.wall_times.len())
            .map(|i| (i + 1) as f64)
            .collect();
        let ys: Vec<f64> = series.wall_times[RUNTIME_WARMUP..].to_vec();
        let test = stats::slope_test(&xs, &ys)
            .context("not enough episodes for a slope test")?;
        entries.push(RuntimeEntry {
            label: entry.label.clone(),
            total_seconds: total,
            slope_seconds_per_episode: test.slope,
            p_slope_zero: test.p_two_sided,
            p_slope_positive: test.p_positive,
        });
    }
    Ok(RuntimeSummary {
        episodes: timed.episodes,
        warmup_dropped: RUNTIME_WARMUP,
        entries,
    })
}

impl RuntimeSummary {
    /// Plain-text comparison table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>12} {:>16} {:>12} {:>12}\n",
            "algorithm", "total (s)", "slope (s/ep)", "p(slope=0)", "p(slope<=0)"
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "{:<12} {:>12.4} {:>16.3e} {:>12.4} {:>12.4}\n",
                e.label,
                e.total_seconds,
                e.slope_seconds_per_episode,
                e.p_slope_zero,
                e.p_slope_positive
            ));
        }
        out
    }
}

//! Plot-ready CSV emission: per-metric curves with rolling-window smoothing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mnl_mdp::stats::rolling_mean;

#[derive(Clone, Debug, Default)]
struct AggSeries {
    episodes: Vec<usize>,
    mean_return: Vec<f64>,
    std_return: Vec<f64>,
    mean_regret: Vec<f64>,
    std_regret: Vec<f64>,
}

fn parse_aggregate(text: &str) -> Result<BTreeMap<String, AggSeries>> {
    let mut by_alg: BTreeMap<String, AggSeries> = BTreeMap::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("episode") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 {
            bail!("malformed aggregate row: {line}");
        }
        let series = by_alg.entry(fields[1].to_string()).or_default();
        series.episodes.push(fields[0].parse()?);
        series.mean_return.push(fields[2].parse()?);
        series.std_return.push(fields[3].parse()?);
        series.mean_regret.push(fields[4].parse()?);
        series.std_regret.push(fields[5].parse()?);
    }
    Ok(by_alg)
}

/// Write `return_curves.csv` and `regret_curves.csv` next to `out_dir`,
/// smoothing every series with a trailing window of `window` episodes
/// (recorded in the header comment).
pub fn emit_plot_data(
    aggregate_path: &Path,
    out_dir: &Path,
    window: usize,
) -> Result<Vec<PathBuf>> {
    if window == 0 {
        bail!("window must be at least 1");
    }
    let text = fs::read_to_string(aggregate_path)
        .with_context(|| format!("reading {}", aggregate_path.display()))?;
    let by_alg = parse_aggregate(&text)?;
    if by_alg.is_empty() {
        bail!("aggregate file {} holds no rows", aggregate_path.display());
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, which) in [("return_curves.csv", true), ("regret_curves.csv", false)] {
        let mut body = String::new();
        writeln!(body, "# window={window}")?;
        writeln!(body, "episode,algorithm,mean,std")?;
        for (label, series) in &by_alg {
            let (means, stds) = if which {
                (&series.mean_return, &series.std_return)
            } else {
                (&series.mean_regret, &series.std_regret)
            };
            let smooth_mean = rolling_mean(means, window);
            let smooth_std = rolling_mean(stds, window);
            for (i, &episode) in series.episodes.iter().enumerate() {
                writeln!(body, "{episode},{label},{},{}", smooth_mean[i], smooth_std[i])?;
            }
        }
        let path = out_dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

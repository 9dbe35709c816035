//! Per-episode metrics rows and their CSV encoding.

use std::io::Write;

use anyhow::{bail, Context, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// One episode of one run.
#[derive(Clone, Debug)]
pub struct MetricsRow {
    /// 1-based episode index.
    pub episode: usize,
    pub episodic_return: f64,
    pub cumulative_regret: f64,
    pub wall_time_s: f64,
    pub optimism: Option<u8>,
    pub concentration_ratio: Option<f64>,
}

/// Streaming CSV writer enforcing the row invariants.
pub struct MetricsWriter<W: Write> {
    out: W,
    with_optimism: bool,
    with_concentration: bool,
    last_regret: f64,
    rows: usize,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W, with_optimism: bool, with_concentration: bool) -> Result<Self> {
        writeln!(out, "# mnl-bench metrics schema v{SCHEMA_VERSION}")?;
        let mut header = String::from("episode,return,regret,wall_time_s");
        if with_optimism {
            header.push_str(",optimism");
        }
        if with_concentration {
            header.push_str(",concentration_ratio");
        }
        writeln!(out, "{header}")?;
        Ok(Self {
            out,
            with_optimism,
            with_concentration,
            last_regret: 0.0,
            rows: 0,
        })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        if row.cumulative_regret < self.last_regret {
            bail!(
                "cumulative regret decreased at episode {}: {} -> {}",
                row.episode,
                self.last_regret,
                row.cumulative_regret
            );
        }
        self.last_regret = row.cumulative_regret;
        let mut line = format!(
            "{},{},{},{}",
            row.episode, row.episodic_return, row.cumulative_regret, row.wall_time_s
        );
        if self.with_optimism {
            line.push(',');
            if let Some(flag) = row.optimism {
                line.push_str(&flag.to_string());
            }
        }
        if self.with_concentration {
            line.push(',');
            if let Some(ratio) = row.concentration_ratio {
                line.push_str(&ratio.to_string());
            }
        }
        writeln!(self.out, "{line}")?;
        self.rows += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        Ok(self.rows)
    }
}

/// A parsed per-run CSV, used by aggregation and the plot emitter.
#[derive(Clone, Debug, Default)]
pub struct RunSeries {
    pub episodes: Vec<usize>,
    pub returns: Vec<f64>,
    pub regrets: Vec<f64>,
    pub wall_times: Vec<f64>,
}

pub fn parse_run_csv(text: &str) -> Result<RunSeries> {
    let mut series = RunSeries::default();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("episode") || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let episode: usize = fields
            .next()
            .context("missing episode column")?
            .parse()
            .context("bad episode value")?;
        let ret: f64 = fields.next().context("missing return")?.parse()?;
        let regret: f64 = fields.next().context("missing regret")?.parse()?;
        let wall: f64 = fields.next().context("missing wall time")?.parse()?;
        series.episodes.push(episode);
        series.returns.push(ret);
        series.regrets.push(regret);
        series.wall_times.push(wall);
    }
    Ok(series)
}

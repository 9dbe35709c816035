//! Statistical helpers shared by the schedules, the monitors, and the
//! benchmark harness.

use statrs::distribution::{Beta, ChiSquared, ContinuousCDF, Normal, StudentsT};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// `Phi(-1) / 2`, the guaranteed per-episode optimism probability of the
/// randomized agents.
pub fn optimism_floor() -> f64 {
    norm_cdf(-1.0) / 2.0
}

/// Ordinary least squares of `y` on `x` with a two-sided t-test of the
/// slope against zero.
#[derive(Clone, Copy, Debug)]
pub struct SlopeTest {
    pub slope: f64,
    pub stderr: f64,
    pub t_stat: f64,
    /// Two-sided p-value for slope = 0.
    pub p_two_sided: f64,
    /// One-sided p-value for slope <= 0 (small means positive slope).
    pub p_positive: f64,
}

pub fn slope_test(x: &[f64], y: &[f64]) -> Option<SlopeTest> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return None;
    }
    let nf = n as f64;
    let mean_x = x.iter().sum::<f64>() / nf;
    let mean_y = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dx = x[i] - mean_x;
        sxx += dx * dx;
        sxy += dx * (y[i] - mean_y);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut rss = 0.0;
    for i in 0..n {
        let resid = y[i] - intercept - slope * x[i];
        rss += resid * resid;
    }
    let dof = nf - 2.0;
    let stderr = (rss / dof / sxx).sqrt();
    if stderr == 0.0 {
        // A perfectly collinear fit: the slope sign answers both tests.
        let degenerate = slope == 0.0;
        return Some(SlopeTest {
            slope,
            stderr,
            t_stat: if degenerate { 0.0 } else { f64::INFINITY },
            p_two_sided: if degenerate { 1.0 } else { 0.0 },
            p_positive: if slope > 0.0 { 0.0 } else { 1.0 },
        });
    }
    let t_stat = slope / stderr;
    let dist = StudentsT::new(0.0, 1.0, dof).ok()?;
    let p_two_sided = 2.0 * (1.0 - dist.cdf(t_stat.abs()));
    let p_positive = 1.0 - dist.cdf(t_stat);
    Some(SlopeTest {
        slope,
        stderr,
        t_stat,
        p_two_sided,
        p_positive,
    })
}

/// One-sided lower confidence bound for a binomial proportion
/// (Clopper-Pearson). `confidence` is e.g. 0.95.
pub fn binomial_lower_bound(successes: usize, trials: usize, confidence: f64) -> f64 {
    assert!(trials > 0 && successes <= trials);
    if successes == 0 {
        return 0.0;
    }
    if successes == trials {
        // Lower bound solves (1 - alpha) = p^n.
        return (1.0 - confidence).powf(1.0 / trials as f64);
    }
    let a = successes as f64;
    let b = (trials - successes + 1) as f64;
    Beta::new(a, b)
        .expect("valid beta parameters")
        .inverse_cdf(1.0 - confidence)
}

/// `p`-quantile of the chi distribution with `dof` degrees of freedom.
pub fn chi_quantile(dof: f64, p: f64) -> f64 {
    ChiSquared::new(dof)
        .expect("valid chi-squared dof")
        .inverse_cdf(p)
        .sqrt()
}

/// Trailing rolling mean with window `w` (window clipped at the series
/// start, so the output has the input's length). `w = 1` is the identity.
pub fn rolling_mean(values: &[f64], w: usize) -> Vec<f64> {
    assert!(w >= 1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        acc += values[i];
        if i >= w {
            acc -= values[i - w];
        }
        let len = (i + 1).min(w);
        out.push(acc / len as f64);
    }
    out
}

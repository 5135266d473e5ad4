//! Two-sample Kolmogorov–Smirnov comparison and a Poisson goodness-of-fit test.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

use super::AnalysisError;

/// `sup_x |F_a(x) − F_b(x)|` of the two empirical distribution functions.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(AnalysisError::Invalid("samples contain NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Asymptotic two-sample critical value `sqrt(-½ ln(α/2))·sqrt((n + m)/(n m))`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (-0.5 * (alpha / 2.0).ln()).sqrt() * ((n + m) / (n * m)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsComparison {
    pub statistics: Vec<f64>,
    /// Per-coordinate critical value at the Bonferroni-corrected level `α/d`.
    pub critical_value: f64,
    pub alpha: f64,
    pub sizes: (usize, usize),
    pub pass: bool,
}

/// Per-coordinate two-sample KS between two sets of `d`-dimensional samples.
pub fn distribution_compare(a: &[Vec<f64>], b: &[Vec<f64>], alpha: f64) -> Result<KsComparison, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalysisError::Invalid("alpha must lie in (0, 1)".into()));
    }
    let d = a[0].len();
    if a.iter().chain(b).any(|v| v.len() != d) {
        return Err(AnalysisError::Invalid("samples have inconsistent dimension".into()));
    }
    let statistics = (0..d)
        .map(|k| {
            let xa: Vec<f64> = a.iter().map(|v| v[k]).collect();
            let xb: Vec<f64> = b.iter().map(|v| v[k]).collect();
            ks_statistic(&xa, &xb)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let critical_value = ks_critical_value(alpha / d.max(1) as f64, a.len(), b.len());
    let pass = statistics.iter().all(|&s| s <= critical_value);
    Ok(KsComparison { statistics, critical_value, alpha, sizes: (a.len(), b.len()), pass })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonGof {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub critical_value: f64,
    pub alpha: f64,
    pub bins: usize,
    pub sample_mean: f64,
    /// 99.7% interval `λT ± 3·sqrt(λT/n)` for the sample mean.
    pub mean_interval: (f64, f64),
    pub pass: bool,
    pub mean_pass: bool,
}

/// Chi-square goodness of fit of observed counts to `Poisson(mean)`. Adjacent
/// cells are pooled until each expects at least 5 observations; the last cell
/// absorbs the upper tail.
pub fn poisson_count_gof(counts: &[usize], mean: f64, alpha: f64) -> Result<PoissonGof, AnalysisError> {
    if counts.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(AnalysisError::Invalid("Poisson mean must be positive".into()));
    }
    let n = counts.len() as f64;
    let law = Poisson::new(mean).map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let max_count = *counts.iter().max().expect("non-empty");
    let mut hist = vec![0usize; max_count + 1];
    for &c in counts {
        hist[c] += 1;
    }

    // cells as (first count, expected, observed); the last cell is open-ended
    let mut cells: Vec<(u64, f64, f64)> = Vec::new();
    let mut start = 0u64;
    let mut expected = 0.0;
    let mut observed = 0.0;
    let mut k = 0u64;
    loop {
        let tail = if k == 0 { 1.0 } else { 1.0 - law.cdf(k - 1) };
        if tail * n < 5.0 {
            break;
        }
        expected += law.pmf(k) * n;
        observed += hist.get(k as usize).copied().unwrap_or(0) as f64;
        if expected >= 5.0 {
            cells.push((start, expected, observed));
            start = k + 1;
            expected = 0.0;
            observed = 0.0;
        }
        k += 1;
    }
    let tail_expected = if start == 0 { n } else { (1.0 - law.cdf(start - 1)) * n };
    let tail_observed = counts.iter().filter(|&&c| c as u64 >= start).count() as f64;
    if tail_expected >= 5.0 || cells.is_empty() {
        cells.push((start, tail_expected, tail_observed));
    } else {
        let last = cells.last_mut().expect("non-empty");
        last.1 += tail_expected;
        last.2 += tail_observed;
    }
    if cells.len() < 2 {
        return Err(AnalysisError::Invalid("too few observations for a chi-square test".into()));
    }
    let statistic: f64 = cells.iter().map(|&(_, e, o)| (o - e) * (o - e) / e).sum();
    let df = cells.len() - 1;
    let chi = ChiSquared::new(df as f64).map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let critical_value = chi.inverse_cdf(1.0 - alpha);
    let sample_mean = counts.iter().sum::<usize>() as f64 / n;
    let half = 3.0 * (mean / n).sqrt();
    let mean_interval = (mean - half, mean + half);
    Ok(PoissonGof {
        statistic,
        degrees_of_freedom: df,
        critical_value,
        alpha,
        bins: cells.len(),
        sample_mean,
        mean_interval,
        pass: statistic <= critical_value,
        mean_pass: sample_mean >= mean_interval.0 && sample_mean <= mean_interval.1,
    })
}

/// Sample Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(AnalysisError::Invalid("correlation needs two equal samples of size >= 2".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    Ok(sab / (saa * sbb).sqrt())
}

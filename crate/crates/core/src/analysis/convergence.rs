//! Strong-error convergence studies against a fine reference sharing the noise.

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::TransformedModel;
use crate::scalar::Scalar;
use crate::solver::{self, Estimate, Scheme, SchemeConfig, SolverError};

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelResult {
    pub h: f64,
    pub steps: usize,
    /// `E‖X_T^h − X_T^ref‖`
    pub error: Estimate,
    /// `E sup_t ‖X_t^h − X_t^ref‖` over the coarse grid.
    pub sup_error: Estimate,
    /// Paths that blew up or failed to invert at this level.
    pub failures: usize,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub scheme: Scheme,
    pub paths: usize,
    pub reference_steps: usize,
    pub levels: Vec<LevelResult>,
    /// OLS slope of `log₂ error` on `log₂ h`; `None` when undefined.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Every included level has error zero up to summation round-off.
    pub exact: bool,
    pub flags: Vec<String>,
}

impl ConvergenceReport {
    pub fn order_label(&self) -> String {
        match (self.exact, self.slope) {
            (true, _) => "exact".to_owned(),
            (false, Some(s)) => format!("{s}"),
            (false, None) => "undefined".to_owned(),
        }
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Mean errors at most `ROUND_OFF·max(1, mean ‖X_T^ref‖)` count as zero:
/// coarse increments are sums of fine ones taken in a different order.
pub const ROUND_OFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyConfig<'a> {
    pub scheme: Scheme,
    /// Uniform step counts of the coarse levels; each must divide `reference_steps`.
    pub levels: &'a [usize],
    pub reference_steps: usize,
    pub paths: usize,
    pub seed: u64,
}

/// Per path `i`: one noise plan at the reference resolution, the transformed
/// reference, then every coarse level on aggregated increments. Paths run in
/// parallel; results are reduced in index order.
pub fn convergence_study<S: Scalar>(
    model: &TransformedModel<S>,
    cfg: &StudyConfig<'_>,
) -> Result<ConvergenceReport, AnalysisError> {
    if cfg.levels.len() < 3 {
        return Err(AnalysisError::Invalid("a convergence study needs at least 3 levels".into()));
    }
    if cfg.paths == 0 {
        return Err(AnalysisError::EmptySample);
    }
    for &steps in cfg.levels {
        if steps == 0 || !cfg.reference_steps.is_multiple_of(steps) {
            return Err(AnalysisError::Invalid(format!(
                "level with {steps} steps is not nested in the reference resolution {}",
                cfg.reference_steps
            )));
        }
    }
    let configs: Vec<SchemeConfig> =
        cfg.levels.iter().map(|&s| SchemeConfig::new(s, cfg.scheme)).collect::<Result<_, _>>()?;
    type PerPath = (f64, Vec<Option<(f64, f64)>>);
    let per_path: Vec<PerPath> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| -> Result<PerPath, SolverError> {
            let noise = solver::noise_for(model.base(), cfg.seed, i, cfg.reference_steps)?;
            let reference = solver::reference_path(model, &noise, cfg.reference_steps)?;
            let scale = reference.terminal().iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
            let errors = configs
                .iter()
                .map(|c| {
                    solver::simulate(model, c, &noise)
                        .ok()
                        .and_then(|p| solver::pathwise_error(&p, &reference).ok())
                        .filter(|(a, b)| a.is_finite() && b.is_finite())
                })
                .collect();
            Ok((scale, errors))
        })
        .collect::<Result<_, _>>()?;

    let horizon = model.base().horizon().as_f64();
    let mut levels = Vec::with_capacity(cfg.levels.len());
    let mut flags = Vec::new();
    for (j, &steps) in cfg.levels.iter().enumerate() {
        let ok: Vec<(f64, f64)> = per_path.iter().filter_map(|p| p.1[j]).collect();
        let failures = cfg.paths - ok.len();
        let (terminal, sup): (Vec<f64>, Vec<f64>) = ok.into_iter().unzip();
        let h = horizon / steps as f64;
        if failures > 0 {
            flags.push(format!("level h = {h}: {failures} path(s) failed; level excluded"));
        }
        levels.push(LevelResult {
            h,
            steps,
            error: Estimate::from_samples(&terminal),
            sup_error: Estimate::from_samples(&sup),
            failures,
            excluded: failures > 0,
        });
    }
    let included: Vec<&LevelResult> = levels.iter().filter(|l| !l.excluded).collect();
    let scale = per_path.iter().map(|p| p.0).sum::<f64>() / cfg.paths as f64;
    let zero = ROUND_OFF * scale.max(1.0);
    let exact = !included.is_empty() && included.iter().all(|l| l.error.mean <= zero);
    let (slope, intercept) = if exact {
        (None, None)
    } else {
        let pts: Vec<(f64, f64)> =
            included.iter().filter(|l| l.error.mean > zero).map(|l| (l.h.log2(), l.error.mean.log2())).collect();
        if pts.len() < included.len() {
            flags.push("levels with round-off error omitted from the regression".to_owned());
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        match ols(&x, &y) {
            Some((s, c)) => (Some(s), Some(c)),
            None => (None, None),
        }
    };
    Ok(ConvergenceReport {
        scheme: cfg.scheme,
        paths: cfg.paths,
        reference_steps: cfg.reference_steps,
        levels,
        slope,
        intercept,
        exact,
        flags,
    })
}

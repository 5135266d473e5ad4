//! Clause-by-clause certification of a model's structural assumptions.
//!
//! Closed forms are used wherever the coefficient presets allow; everything
//! else is sampled over a compact window. Failures are report entries, never
//! errors.

use rand::Rng;
use serde::Serialize;

use crate::coefficients::{estimate_pw_lipschitz, Model};
use crate::drivers::{stream, Channel};
use crate::geometry::{Hypersurface, Window};
use crate::linalg;
use crate::scalar::Scalar;
use crate::transform::{
    alpha_at, alpha_richardson, AlphaField, Certification, Transform, TransformError, TransformParams,
};

/// Default non-parallelity threshold `c₀`.
pub const DEFAULT_C0: f64 = 1e-6;
/// Largest admissible gap between the closed-form α and its one-sided limit.
pub const ALPHA_LIMIT_TOL: f64 = 1e-6;

const RICHARDSON_POINTS: usize = 32;

/// How the transform parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformSpec<S> {
    /// Start from `c = ε₀/2` and halve until certified.
    Auto {
        epsilon0: S,
        kappa_max: S,
    },
    Fixed(TransformParams<S>),
}

impl<S: Scalar> TransformSpec<S> {
    pub fn epsilon0(&self) -> S {
        match self {
            Self::Auto { epsilon0, .. } => *epsilon0,
            Self::Fixed(p) => p.epsilon0(),
        }
    }

    pub fn kappa_max(&self) -> S {
        match self {
            Self::Auto { kappa_max, .. } => *kappa_max,
            Self::Fixed(p) => p.kappa_max(),
        }
    }
}

/// Builds and certifies the transform of `model`. A continuous drift gives the identity.
pub fn build_transform<S: Scalar>(
    model: &Model<S>,
    spec: &TransformSpec<S>,
    window: &Window<S>,
    samples: usize,
    seed: u64,
) -> Result<Transform<S>, TransformError> {
    let surface = model.surface().clone();
    if model.drift().is_continuous() {
        return Transform::identity(surface, spec.epsilon0());
    }
    let mut rng = stream(seed, Channel::Sampling, 1);
    let alpha = AlphaField::from_model(model, window, samples.clamp(1, 1024), &mut rng)?;
    let cert = Certification::new(window.clone(), samples, seed);
    match *spec {
        TransformSpec::Auto { epsilon0, kappa_max } => Transform::auto(surface, alpha, epsilon0, kappa_max, &cert),
        TransformSpec::Fixed(params) => Transform::new(surface, params, alpha, &cert),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clause {
    pub name: &'static str,
    pub description: &'static str,
    pub value: f64,
    pub threshold: Option<f64>,
    pub pass: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformSummary {
    pub c: f64,
    pub epsilon0: f64,
    pub kappa: f64,
    pub kappa_max: f64,
    pub alpha_bound: f64,
    pub identity: bool,
}

impl TransformSummary {
    pub fn of<S: Scalar>(t: &Transform<S>) -> Self {
        Self {
            c: t.params().c().as_f64(),
            epsilon0: t.params().epsilon0().as_f64(),
            kappa: t.kappa().as_f64(),
            kappa_max: t.params().kappa_max().as_f64(),
            alpha_bound: t.alpha().bound_estimate().as_f64(),
            identity: t.is_identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub pass: bool,
    pub clauses: Vec<Clause>,
    pub samples: usize,
    pub seed: u64,
    pub c0: f64,
    pub transform: Option<TransformSummary>,
    pub transform_error: Option<String>,
}

impl CheckReport {
    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }

    /// Plain-text rendering, one clause per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("overall: {}\n", if self.pass { "PASS" } else { "FAIL" }));
        out.push_str(&format!("samples: {}  seed: {}  c0: {:?}\n", self.samples, self.seed, self.c0));
        if let Some(t) = &self.transform {
            out.push_str(&format!(
                "transform: c={:?} epsilon0={:?} kappa={:?} kappa_max={:?} alpha_bound={:?}{}\n",
                t.c,
                t.epsilon0,
                t.kappa,
                t.kappa_max,
                t.alpha_bound,
                if t.identity { " (identity)" } else { "" }
            ));
        }
        if let Some(e) = &self.transform_error {
            out.push_str(&format!("transform: not available ({e})\n"));
        }
        for c in &self.clauses {
            out.push_str(&format!(
                "[{}] {:<16} {:?}{}  {}",
                if c.pass { "pass" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold.map(|t| format!(" (threshold {t:?})")).unwrap_or_default(),
                c.description
            ));
            if let Some(n) = &c.note {
                out.push_str(&format!("; {n}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions<S> {
    pub transform: TransformSpec<S>,
    pub window: Window<S>,
    pub samples: usize,
    pub seed: u64,
    pub c0: f64,
}

fn finite_clause(name: &'static str, description: &'static str, value: f64, note: Option<String>) -> Clause {
    Clause { name, description, value, threshold: None, pass: value.is_finite(), note }
}

fn sample_tube<S: Scalar, R: Rng + ?Sized>(
    surface: &Hypersurface<S>,
    window: &Window<S>,
    radius: S,
    count: usize,
    rng: &mut R,
) -> Vec<Vec<S>> {
    surface
        .sample_surface(window, count, rng)
        .into_iter()
        .filter_map(|zeta| {
            let n = surface.unit_normal(&zeta).ok()?;
            let t = (S::lit(2.0 * rng.random::<f64>()) - S::one()) * radius;
            Some(zeta.iter().zip(&n).map(|(&z, &ni)| z + t * ni).collect())
        })
        .collect()
}

/// Certifies every clause on `window` with `samples` draws per sampled quantity.
pub fn check_assumptions<S: Scalar>(model: &Model<S>, opts: &CheckOptions<S>) -> CheckReport {
    let surface = model.surface();
    let eps0 = opts.transform.epsilon0();
    let mut rng = stream(opts.seed, Channel::Sampling, 0);
    let mut clauses = Vec::new();

    let drift = model.drift();
    let closed = drift.lipschitz_constant().as_f64();
    let sampled = estimate_pw_lipschitz(drift, &opts.window, opts.samples, &mut rng);
    let note = match &sampled {
        Ok(v) => Some(format!("sampled lower bound {:?}", v.as_f64())),
        Err(e) => Some(format!("sampled estimate unavailable: {e}")),
    };
    clauses.push(finite_clause("ass_mu", "piecewise Lipschitz constant of the drift", closed, note));

    clauses.push(finite_clause(
        "ass_sigma",
        "Lipschitz constant of the diffusion",
        model.diffusion().lipschitz_constant().as_f64(),
        None,
    ));

    let tube_points = sample_tube(surface, &opts.window, eps0, opts.samples, &mut rng);
    let loc = tube_points
        .iter()
        .map(|x| (linalg::norm(&drift.eval(x)) + model.diffusion().eval(x).frobenius_norm()).as_f64())
        .fold(0.0f64, f64::max);
    let grows =
        !drift.plus().matrix().is_zero() || !drift.minus().matrix().is_zero() || !model.diffusion().is_constant();
    let loc_note = (surface.is_hyperplane() && grows).then(|| {
        "supremum over the sampled window only; the tube is unbounded along the hyperplane and affine coefficients grow along it"
            .to_owned()
    });
    clauses.push(finite_clause("loc_bound", "sup of ‖μ‖ + ‖σ‖ over the sampled tube", loc, loc_note));

    let feet = surface.sample_surface(&opts.window, opts.samples, &mut rng);
    let mut min_transversality = f64::INFINITY;
    for zeta in &feet {
        if let Ok(n) = surface.unit_normal(zeta) {
            min_transversality = min_transversality.min(model.diffusion().transversality(zeta, &n).as_f64());
        }
    }
    clauses.push(Clause {
        name: "non_parallelity",
        description: "min ‖σ(ζ)ᵀn(ζ)‖ over sampled surface points",
        value: min_transversality,
        threshold: Some(opts.c0),
        pass: min_transversality >= opts.c0,
        note: None,
    });

    let mut alpha_bound = 0.0f64;
    let mut alpha_gap = 0.0f64;
    let mut alpha_failure = None;
    if !drift.is_continuous() {
        for (k, zeta) in feet.iter().enumerate() {
            match alpha_at(model, surface, zeta) {
                Ok(a) => {
                    alpha_bound = alpha_bound.max(linalg::norm(&a).as_f64());
                    if k < RICHARDSON_POINTS {
                        match alpha_richardson(model, surface, zeta, eps0) {
                            Ok(r) => alpha_gap = alpha_gap.max(linalg::distance(&a, &r).as_f64()),
                            Err(e) => {
                                alpha_failure.get_or_insert(e.to_string());
                            }
                        }
                    }
                }
                Err(e) => {
                    alpha_failure.get_or_insert(e.to_string());
                }
            }
        }
    }
    clauses.push(Clause {
        name: "alpha_bound",
        description: "sampled sup ‖α‖ on the surface",
        value: if alpha_failure.is_some() { f64::NAN } else { alpha_bound },
        threshold: None,
        pass: alpha_failure.is_none() && alpha_bound.is_finite(),
        note: alpha_failure.clone(),
    });
    clauses.push(Clause {
        name: "alpha_limit",
        description: "max gap between closed-form α and its one-sided limit",
        value: if alpha_failure.is_some() { f64::NAN } else { alpha_gap },
        threshold: Some(ALPHA_LIMIT_TOL),
        pass: alpha_failure.is_none() && alpha_gap <= ALPHA_LIMIT_TOL,
        note: alpha_failure,
    });

    let built = build_transform(model, &opts.transform, &opts.window, opts.samples, opts.seed);
    let kappa_max = opts.transform.kappa_max().as_f64();
    let (transform, transform_error) = match &built {
        Ok(t) => (Some(TransformSummary::of(t)), None),
        Err(e) => (None, Some(e.to_string())),
    };
    clauses.push(Clause {
        name: "kappa",
        description: "sampled contraction of G − id over the tube",
        value: transform.as_ref().map_or(f64::NAN, |t| t.kappa),
        threshold: Some(kappa_max),
        pass: transform.as_ref().is_some_and(|t| t.kappa <= kappa_max),
        note: match (&transform, &transform_error) {
            (Some(t), _) => Some(format!("c = {:?}", t.c)),
            (None, Some(e)) => Some(e.clone()),
            _ => None,
        },
    });

    clauses.push(finite_clause(
        "ass_rho",
        "c_ρ of the L²(ψ) growth and Lipschitz bounds",
        model.jump_growth_constant(),
        None,
    ));
    clauses.push(finite_clause(
        "mark_law",
        "second moment of the mark law (zero marks excluded)",
        model.marks().second_moment(),
        None,
    ));

    let pass = clauses.iter().all(|c| c.pass);
    CheckReport { pass, clauses, samples: opts.samples, seed: opts.seed, c0: opts.c0, transform, transform_error }
}

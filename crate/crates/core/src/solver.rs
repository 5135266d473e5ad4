//! Jump-adapted Euler–Maruyama, directly on `X` or on `Z = G(X)`, and
//! strong-error estimation against a fine reference sharing the same noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::{Model, ModelError, TransformedModel};
use crate::drivers::{DriverError, NoiseId, NoisePlan, StepSchedule};
use crate::linalg::{self, Matrix};
use crate::scalar::{pairwise_sum, Scalar};
use crate::transform::TransformError;

/// Resolution exponent of the reference solution: `h_ref = T·2⁻¹⁴`.
pub const REFERENCE_LEVEL: u32 = 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("numerical blow-up at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid scheme configuration: {0}")]
    Config(String),
    #[error("paths do not share their noise: {0}")]
    NoiseMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    DirectEm,
    TransformedEm,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Self::DirectEm => "direct_em",
            Self::TransformedEm => "transformed_em",
        }
    }
}

/// Uniform step count on `[0, T]` (jump times are merged on top).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchemeConfig {
    pub steps: usize,
    pub scheme: Scheme,
}

impl SchemeConfig {
    pub fn new(steps: usize, scheme: Scheme) -> Result<Self, SolverError> {
        if steps == 0 {
            return Err(SolverError::Config("at least one step is required".into()));
        }
        Ok(Self { steps, scheme })
    }

    /// Steps for a step size `h`; `T/h` must be an integer up to round-off.
    pub fn from_step(h: f64, horizon: f64, scheme: Scheme) -> Result<Self, SolverError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(SolverError::Config("h must be positive".into()));
        }
        if h > horizon {
            return Err(SolverError::Config("h must not exceed T".into()));
        }
        let ratio = horizon / h;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio {
            return Err(SolverError::Config(format!("T/h = {ratio} is not an integer")));
        }
        Self::new(steps as usize, scheme)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord<S> {
    /// Grid index of the jump.
    pub index: usize,
    pub time: S,
    pub mark: S,
    pub pre: Vec<S>,
    pub post: Vec<S>,
}

/// A simulated trajectory on a jump-adapted grid. `states` holds the
/// post-jump (càdlàg) values at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Path<S> {
    pub noise: NoiseId,
    pub dim: usize,
    pub times: Vec<S>,
    pub states: Vec<S>,
    pub is_jump: Vec<bool>,
    pub jumps: Vec<JumpRecord<S>>,
}

impl<S: Scalar> Path<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[S] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[S] {
        self.state(self.len() - 1)
    }

    /// State just before grid point `i`: the pre-jump value at a jump, else the state itself.
    pub fn left_limit(&self, i: usize) -> &[S] {
        if self.is_jump[i] {
            if let Some(j) = self.jumps.iter().find(|j| j.index == i) {
                return &j.pre;
            }
        }
        self.state(i)
    }

    /// The same path with `f` applied to every stored state.
    pub fn map_states<E>(&self, mut f: impl FnMut(&[S]) -> Result<Vec<S>, E>) -> Result<Self, E> {
        let mut states = Vec::with_capacity(self.states.len());
        for i in 0..self.len() {
            states.extend(f(self.state(i))?);
        }
        let mut jumps = Vec::with_capacity(self.jumps.len());
        for j in &self.jumps {
            jumps.push(JumpRecord { pre: f(&j.pre)?, post: f(&j.post)?, ..j.clone() });
        }
        Ok(Self { states, jumps, ..self.clone() })
    }
}

struct PathBuilder<S> {
    path: Path<S>,
}

impl<S: Scalar> PathBuilder<S> {
    fn new(noise: NoiseId, schedule: &StepSchedule<S>, x0: &[S]) -> Self {
        let n = schedule.times.len();
        let mut states = Vec::with_capacity(n * x0.len());
        states.extend_from_slice(x0);
        let mut is_jump = Vec::with_capacity(n);
        is_jump.push(false);
        Self { path: Path { noise, dim: x0.len(), times: schedule.times.clone(), states, is_jump, jumps: Vec::new() } }
    }

    fn push(&mut self, state: &[S]) {
        self.path.states.extend_from_slice(state);
        self.path.is_jump.push(false);
    }

    fn push_jump(&mut self, index: usize, mark: S, pre: Vec<S>, post: Vec<S>) {
        self.path.states.extend_from_slice(&post);
        self.path.is_jump.push(true);
        self.path.jumps.push(JumpRecord { index, time: self.path.times[index], mark, pre, post });
    }
}

#[inline]
fn euler_step<S: Scalar>(state: &[S], mu: &[S], sigma: &Matrix<S>, dt: S, dw: &[S], out: &mut [S]) {
    sigma.mul_vec_into(dw, out);
    for i in 0..state.len() {
        out[i] = state[i] + mu[i] * dt + out[i];
    }
}

fn check_finite<S: Scalar>(x: &[S], step: usize, time: S) -> Result<(), SolverError> {
    if linalg::is_finite(x) {
        Ok(())
    } else {
        Err(SolverError::BlowUp { step, time: time.as_f64() })
    }
}

fn check_plan<S: Scalar>(model: &Model<S>, noise: &NoisePlan<S>) -> Result<(), SolverError> {
    if noise.dimension() != model.dimension() {
        return Err(SolverError::Config(format!(
            "noise dimension {} does not match model dimension {}",
            noise.dimension(),
            model.dimension()
        )));
    }
    if noise.horizon() != model.horizon() {
        return Err(SolverError::Config("noise horizon differs from the model horizon".into()));
    }
    Ok(())
}

/// `X ← X + μ(X)h_i + σ(X)ΔW_i` between grid points and
/// `X ← X + ρ(X_{τ−}, ξ)` at jump times.
pub fn em_direct<S: Scalar>(
    model: &Model<S>,
    cfg: &SchemeConfig,
    noise: &NoisePlan<S>,
) -> Result<Path<S>, SolverError> {
    check_plan(model, noise)?;
    let schedule = noise.schedule(cfg.steps)?;
    let d = model.dimension();
    let mut builder = PathBuilder::new(noise.id(), &schedule, model.x0());
    let mut x = model.x0().to_vec();
    let mut mu = vec![S::zero(); d];
    let mut next = vec![S::zero(); d];
    for i in 0..schedule.times.len() - 1 {
        let dt = schedule.times[i + 1] - schedule.times[i];
        model.drift().eval_into(&x, &mut mu);
        let sigma = model.diffusion().eval(&x);
        euler_step(&x, &mu, &sigma, dt, schedule.dw.get(i), &mut next);
        check_finite(&next, i + 1, schedule.times[i + 1])?;
        std::mem::swap(&mut x, &mut next);
        match schedule.jumps[i + 1] {
            None => builder.push(&x),
            Some(k) => {
                let mark = S::lit(noise.train().marks[k]);
                let rho = model.jump().eval(&x, mark);
                let post = linalg::add(&x, &rho);
                check_finite(&post, i + 1, schedule.times[i + 1])?;
                builder.push_jump(i + 1, mark, x.clone(), post.clone());
                x = post;
            }
        }
    }
    Ok(builder.path)
}

/// Euler–Maruyama on `Z = G(X)` with coefficients `(μ̃, σ̃, ρ̃)`, returning
/// `X = G⁻¹(Z)` at every grid point.
pub fn em_transformed<S: Scalar>(
    model: &TransformedModel<S>,
    cfg: &SchemeConfig,
    noise: &NoisePlan<S>,
) -> Result<Path<S>, SolverError> {
    let base = model.base();
    check_plan(base, noise)?;
    let transform = model.transform();
    let schedule = noise.schedule(cfg.steps)?;
    let d = base.dimension();
    let mut builder = PathBuilder::new(noise.id(), &schedule, base.x0());
    let mut x = base.x0().to_vec();
    let mut z = transform.forward(&x)?;
    let mut next = vec![S::zero(); d];
    for i in 0..schedule.times.len() - 1 {
        let t_next = schedule.times[i + 1];
        let dt = t_next - schedule.times[i];
        let local = model.local_at_preimage(x)?;
        euler_step(&z, &local.mu, &local.sigma, dt, schedule.dw.get(i), &mut next);
        check_finite(&next, i + 1, t_next)?;
        std::mem::swap(&mut z, &mut next);
        x = transform.inverse(&z)?;
        check_finite(&x, i + 1, t_next)?;
        if let Some(k) = schedule.jumps[i + 1] {
            let mark = S::lit(noise.train().marks[k]);
            let jump = model.rho_tilde_at_preimage(&x, &z, mark)?;
            let z_post = linalg::add(&z, &jump);
            check_finite(&z_post, i + 1, t_next)?;
            let x_post = transform.inverse(&z_post)?;
            builder.push_jump(i + 1, mark, x.clone(), x_post.clone());
            x = x_post;
            z = z_post;
        } else {
            builder.push(&x);
        }
    }
    Ok(builder.path)
}

/// Runs the configured scheme.
pub fn simulate<S: Scalar>(
    model: &TransformedModel<S>,
    cfg: &SchemeConfig,
    noise: &NoisePlan<S>,
) -> Result<Path<S>, SolverError> {
    match cfg.scheme {
        Scheme::DirectEm => em_direct(model.base(), cfg, noise),
        Scheme::TransformedEm => em_transformed(model, cfg, noise),
    }
}

/// Number of uniform steps of the reference resolution `h_ref = T·2⁻¹⁴`.
pub fn reference_steps() -> usize {
    1 << REFERENCE_LEVEL
}

/// The transformed scheme at `reference_steps`, which must equal the plan's base resolution.
pub fn reference_path<S: Scalar>(
    model: &TransformedModel<S>,
    noise: &NoisePlan<S>,
    reference_steps: usize,
) -> Result<Path<S>, SolverError> {
    if noise.base_steps() != reference_steps {
        return Err(SolverError::Driver(DriverError::GridNotNested {
            steps: reference_steps,
            base: noise.base_steps(),
        }));
    }
    em_transformed(model, &SchemeConfig::new(reference_steps, Scheme::TransformedEm)?, noise)
}

/// Generates the noise of path `index` for a model at a base resolution.
pub fn noise_for<S: Scalar>(
    model: &Model<S>,
    seed: u64,
    index: u64,
    base_steps: usize,
) -> Result<NoisePlan<S>, SolverError> {
    Ok(NoisePlan::generate(
        NoiseId { seed, path_index: index },
        model.horizon(),
        base_steps,
        model.dimension(),
        model.intensity(),
        model.marks(),
    )?)
}

/// `paths` independent paths `0..paths`, simulated in parallel on the current
/// rayon pool and returned in index order.
pub fn simulate_many<S: Scalar>(
    model: &TransformedModel<S>,
    cfg: &SchemeConfig,
    seed: u64,
    paths: usize,
) -> Result<Vec<Path<S>>, SolverError> {
    (0..paths as u64)
        .into_par_iter()
        .map(|i| simulate(model, cfg, &noise_for(model.base(), seed, i, cfg.steps)?))
        .collect()
}

/// Monte Carlo mean with a 95% normal confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN, ci_lo: f64::NAN, ci_hi: f64::NAN, samples: 0 };
        }
        let mean = pairwise_sum(values) / n as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if n > 1 { pairwise_sum(&sq) / (n - 1) as f64 } else { 0.0 };
        let std_error = (var / n as f64).sqrt();
        let half = 1.959963984540054 * std_error;
        Self { mean, std_error, ci_lo: mean - half, ci_hi: mean + half, samples: n }
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }
}

/// `E‖X_T^h − X_T^ref‖` and `E sup_{t ∈ coarse grid} ‖X_t^h − X_t^ref‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongError {
    pub terminal: Estimate,
    pub sup: Estimate,
}

/// Terminal and sup-over-grid distances of one path pair. Every coarse grid
/// time must also be a reference grid time.
pub fn pathwise_error<S: Scalar>(coarse: &Path<S>, reference: &Path<S>) -> Result<(f64, f64), SolverError> {
    if coarse.noise != reference.noise {
        return Err(SolverError::NoiseMismatch(format!("{:?} vs {:?}", coarse.noise, reference.noise)));
    }
    if coarse.dim != reference.dim {
        return Err(SolverError::NoiseMismatch("dimension differs".into()));
    }
    let terminal = linalg::distance(coarse.terminal(), reference.terminal()).as_f64();
    let mut sup = 0.0f64;
    let mut j = 0;
    for i in 0..coarse.len() {
        let t = coarse.times[i];
        while j < reference.len() && reference.times[j] < t {
            j += 1;
        }
        if j == reference.len() || reference.times[j] != t {
            return Err(SolverError::NoiseMismatch(format!(
                "coarse time {} missing from the reference grid",
                t.as_f64()
            )));
        }
        sup = sup.max(linalg::distance(coarse.state(i), reference.state(j)).as_f64());
    }
    Ok((terminal, sup))
}

pub fn strong_error<S: Scalar>(coarse: &[Path<S>], reference: &[Path<S>]) -> Result<StrongError, SolverError> {
    if coarse.len() != reference.len() {
        return Err(SolverError::NoiseMismatch(format!(
            "{} coarse paths vs {} reference paths",
            coarse.len(),
            reference.len()
        )));
    }
    let pairs: Vec<(f64, f64)> =
        coarse.iter().zip(reference).map(|(c, r)| pathwise_error(c, r)).collect::<Result<_, _>>()?;
    let (terminal, sup): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(StrongError { terminal: Estimate::from_samples(&terminal), sup: Estimate::from_samples(&sup) })
}

//! Random inputs: Brownian increments and the compound Poisson jump train.
//!
//! Every random quantity of path `i` comes from a ChaCha stream keyed by the
//! master seed and a channel, positioned at stream `i`. A path's noise is
//! therefore a pure function of `(seed, i)`, whatever the scheduling of paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use thiserror::Error;

use crate::coefficients::{JumpCoefficient, MarkLaw};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DriverError {
    #[error("missing pre-jump state for jump {index}")]
    MissingPreJumpState { index: usize },
    #[error("step count {steps} does not divide the base resolution {base}")]
    GridNotNested { steps: usize, base: usize },
    #[error("invalid driver input: {0}")]
    Invalid(String),
}

/// Independent randomness channels of one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    Brownian = 0,
    JumpTimes = 1,
    Marks = 2,
    Sampling = 3,
}

/// The stream for `(seed, channel)` positioned at `index`.
pub fn stream(seed: u64, channel: Channel, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(channel as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Jump times `0 < τ₁ < τ₂ < … <= T` and their marks.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTrain {
    pub times: Vec<f64>,
    pub marks: Vec<f64>,
    pub intensity: f64,
    pub horizon: f64,
}

impl JumpTrain {
    pub fn empty(horizon: f64) -> Self {
        Self { times: Vec::new(), marks: Vec::new(), intensity: 0.0, horizon }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `N_t`
    pub fn count_until(&self, t: f64) -> usize {
        self.times.partition_point(|&tau| tau <= t)
    }
}

/// Exponential(λ) inter-arrivals truncated at `T`, marks iid from `marks`.
/// Arrival times and marks come from separate streams.
pub fn sample_jump_train<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    intensity: f64,
    marks: &MarkLaw,
    horizon: f64,
    times_rng: &mut R1,
    marks_rng: &mut R2,
) -> JumpTrain {
    if intensity <= 0.0 {
        return JumpTrain::empty(horizon);
    }
    let gap = Exp::new(intensity).expect("positive finite intensity");
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(times_rng);
        if t > horizon {
            break;
        }
        // a zero gap would break strict monotonicity
        if times.last().is_some_and(|&prev| t <= prev) {
            continue;
        }
        times.push(t);
    }
    let marks = times.iter().map(|_| marks.sample(marks_rng)).collect();
    JumpTrain { times, marks, intensity, horizon }
}

/// `Σ_{τ_k <= t} ρ(X_{τ_k−}, ξ_k)` given the pre-jump states in jump order.
pub fn jump_integral<S: Scalar>(
    train: &JumpTrain,
    rho: &JumpCoefficient<S>,
    pre_states: &[Vec<S>],
    t: f64,
    dim: usize,
) -> Result<Vec<S>, DriverError> {
    let mut total = vec![S::zero(); dim];
    for k in 0..train.count_until(t) {
        let pre = pre_states.get(k).ok_or(DriverError::MissingPreJumpState { index: k })?;
        for (acc, r) in total.iter_mut().zip(rho.eval(pre, S::lit(train.marks[k]))) {
            *acc += r;
        }
    }
    Ok(total)
}

/// Flat storage of `steps` increments of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments<S> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> Increments<S> {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[S] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

/// Independent `N(0, (t_{i+1} − t_i)·I)` vectors, one per grid interval.
pub fn brownian_increments<S: Scalar, R: Rng + ?Sized>(grid: &[S], dim: usize, rng: &mut R) -> Increments<S> {
    let steps = grid.len().saturating_sub(1);
    let mut data = Vec::with_capacity(steps * dim);
    for w in grid.windows(2) {
        let sd = (w[1] - w[0]).sqrt();
        for _ in 0..dim {
            let z: f64 = StandardNormal.sample(rng);
            data.push(sd * S::lit(z));
        }
    }
    Increments { dim, data }
}

/// Identity of a path's noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseId {
    pub seed: u64,
    pub path_index: u64,
}

/// All randomness of one path at the finest resolution: the uniform grid of
/// `base_steps` steps merged with the jump times.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePlan<S> {
    id: NoiseId,
    base_steps: usize,
    horizon: S,
    grid: Vec<S>,
    increments: Increments<S>,
    train: JumpTrain,
    /// `jump_of[i] = Some(k)` when grid point `i` is the jump time `τ_k`.
    jump_of: Vec<Option<usize>>,
    /// `uniform_index[k]` = position of the uniform point `k·T/base_steps` in `grid`.
    uniform_index: Vec<usize>,
}

impl<S: Scalar> NoisePlan<S> {
    pub fn generate(
        id: NoiseId,
        horizon: S,
        base_steps: usize,
        dim: usize,
        intensity: f64,
        marks: &MarkLaw,
    ) -> Result<Self, DriverError> {
        if base_steps == 0 {
            return Err(DriverError::Invalid("base resolution must have at least one step".into()));
        }
        if !(horizon > S::zero() && horizon.is_finite()) {
            return Err(DriverError::Invalid("horizon must be positive".into()));
        }
        let mut times_rng = stream(id.seed, Channel::JumpTimes, id.path_index);
        let mut marks_rng = stream(id.seed, Channel::Marks, id.path_index);
        let train = sample_jump_train(intensity, marks, horizon.as_f64(), &mut times_rng, &mut marks_rng);

        let n = S::lit(base_steps as f64);
        let mut grid = Vec::with_capacity(base_steps + 1 + train.len());
        let mut jump_of = Vec::with_capacity(grid.capacity());
        let mut uniform_index = Vec::with_capacity(base_steps + 1);
        let mut k = 0;
        for i in 0..=base_steps {
            let t = if i == base_steps { horizon } else { horizon * S::lit(i as f64) / n };
            while k < train.len() && S::lit(train.times[k]) < t {
                let tau = S::lit(train.times[k]);
                if grid.last().is_some_and(|&prev| tau <= prev) {
                    // collapsed onto the previous point in this precision
                    k += 1;
                    continue;
                }
                grid.push(tau);
                jump_of.push(Some(k));
                k += 1;
            }
            let on_jump = k < train.len() && S::lit(train.times[k]) == t;
            uniform_index.push(grid.len());
            grid.push(t);
            jump_of.push(if on_jump { Some(k) } else { None });
            if on_jump {
                k += 1;
            }
        }
        let mut w_rng = stream(id.seed, Channel::Brownian, id.path_index);
        let increments = brownian_increments(&grid, dim, &mut w_rng);
        Ok(Self { id, base_steps, horizon, grid, increments, train, jump_of, uniform_index })
    }

    pub fn id(&self) -> NoiseId {
        self.id
    }

    pub fn base_steps(&self) -> usize {
        self.base_steps
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn dimension(&self) -> usize {
        self.increments.dim
    }

    pub fn grid(&self) -> &[S] {
        &self.grid
    }

    pub fn increments(&self) -> &Increments<S> {
        &self.increments
    }

    pub fn train(&self) -> &JumpTrain {
        &self.train
    }

    /// Grid for `steps` uniform steps plus the jump times, with increments
    /// obtained by summing the finest increments in order.
    pub fn schedule(&self, steps: usize) -> Result<StepSchedule<S>, DriverError> {
        if steps == 0 || !self.base_steps.is_multiple_of(steps) {
            return Err(DriverError::GridNotNested { steps, base: self.base_steps });
        }
        let stride = self.base_steps / steps;
        let dim = self.dimension();
        let mut keep: Vec<usize> = Vec::with_capacity(steps + 1 + self.train.len());
        let mut u = 0;
        for (i, j) in self.jump_of.iter().enumerate() {
            let uniform_here = u < self.uniform_index.len() && self.uniform_index[u] == i;
            if uniform_here {
                u += 1;
            }
            if j.is_some() || (uniform_here && (u - 1) % stride == 0) {
                keep.push(i);
            }
        }
        let times: Vec<S> = keep.iter().map(|&i| self.grid[i]).collect();
        let jumps: Vec<Option<usize>> = keep.iter().map(|&i| self.jump_of[i]).collect();
        let mut data = Vec::with_capacity((keep.len() - 1) * dim);
        for w in keep.windows(2) {
            let mut acc = self.increments.get(w[0]).to_vec();
            for f in w[0] + 1..w[1] {
                for (a, &b) in acc.iter_mut().zip(self.increments.get(f)) {
                    *a += b;
                }
            }
            data.extend_from_slice(&acc);
        }
        Ok(StepSchedule { steps, times, dw: Increments { dim, data }, jumps })
    }
}

/// A concrete time grid with its increments and jump positions.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule<S> {
    pub steps: usize,
    pub times: Vec<S>,
    pub dw: Increments<S>,
    pub jumps: Vec<Option<usize>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(seed: u64, index: u64, steps: usize, intensity: f64) -> NoisePlan<f64> {
        NoisePlan::generate(
            NoiseId { seed, path_index: index },
            1.0,
            steps,
            2,
            intensity,
            &MarkLaw::Dirac { value: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn empty_train_without_intensity() {
        let mut a = stream(1, Channel::JumpTimes, 0);
        let mut b = stream(1, Channel::Marks, 0);
        assert!(sample_jump_train(0.0, &MarkLaw::Dirac { value: 1.0 }, 5.0, &mut a, &mut b).is_empty());
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let x: u64 = stream(7, Channel::Brownian, 3).random();
        assert_eq!(x, stream(7, Channel::Brownian, 3).random::<u64>());
        assert_ne!(x, stream(7, Channel::Brownian, 4).random::<u64>());
        assert_ne!(x, stream(7, Channel::Marks, 3).random::<u64>());
        assert_ne!(x, stream(8, Channel::Brownian, 3).random::<u64>());
    }

    #[test]
    fn additive_marks_integral() {
        let train = JumpTrain { times: vec![0.2, 0.7], marks: vec![0.3, -1.1], intensity: 1.0, horizon: 1.0 };
        let rho = JumpCoefficient::MarkScaled(crate::coefficients::AffineMap::constant(vec![1.0]));
        let pre = vec![vec![0.0], vec![0.0]];
        let total: Vec<f64> = jump_integral(&train, &rho, &pre, 1.0, 1).unwrap();
        assert!((total[0] - (-0.8)).abs() < 1e-15);
        assert_eq!(jump_integral(&train, &rho, &pre, 0.5, 1).unwrap()[0], 0.3);
        assert!(jump_integral(&train, &rho, &pre[..1], 1.0, 1).is_err());
        let none = JumpTrain::empty(1.0);
        assert_eq!(jump_integral(&none, &rho, &[], 1.0, 1).unwrap(), vec![0.0]);
    }

    #[test]
    fn poisson_form_hand_trace() {
        // ρ(x, y) = 1 − x with unit marks, states before each of three jumps
        let train = JumpTrain { times: vec![0.1, 0.4, 0.9], marks: vec![1.0; 3], intensity: 1.0, horizon: 1.0 };
        let f =
            crate::coefficients::AffineMap::new(crate::linalg::Matrix::from_rows(&[vec![-1.0]]).unwrap(), vec![1.0])
                .unwrap();
        let pre = vec![vec![0.0], vec![0.5], vec![2.0]];
        let total = jump_integral(&train, &JumpCoefficient::StateOnly(f), &pre, 1.0, 1).unwrap();
        assert_eq!(total, vec![1.0 + 0.5 - 1.0]);
    }

    #[test]
    fn plan_is_deterministic() {
        assert_eq!(plan(5, 2, 64, 3.0), plan(5, 2, 64, 3.0));
        assert_ne!(plan(5, 2, 64, 3.0).increments(), plan(5, 3, 64, 3.0).increments());
    }

    #[test]
    fn plan_grid_contains_jumps() {
        let p = plan(9, 0, 32, 5.0);
        assert!(p.grid().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p.grid()[0], 0.0);
        assert_eq!(*p.grid().last().unwrap(), 1.0);
        for &tau in &p.train().times {
            assert!(p.grid().contains(&tau));
        }
        assert_eq!(p.grid().len(), 33 + p.train().len());
    }

    #[test]
    fn coarse_schedule_sums_fine_increments() {
        let p = plan(11, 1, 64, 4.0);
        let full = p.schedule(64).unwrap();
        assert_eq!(full.times, p.grid());
        assert_eq!(&full.dw, p.increments());
        let coarse = p.schedule(8).unwrap();
        assert_eq!(coarse.times.len(), 9 + p.train().len());
        for (i, w) in coarse.times.windows(2).enumerate() {
            let lo = p.grid().iter().position(|&t| t == w[0]).unwrap();
            let hi = p.grid().iter().position(|&t| t == w[1]).unwrap();
            let mut acc = p.increments().get(lo).to_vec();
            for f in lo + 1..hi {
                for (a, b) in acc.iter_mut().zip(p.increments().get(f)) {
                    *a += b;
                }
            }
            assert_eq!(coarse.dw.get(i), acc.as_slice());
        }
        assert!(p.schedule(5).is_err());
        assert!(p.schedule(0).is_err());
    }

    #[test]
    fn zero_length_grid_has_no_increments() {
        let mut rng = stream(0, Channel::Brownian, 0);
        assert!(brownian_increments::<f64, _>(&[], 3, &mut rng).is_empty());
        assert!(brownian_increments::<f64, _>(&[0.0], 3, &mut rng).is_empty());
    }
}

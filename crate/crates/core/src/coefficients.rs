//! Coefficient bundles: the model `(μ, σ, ρ, λ, ψ, x₀, T)` and the transformed
//! bundle `(μ̃, σ̃, ρ̃)` of `Z = G(X)`.
//!
//! Coefficients are declarative presets (affine pieces, constant or affine
//! diffusion, the two standard jump forms) so that Lipschitz and growth
//! constants are available in closed form.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::geometry::{Hypersurface, Window};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;
use crate::transform::{PlanarFrame, Transform, TransformError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid mark law: {0}")]
    InvalidMarkLaw(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("intrinsic metric unsupported for this surface (only half-spaces are convex)")]
    IntrinsicMetricUnsupported,
}

/// `x ↦ A x + b`
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap<S> {
    matrix: Matrix<S>,
    offset: Vec<S>,
}

impl<S: Scalar> AffineMap<S> {
    pub fn new(matrix: Matrix<S>, offset: Vec<S>) -> Result<Self, ModelError> {
        if !matrix.is_square() || matrix.rows() != offset.len() {
            return Err(ModelError::DimensionMismatch {
                what: "affine map",
                expected: matrix.rows(),
                got: offset.len(),
            });
        }
        Ok(Self { matrix, offset })
    }

    pub fn constant(offset: Vec<S>) -> Self {
        Self { matrix: Matrix::zeros(offset.len(), offset.len()), offset }
    }

    pub fn dimension(&self) -> usize {
        self.offset.len()
    }

    pub fn matrix(&self) -> &Matrix<S> {
        &self.matrix
    }

    pub fn offset(&self) -> &[S] {
        &self.offset
    }

    pub fn eval(&self, x: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.offset.len()];
        self.eval_into(x, &mut out);
        out
    }

    #[inline]
    pub fn eval_into(&self, x: &[S], out: &mut [S]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = linalg::dot(self.matrix.row(i), x) + self.offset[i];
        }
    }

    pub fn lipschitz_constant(&self) -> S {
        self.matrix.operator_norm()
    }
}

/// `μ(x) = μ₊(x)` if `side(x) >= 0`, else `μ₋(x)`.
#[derive(Debug, Clone)]
pub struct PiecewiseDrift<S: Scalar> {
    surface: Hypersurface<S>,
    plus: AffineMap<S>,
    minus: AffineMap<S>,
}

impl<S: Scalar> PiecewiseDrift<S> {
    pub fn new(surface: Hypersurface<S>, plus: AffineMap<S>, minus: AffineMap<S>) -> Result<Self, ModelError> {
        let d = surface.dimension();
        for (piece, what) in [(&plus, "drift piece +"), (&minus, "drift piece -")] {
            if piece.dimension() != d {
                return Err(ModelError::DimensionMismatch { what, expected: d, got: piece.dimension() });
            }
        }
        Ok(Self { surface, plus, minus })
    }

    /// Drift without a discontinuity: both pieces equal.
    pub fn continuous(surface: Hypersurface<S>, map: AffineMap<S>) -> Result<Self, ModelError> {
        Self::new(surface, map.clone(), map)
    }

    pub fn surface(&self) -> &Hypersurface<S> {
        &self.surface
    }

    pub fn plus(&self) -> &AffineMap<S> {
        &self.plus
    }

    pub fn minus(&self) -> &AffineMap<S> {
        &self.minus
    }

    pub fn dimension(&self) -> usize {
        self.plus.dimension()
    }

    pub fn is_continuous(&self) -> bool {
        self.plus == self.minus
    }

    pub fn eval(&self, x: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); x.len()];
        self.eval_into(x, &mut out);
        out
    }

    #[inline]
    pub fn eval_into(&self, x: &[S], out: &mut [S]) {
        if self.surface.side(x) >= S::zero() {
            self.plus.eval_into(x, out)
        } else {
            self.minus.eval_into(x, out)
        }
    }

    /// `μ₋(ζ) − μ₊(ζ)`, the one-sided limit difference across the surface.
    pub fn jump_at(&self, zeta: &[S]) -> Vec<S> {
        linalg::sub(&self.minus.eval(zeta), &self.plus.eval(zeta))
    }

    /// Derivative of `jump_at`.
    pub fn jump_derivative(&self) -> Matrix<S> {
        self.minus.matrix.sub(&self.plus.matrix)
    }

    /// Closed-form piecewise Lipschitz constant `max(‖A₊‖₂, ‖A₋‖₂)`.
    pub fn lipschitz_constant(&self) -> S {
        self.plus.lipschitz_constant().max(self.minus.lipschitz_constant())
    }
}

/// Sampled piecewise Lipschitz constant: the largest ratio `‖μ(x) − μ(y)‖ / ‖x − y‖`
/// over same-side pairs drawn from `window`. A lower bound on the true constant.
///
/// Same-side pairs are joined by a segment inside their half-space, so the
/// intrinsic metric equals the Euclidean one; for curved surfaces that
/// identity fails and the estimate is refused.
pub fn estimate_pw_lipschitz<S: Scalar, R: Rng + ?Sized>(
    drift: &PiecewiseDrift<S>,
    window: &Window<S>,
    samples: usize,
    rng: &mut R,
) -> Result<S, ModelError> {
    if !drift.surface.is_hyperplane() {
        return Err(ModelError::IntrinsicMetricUnsupported);
    }
    let mut best = S::zero();
    let mut taken = 0;
    let mut attempts = 0;
    while taken < samples && attempts < samples * 20 {
        attempts += 1;
        let x = window.sample(rng);
        let y = window.sample(rng);
        let sx = drift.surface.side(&x);
        let sy = drift.surface.side(&y);
        if sx.is_zero() || sy.is_zero() || (sx > S::zero()) != (sy > S::zero()) {
            continue;
        }
        let dist = linalg::distance(&x, &y);
        if dist.is_zero() {
            continue;
        }
        taken += 1;
        let ratio = linalg::distance(&drift.eval(&x), &drift.eval(&y)) / dist;
        best = best.max(ratio);
    }
    Ok(best)
}

/// Diffusion coefficient: constant, or affine `σ(x) = base + Σ_k x_k·slopes[k]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion<S> {
    Constant(Matrix<S>),
    Affine { base: Matrix<S>, slopes: Vec<Matrix<S>> },
}

impl<S: Scalar> Diffusion<S> {
    pub fn affine(base: Matrix<S>, slopes: Vec<Matrix<S>>) -> Result<Self, ModelError> {
        let d = base.rows();
        if !base.is_square() || slopes.len() != d || slopes.iter().any(|m| m.rows() != d || m.cols() != d) {
            return Err(ModelError::DimensionMismatch { what: "affine diffusion", expected: d, got: slopes.len() });
        }
        Ok(Self::Affine { base, slopes })
    }

    /// `s·I`
    pub fn scalar(dim: usize, s: S) -> Self {
        Self::Constant(Matrix::identity(dim).scaled(s))
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Constant(m) => m.rows(),
            Self::Affine { base, .. } => base.rows(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }

    pub fn eval(&self, x: &[S]) -> Matrix<S> {
        match self {
            Self::Constant(m) => m.clone(),
            Self::Affine { base, slopes } => {
                let mut m = base.clone();
                for (k, slope) in slopes.iter().enumerate() {
                    m.add_scaled_assign(slope, x[k]);
                }
                m
            }
        }
    }

    /// `out = σ(x)·dw` without materializing `σ(x)`.
    #[inline]
    pub fn apply_into(&self, x: &[S], dw: &[S], out: &mut [S]) {
        match self {
            Self::Constant(m) => m.mul_vec_into(dw, out),
            Self::Affine { base, slopes } => {
                base.mul_vec_into(dw, out);
                for (k, slope) in slopes.iter().enumerate() {
                    let xk = x[k];
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += xk * linalg::dot(slope.row(i), dw);
                    }
                }
            }
        }
    }

    /// `∂σ/∂x_k`, `None` when constant.
    pub fn slope(&self, k: usize) -> Option<&Matrix<S>> {
        match self {
            Self::Constant(_) => None,
            Self::Affine { slopes, .. } => slopes.get(k),
        }
    }

    /// Lipschitz constant in Frobenius norm: `sqrt(Σ_k ‖slopes[k]‖²_F)`.
    pub fn lipschitz_constant(&self) -> S {
        match self {
            Self::Constant(_) => S::zero(),
            Self::Affine { slopes, .. } => slopes
                .iter()
                .map(|m| {
                    let f = m.frobenius_norm();
                    f * f
                })
                .sum::<S>()
                .sqrt(),
        }
    }

    /// `‖σ(ζ)ᵀ n‖`
    pub fn transversality(&self, zeta: &[S], normal: &[S]) -> S {
        linalg::norm(&self.eval(zeta).tr_mul_vec(normal))
    }
}

/// Jump coefficient `ρ(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpCoefficient<S> {
    None,
    /// `ρ(x, y) = f(x)`: Poisson-driven jumps.
    StateOnly(AffineMap<S>),
    /// `ρ(x, y) = y·f(x)`: compound-Poisson jumps.
    MarkScaled(AffineMap<S>),
}

impl<S: Scalar> JumpCoefficient<S> {
    pub fn is_none(&self) -> bool {
        matches!(self, Self::None)
    }

    pub fn eval(&self, x: &[S], y: S) -> Vec<S> {
        let mut out = vec![S::zero(); x.len()];
        self.eval_into(x, y, &mut out);
        out
    }

    #[inline]
    pub fn eval_into(&self, x: &[S], y: S, out: &mut [S]) {
        match self {
            Self::None => out.iter_mut().for_each(|o| *o = S::zero()),
            Self::StateOnly(f) => f.eval_into(x, out),
            Self::MarkScaled(f) => {
                f.eval_into(x, out);
                out.iter_mut().for_each(|o| *o *= y);
            }
        }
    }

    /// Closed-form `c_ρ` such that `∫‖ρ(x,y)‖²ψ(dy) <= c_ρ(1 + ‖x‖²)` and
    /// `∫‖ρ(x,y) − ρ(z,y)‖²ψ(dy) <= c_ρ‖x − z‖²`, given the mark second moment.
    pub fn growth_constant(&self, mark_second_moment: f64) -> f64 {
        let (f, weight) = match self {
            Self::None => return 0.0,
            Self::StateOnly(f) => (f, 1.0),
            Self::MarkScaled(f) => (f, mark_second_moment),
        };
        let b = f.matrix.operator_norm().as_f64();
        let e = linalg::norm(&f.offset).as_f64();
        // ‖Bx + e‖² <= 2‖B‖²‖x‖² + 2‖e‖²; the Lipschitz form needs only ‖B‖².
        2.0 * weight * (b * b).max(e * e)
    }
}

/// Distribution `ψ` of the jump marks. `P(ξ = 0) = 0` and a finite second moment
/// are enforced by [`MarkLaw::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum MarkLaw {
    Dirac { value: f64 },
    Normal { mean: f64, std: f64 },
    Exponential { rate: f64 },
    TwoPoint { v1: f64, p: f64, v2: f64 },
}

impl MarkLaw {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidMarkLaw(m.to_string()));
        match *self {
            Self::Dirac { value } if !(value.is_finite() && value != 0.0) => {
                bad("dirac mass must be finite and non-zero")
            }
            Self::Normal { mean, std } if !(mean.is_finite() && std.is_finite() && std > 0.0) => {
                bad("normal law needs a finite mean and positive std")
            }
            Self::Exponential { rate } if !(rate.is_finite() && rate > 0.0) => bad("exponential rate must be positive"),
            Self::TwoPoint { v1, p, v2 } => {
                if !(v1.is_finite() && v2.is_finite() && v1 != 0.0 && v2 != 0.0) {
                    bad("two-point values must be finite and non-zero")
                } else if !(0.0..=1.0).contains(&p) {
                    bad("two-point probability must lie in [0, 1]")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Dirac { value } => value,
            Self::Normal { mean, .. } => mean,
            Self::Exponential { rate } => 1.0 / rate,
            Self::TwoPoint { v1, p, v2 } => p * v1 + (1.0 - p) * v2,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::Dirac { value } => value * value,
            Self::Normal { mean, std } => mean * mean + std * std,
            Self::Exponential { rate } => 2.0 / (rate * rate),
            Self::TwoPoint { v1, p, v2 } => p * v1 * v1 + (1.0 - p) * v2 * v2,
        }
    }

    /// One mark. Exact zeros from the continuous laws are redrawn.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Dirac { value } => value,
            Self::Normal { mean, std } => {
                let law = Normal::new(mean, std).expect("validated normal law");
                loop {
                    let v = law.sample(rng);
                    if v != 0.0 {
                        return v;
                    }
                }
            }
            Self::Exponential { rate } => {
                let law = Exp::new(rate).expect("validated exponential law");
                loop {
                    let v = law.sample(rng);
                    if v != 0.0 {
                        return v;
                    }
                }
            }
            Self::TwoPoint { v1, p, v2 } => {
                if rng.random::<f64>() < p {
                    v1
                } else {
                    v2
                }
            }
        }
    }
}

/// The SDE `dX = μ(X₋)dt + σ(X₋)dW + ∫ρ(X₋, y)ν(dy, dt)`, `X₀ = x₀` on `[0, T]`.
#[derive(Debug, Clone)]
pub struct Model<S: Scalar> {
    drift: PiecewiseDrift<S>,
    diffusion: Diffusion<S>,
    jump: JumpCoefficient<S>,
    intensity: f64,
    marks: MarkLaw,
    x0: Vec<S>,
    horizon: S,
}

impl<S: Scalar> Model<S> {
    pub fn new(
        drift: PiecewiseDrift<S>,
        diffusion: Diffusion<S>,
        jump: JumpCoefficient<S>,
        intensity: f64,
        marks: MarkLaw,
        x0: Vec<S>,
        horizon: S,
    ) -> Result<Self, ModelError> {
        let model = Self { drift, diffusion, jump, intensity, marks, x0, horizon };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let d = self.drift.dimension();
        let check = |what, got| {
            if got == d {
                Ok(())
            } else {
                Err(ModelError::DimensionMismatch { what, expected: d, got })
            }
        };
        check("diffusion", self.diffusion.dimension())?;
        check("initial state", self.x0.len())?;
        match &self.jump {
            JumpCoefficient::StateOnly(f) | JumpCoefficient::MarkScaled(f) => check("jump coefficient", f.dimension())?,
            JumpCoefficient::None => {}
        }
        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            return Err(ModelError::Invalid("jump intensity must be finite and non-negative".into()));
        }
        if !(self.horizon > S::zero() && self.horizon.is_finite()) {
            return Err(ModelError::Invalid("horizon T must be positive".into()));
        }
        if !linalg::is_finite(&self.x0) {
            return Err(ModelError::Invalid("initial state must be finite".into()));
        }
        self.marks.validate()
    }

    pub fn dimension(&self) -> usize {
        self.drift.dimension()
    }

    pub fn drift(&self) -> &PiecewiseDrift<S> {
        &self.drift
    }

    pub fn diffusion(&self) -> &Diffusion<S> {
        &self.diffusion
    }

    pub fn jump(&self) -> &JumpCoefficient<S> {
        &self.jump
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn marks(&self) -> &MarkLaw {
        &self.marks
    }

    pub fn x0(&self) -> &[S] {
        &self.x0
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn surface(&self) -> &Hypersurface<S> {
        self.drift.surface()
    }

    pub fn with_diffusion(mut self, diffusion: Diffusion<S>) -> Result<Self, ModelError> {
        self.diffusion = diffusion;
        self.validate()?;
        Ok(self)
    }

    pub fn with_drift(mut self, drift: PiecewiseDrift<S>) -> Result<Self, ModelError> {
        self.drift = drift;
        self.validate()?;
        Ok(self)
    }

    pub fn with_jumps(mut self, jump: JumpCoefficient<S>, intensity: f64, marks: MarkLaw) -> Result<Self, ModelError> {
        self.jump = jump;
        self.intensity = intensity;
        self.marks = marks;
        self.validate()?;
        Ok(self)
    }

    pub fn with_x0(mut self, x0: Vec<S>) -> Result<Self, ModelError> {
        self.x0 = x0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: S) -> Result<Self, ModelError> {
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    /// Closed-form `c_ρ` of the jump coefficient under the mark law.
    pub fn jump_growth_constant(&self) -> f64 {
        self.jump.growth_constant(self.marks.second_moment())
    }
}

/// Coefficients of the transformed equation, evaluated at `z` through `x = G⁻¹(z)`.
#[derive(Debug, Clone)]
pub struct LocalCoefficients<S> {
    pub x: Vec<S>,
    pub mu: Vec<S>,
    pub sigma: Matrix<S>,
}

/// `(μ̃, σ̃, ρ̃)`:
///
/// ```text
/// μ̃(z)    = G'(x) μ(x) + ½ tr[σ(x)ᵀ G''(x) σ(x)]
/// σ̃(z)    = G'(x) σ(x)
/// ρ̃(z, y) = G(x + ρ(x, y)) − z              with x = G⁻¹(z)
/// ```
#[derive(Debug, Clone)]
pub struct TransformedModel<S: Scalar> {
    base: Model<S>,
    transform: Transform<S>,
}

impl<S: Scalar> TransformedModel<S> {
    pub fn new(base: Model<S>, transform: Transform<S>) -> Result<Self, ModelError> {
        if transform.dimension() != base.dimension() {
            return Err(ModelError::DimensionMismatch {
                what: "transform",
                expected: base.dimension(),
                got: transform.dimension(),
            });
        }
        Ok(Self { base, transform })
    }

    pub fn base(&self) -> &Model<S> {
        &self.base
    }

    pub fn transform(&self) -> &Transform<S> {
        &self.transform
    }

    /// μ̃ and σ̃ at a point whose preimage `x = G⁻¹(z)` is already known.
    pub fn local_at_preimage(&self, x: Vec<S>) -> Result<LocalCoefficients<S>, TransformError> {
        let mu = self.base.drift.eval(&x);
        let sigma = self.base.diffusion.eval(&x);
        match self.transform.planar_frame(&x) {
            PlanarFrame::Inactive => return Ok(LocalCoefficients { x, mu, sigma }),
            PlanarFrame::Active { slope, curvature, alpha, normal } => {
                // μ̃ = μ + ψ'(n·μ)α + ½ψ''‖σᵀn‖²α,  σ̃ = σ + ψ' α (nᵀσ)
                let v = sigma.tr_mul_vec(normal);
                let weight = slope * linalg::dot(normal, &mu) + S::lit(0.5) * curvature * linalg::dot(&v, &v);
                let mu_t = mu.iter().zip(alpha).map(|(&m, &a)| m + weight * a).collect();
                let mut sigma_t = sigma;
                sigma_t.add_scaled_assign(&Matrix::outer(alpha, &v), slope);
                return Ok(LocalCoefficients { x, mu: mu_t, sigma: sigma_t });
            }
            PlanarFrame::General => {}
        }
        if !self.transform.is_active_at(&x)? {
            return Ok(LocalCoefficients { x, mu, sigma });
        }
        let jac = self.transform.jacobian(&x)?;
        let hess = self.transform.hessian(&x)?;
        let mut mu_t = jac.mul_vec(&mu);
        let sigma_t_tr = sigma.transpose();
        for (i, h) in hess.iter().enumerate() {
            let corr = sigma_t_tr.mul_mat(h).mul_mat(&sigma).trace();
            mu_t[i] += S::lit(0.5) * corr;
        }
        let sigma_t = jac.mul_mat(&sigma);
        Ok(LocalCoefficients { x, mu: mu_t, sigma: sigma_t })
    }

    pub fn local(&self, z: &[S]) -> Result<LocalCoefficients<S>, TransformError> {
        let x = self.transform.inverse(z)?;
        self.local_at_preimage(x)
    }

    pub fn mu_tilde(&self, z: &[S]) -> Result<Vec<S>, TransformError> {
        Ok(self.local(z)?.mu)
    }

    pub fn sigma_tilde(&self, z: &[S]) -> Result<Matrix<S>, TransformError> {
        Ok(self.local(z)?.sigma)
    }

    pub fn rho_tilde(&self, z: &[S], y: S) -> Result<Vec<S>, TransformError> {
        let x = self.transform.inverse(z)?;
        self.rho_tilde_at_preimage(&x, z, y)
    }

    /// ρ̃ when `x = G⁻¹(z)` is already known.
    pub fn rho_tilde_at_preimage(&self, x: &[S], z: &[S], y: S) -> Result<Vec<S>, TransformError> {
        let rho = self.base.jump.eval(x, y);
        if self.transform.is_identity() {
            return Ok(rho);
        }
        let landed = self.transform.forward(&linalg::add(x, &rho))?;
        Ok(linalg::sub(&landed, z))
    }
}

//! The transform `G(x) = x + φ(x)·α(p(x))` that removes the drift
//! discontinuity, its first two derivatives, and its inverse.
//!
//! Inside the tube, with `s = n(p(x))·(x − p(x))` the signed distance to the
//! surface and `u = |s|/c`,
//!
//! ```text
//! φ(x) = s·|s|·bump(u),     bump(u) = (1 + u)⁴(1 − u)⁴ for |u| <= 1, else 0
//! α(ζ) = (μ₋(ζ) − μ₊(ζ)) / (2‖σ(ζ)ᵀn(ζ)‖²)
//! ```
//!
//! `G` is the identity wherever `|s| >= c`. Invertibility is certified by
//! sampling the contraction `κ = sup ‖∇(φ·α∘p)‖` over the tube; the inverse is
//! the fixed point of `x ← z − φ(x)·α(p(x))`.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::coefficients::{Diffusion, Model, PiecewiseDrift};
use crate::geometry::{Foot, GeometryError, Hypersurface, Tube, Window};
use crate::linalg::{self, Matrix};
use crate::scalar::{side_sign, Scalar};

/// Residual tolerance of the inverse fixed-point iteration.
pub const TOL_INV: f64 = 1e-12;
/// Iteration cap of the inverse.
pub const MAX_INV_ITERS: usize = 100;
/// Central finite-difference step.
pub const H_FD: f64 = 1e-5;
/// Cauchy tolerance for the Richardson-accelerated limit defining α.
pub const TOL_ALPHA: f64 = 1e-8;
/// Smallest admissible `‖σ(ζ)ᵀn(ζ)‖` before α is declared undefined.
pub const MIN_TRANSVERSALITY: f64 = 1e-10;
/// Default contraction target.
pub const DEFAULT_KAPPA_MAX: f64 = 0.5;
/// Halvings of `c` attempted by [`Transform::auto`].
pub const MAX_HALVINGS: usize = 40;

const MAX_RICHARDSON_LEVELS: usize = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("non-parallelity violation at {zeta:?}: ‖σᵀn‖ = {value:e}")]
    NonParallelity { zeta: Vec<f64>, value: f64 },
    #[error("alpha not well defined at {zeta:?}: one-sided quotients did not settle (spread {spread:e})")]
    AlphaNotWellDefined { zeta: Vec<f64>, spread: f64 },
    #[error("invalid transform parameters: {0}")]
    InvalidParams(String),
    #[error("invertibility not certified: sampled contraction {kappa} exceeds {kappa_max}")]
    NotCertified { kappa: f64, kappa_max: f64 },
    #[error(
        "inverse did not converge in {iterations} iterations (residual {residual:e}, sampled contraction {kappa})"
    )]
    InverseDidNotConverge { iterations: usize, residual: f64, kappa: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T, E = TransformError> = std::result::Result<T, E>;

fn to_f64s<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// `(1 + u)⁴(1 − u)⁴` on `[-1, 1]`, zero outside; C³ at `|u| = 1`.
#[inline]
pub fn bump<S: Scalar>(u: S) -> S {
    if u.abs() > S::one() {
        return S::zero();
    }
    let w = (S::one() + u) * (S::one() - u);
    let w2 = w * w;
    w2 * w2
}

#[inline]
pub fn bump_derivative<S: Scalar>(u: S) -> S {
    if u.abs() > S::one() {
        return S::zero();
    }
    let w = S::one() - u * u;
    S::lit(-8.0) * u * w * w * w
}

#[inline]
pub fn bump_second_derivative<S: Scalar>(u: S) -> S {
    if u.abs() > S::one() {
        return S::zero();
    }
    let w = S::one() - u * u;
    S::lit(-8.0) * w * w * w + S::lit(48.0) * u * u * w * w
}

/// Radial profile `ψ(s) = s|s|·bump(|s|/c)` and its first two derivatives in `s`.
/// At `s = 0` the second derivative takes the `+n` value `+2`.
#[derive(Debug, Clone, Copy)]
struct Profile<S> {
    value: S,
    slope: S,
    curvature: S,
}

#[inline]
fn profile<S: Scalar>(s: S, c: S) -> Profile<S> {
    let a = s.abs();
    let u = a / c;
    let b = bump(u);
    let b1 = bump_derivative(u);
    let b2 = bump_second_derivative(u);
    Profile {
        value: s * a * b,
        slope: a * (S::lit(2.0) * b + u * b1),
        curvature: side_sign(s) * (S::lit(2.0) * b + S::lit(4.0) * u * b1 + u * u * b2),
    }
}

/// Local data of `G` for a hyperplane with constant α: there
/// `G' = I + ψ'(s)·α nᵀ` and `∇²G_i = α_i ψ''(s)·n nᵀ`.
pub(crate) enum PlanarFrame<'a, S> {
    General,
    Inactive,
    Active { slope: S, curvature: S, alpha: &'a [S], normal: &'a [S] },
}

/// `c`, `ε₀`, and the contraction target `κ_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams<S> {
    c: S,
    epsilon0: S,
    kappa_max: S,
}

impl<S: Scalar> TransformParams<S> {
    pub fn new(c: S, epsilon0: S, kappa_max: S) -> Result<Self> {
        if !(epsilon0 > S::zero() && epsilon0.is_finite()) {
            return Err(TransformError::InvalidParams("epsilon0 must be positive".into()));
        }
        if !(c > S::zero() && c <= epsilon0) {
            return Err(TransformError::InvalidParams("c must satisfy 0 < c <= epsilon0".into()));
        }
        if !(kappa_max > S::zero() && kappa_max < S::one()) {
            return Err(TransformError::InvalidParams("kappa_max must lie in (0, 1)".into()));
        }
        Ok(Self { c, epsilon0, kappa_max })
    }

    pub fn c(&self) -> S {
        self.c
    }

    pub fn epsilon0(&self) -> S {
        self.epsilon0
    }

    pub fn kappa_max(&self) -> S {
        self.kappa_max
    }
}

#[derive(Debug, Clone)]
enum AlphaSource<S: Scalar> {
    Zero,
    Constant(Vec<S>),
    Model { drift: PiecewiseDrift<S>, diffusion: Diffusion<S> },
}

/// `α` on the surface, extended off it as `α(p(x))`.
#[derive(Debug, Clone)]
pub struct AlphaField<S: Scalar> {
    dim: usize,
    source: AlphaSource<S>,
    bound_estimate: S,
}

impl<S: Scalar> AlphaField<S> {
    pub fn zero(dim: usize) -> Self {
        Self { dim, source: AlphaSource::Zero, bound_estimate: S::zero() }
    }

    pub fn constant(value: Vec<S>) -> Self {
        let bound_estimate = linalg::norm(&value);
        if value.iter().all(|v| v.is_zero()) {
            return Self::zero(value.len());
        }
        Self { dim: value.len(), source: AlphaSource::Constant(value), bound_estimate }
    }

    /// α of a model, in closed form from the two affine drift pieces.
    ///
    /// Reduces to a stored constant when the drift jump and the diffusion are
    /// constant along a hyperplane. The bound estimate is the largest `‖α‖` seen
    /// on `samples` surface points in `window`.
    pub fn from_model<R: Rng + ?Sized>(
        model: &Model<S>,
        window: &Window<S>,
        samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let drift = model.drift();
        let dim = model.dimension();
        if drift.is_continuous() {
            return Ok(Self::zero(dim));
        }
        let surface = drift.surface();
        if let Hypersurface::AffineHyperplane(h) = surface {
            if drift.jump_derivative().is_zero() && model.diffusion().is_constant() {
                let zeta = linalg::scale(h.normal(), h.offset());
                return Ok(Self::constant(alpha_at(model, surface, &zeta)?));
            }
        }
        let mut field = Self {
            dim,
            source: AlphaSource::Model { drift: drift.clone(), diffusion: model.diffusion().clone() },
            bound_estimate: S::zero(),
        };
        let mut bound = S::zero();
        for zeta in surface.sample_surface(window, samples, rng) {
            let n = surface.unit_normal(&zeta)?;
            bound = bound.max(linalg::norm(&field.at(&zeta, &n)?));
        }
        field.bound_estimate = bound;
        Ok(field)
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.source, AlphaSource::Zero)
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self.source, AlphaSource::Model { .. })
    }

    /// Sampled `sup ‖α‖`.
    pub fn bound_estimate(&self) -> S {
        self.bound_estimate
    }

    /// α at a surface point with the given unit normal.
    pub fn at(&self, zeta: &[S], normal: &[S]) -> Result<Vec<S>> {
        Ok(self.at_cow(zeta, normal)?.into_owned())
    }

    fn at_cow(&self, zeta: &[S], normal: &[S]) -> Result<Cow<'_, [S]>> {
        match &self.source {
            AlphaSource::Zero => Ok(Cow::Owned(vec![S::zero(); self.dim])),
            AlphaSource::Constant(v) => Ok(Cow::Borrowed(v)),
            AlphaSource::Model { drift, diffusion } => {
                let v = diffusion.eval(zeta).tr_mul_vec(normal);
                let q = linalg::dot(&v, &v);
                check_transversality(zeta, q)?;
                let jump = drift.jump_at(zeta);
                Ok(Cow::Owned(linalg::scale(&jump, S::one() / (S::lit(2.0) * q))))
            }
        }
    }

    /// Ambient derivative of `y ↦ α(y)` at `zeta`, where the normal is extended
    /// as `∇g/‖∇g‖`. Only its action on tangent vectors enters `D(α∘p)`.
    fn derivative(&self, surface: &Hypersurface<S>, zeta: &[S], normal: &[S]) -> Result<Matrix<S>> {
        let d = self.dim;
        let AlphaSource::Model { drift, diffusion } = &self.source else {
            return Ok(Matrix::zeros(d, d));
        };
        let sigma = diffusion.eval(zeta);
        let v = sigma.tr_mul_vec(normal);
        let q = linalg::dot(&v, &v);
        check_transversality(zeta, q)?;
        let dn = surface.normal_derivative(zeta)?;
        let sigma_tr = sigma.transpose();
        // ∂q/∂ζ_k = 2 v·(slope_kᵀ n + σᵀ ∂n/∂ζ_k)
        let mut grad_q = vec![S::zero(); d];
        for (k, gq) in grad_q.iter_mut().enumerate() {
            let mut dv = sigma_tr.mul_vec(&dn.column(k));
            if let Some(slope) = diffusion.slope(k) {
                dv = linalg::add(&dv, &slope.tr_mul_vec(normal));
            }
            *gq = S::lit(2.0) * linalg::dot(&v, &dv);
        }
        let jump = drift.jump_at(zeta);
        let djump = drift.jump_derivative();
        let two_q = S::lit(2.0) * q;
        let two_q2 = two_q * q;
        Ok(Matrix::from_fn(d, d, |i, k| djump[(i, k)] / two_q - jump[i] * grad_q[k] / two_q2))
    }
}

fn check_transversality<S: Scalar>(zeta: &[S], q: S) -> Result<()> {
    let min = S::tolerance(MIN_TRANSVERSALITY);
    if !(q >= min * min) {
        return Err(TransformError::NonParallelity { zeta: to_f64s(zeta), value: q.sqrt().as_f64() });
    }
    Ok(())
}

/// α at a surface point in closed form from the drift pieces:
/// `(μ₋(ζ) − μ₊(ζ)) / (2‖σ(ζ)ᵀn(ζ)‖²)`.
pub fn alpha_at<S: Scalar>(model: &Model<S>, surface: &Hypersurface<S>, zeta: &[S]) -> Result<Vec<S>> {
    let n = surface.unit_normal(zeta)?;
    let v = model.diffusion().eval(zeta).tr_mul_vec(&n);
    let q = linalg::dot(&v, &v);
    check_transversality(zeta, q)?;
    Ok(linalg::scale(&model.drift().jump_at(zeta), S::one() / (S::lit(2.0) * q)))
}

/// α at a surface point as the limit `h → 0+` of
/// `(μ(ζ − h n) − μ(ζ + h n)) / (2‖σ(ζ)ᵀn‖²)`, evaluated on the actual
/// (discontinuous) drift at `h = ε₀/4, ε₀/8, …` with Richardson extrapolation.
/// Accepted once two successive extrapolants differ by less than `TOL_ALPHA`.
pub fn alpha_richardson<S: Scalar>(
    model: &Model<S>,
    surface: &Hypersurface<S>,
    zeta: &[S],
    epsilon0: S,
) -> Result<Vec<S>> {
    let n = surface.unit_normal(zeta)?;
    let v = model.diffusion().eval(zeta).tr_mul_vec(&n);
    let q = linalg::dot(&v, &v);
    check_transversality(zeta, q)?;
    let denom = S::lit(2.0) * q;
    let quotient = |h: S| {
        let below: Vec<S> = zeta.iter().zip(&n).map(|(&z, &ni)| z - h * ni).collect();
        let above: Vec<S> = zeta.iter().zip(&n).map(|(&z, &ni)| z + h * ni).collect();
        let diff = linalg::sub(&model.drift().eval(&below), &model.drift().eval(&above));
        linalg::scale(&diff, S::one() / denom)
    };
    let tol = S::tolerance(TOL_ALPHA);
    let mut h = epsilon0 / S::lit(4.0);
    let mut prev_q = quotient(h);
    let mut prev_r: Option<Vec<S>> = None;
    let mut spread = S::infinity();
    for _ in 0..MAX_RICHARDSON_LEVELS {
        h /= S::lit(2.0);
        let q_h = quotient(h);
        let r: Vec<S> = q_h.iter().zip(&prev_q).map(|(&a, &b)| S::lit(2.0) * a - b).collect();
        if let Some(pr) = &prev_r {
            spread = r.iter().zip(pr).fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()));
            if spread < tol {
                return Ok(r);
            }
        }
        prev_r = Some(r);
        prev_q = q_h;
    }
    Err(TransformError::AlphaNotWellDefined { zeta: to_f64s(zeta), spread: spread.as_f64() })
}

/// Sampling budget for the invertibility certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Certification<S> {
    pub window: Window<S>,
    pub samples: usize,
    pub seed: u64,
}

impl<S: Scalar> Certification<S> {
    pub fn new(window: Window<S>, samples: usize, seed: u64) -> Self {
        Self { window, samples, seed }
    }
}

/// The transform `G` together with its certified contraction `κ`.
#[derive(Debug, Clone)]
pub struct Transform<S: Scalar> {
    surface: Hypersurface<S>,
    tube: Tube<S>,
    params: TransformParams<S>,
    alpha: AlphaField<S>,
    kappa: S,
}

impl<S: Scalar> Transform<S> {
    /// Builds `G` and certifies `κ <= κ_max` by sampling the tube.
    pub fn new(
        surface: Hypersurface<S>,
        params: TransformParams<S>,
        alpha: AlphaField<S>,
        cert: &Certification<S>,
    ) -> Result<Self> {
        let tube = Tube::new(&surface, params.epsilon0)?;
        if alpha.dimension() != surface.dimension() {
            return Err(TransformError::DimensionMismatch { expected: surface.dimension(), got: alpha.dimension() });
        }
        let mut t = Self { surface, tube, params, alpha, kappa: S::zero() };
        t.kappa = t.sample_contraction(cert)?;
        if t.kappa > params.kappa_max {
            return Err(TransformError::NotCertified { kappa: t.kappa.as_f64(), kappa_max: params.kappa_max.as_f64() });
        }
        Ok(t)
    }

    /// Chooses `c`: start at `ε₀/2` and halve until the sampled `κ <= κ_max`.
    pub fn auto(
        surface: Hypersurface<S>,
        alpha: AlphaField<S>,
        epsilon0: S,
        kappa_max: S,
        cert: &Certification<S>,
    ) -> Result<Self> {
        let mut c = epsilon0 / S::lit(2.0);
        let mut last = S::infinity();
        for _ in 0..MAX_HALVINGS {
            let params = TransformParams::new(c, epsilon0, kappa_max)?;
            match Self::new(surface.clone(), params, alpha.clone(), cert) {
                Ok(t) => return Ok(t),
                Err(TransformError::NotCertified { kappa, .. }) => last = S::lit(kappa),
                Err(e) => return Err(e),
            }
            c /= S::lit(2.0);
        }
        Err(TransformError::NotCertified { kappa: last.as_f64(), kappa_max: kappa_max.as_f64() })
    }

    /// `G = id` (continuous drift).
    pub fn identity(surface: Hypersurface<S>, epsilon0: S) -> Result<Self> {
        let tube = Tube::new(&surface, epsilon0)?;
        let params = TransformParams::new(epsilon0, epsilon0, S::lit(DEFAULT_KAPPA_MAX))?;
        let alpha = AlphaField::zero(surface.dimension());
        Ok(Self { surface, tube, params, alpha, kappa: S::zero() })
    }

    pub fn surface(&self) -> &Hypersurface<S> {
        &self.surface
    }

    pub fn tube(&self) -> &Tube<S> {
        &self.tube
    }

    pub fn params(&self) -> &TransformParams<S> {
        &self.params
    }

    pub fn alpha(&self) -> &AlphaField<S> {
        &self.alpha
    }

    /// Sampled contraction `sup ‖∇(φ·α∘p)‖_F` recorded at construction.
    pub fn kappa(&self) -> S {
        self.kappa
    }

    pub fn dimension(&self) -> usize {
        self.surface.dimension()
    }

    pub fn is_identity(&self) -> bool {
        self.alpha.is_zero()
    }

    fn check_dim(&self, x: &[S]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(TransformError::DimensionMismatch { expected: self.dimension(), got: x.len() });
        }
        Ok(())
    }

    /// Foot data when `x` lies in the bump support (`dist < c`) of a non-trivial transform.
    fn frame(&self, x: &[S]) -> Result<Option<Foot<S>>> {
        if self.is_identity() {
            return Ok(None);
        }
        Ok(self.surface.locate(x, self.params.c)?)
    }

    /// Whether `G` differs from the identity near `x`.
    pub fn is_active_at(&self, x: &[S]) -> Result<bool> {
        self.check_dim(x)?;
        if self.is_identity() {
            return Ok(false);
        }
        if let Hypersurface::AffineHyperplane(h) = &self.surface {
            return Ok(h.signed_distance(x).abs() < self.params.c);
        }
        Ok(self.frame(x)?.is_some())
    }

    /// Closed-form local data when `Θ` is a hyperplane and α is constant.
    pub(crate) fn planar_frame(&self, x: &[S]) -> PlanarFrame<'_, S> {
        let (Hypersurface::AffineHyperplane(h), AlphaSource::Constant(alpha)) = (&self.surface, &self.alpha.source)
        else {
            return if self.is_identity() { PlanarFrame::Inactive } else { PlanarFrame::General };
        };
        let s = h.signed_distance(x);
        if s.abs() >= self.params.c {
            return PlanarFrame::Inactive;
        }
        let p = profile(s, self.params.c);
        PlanarFrame::Active { slope: p.slope, curvature: p.curvature, alpha, normal: h.normal() }
    }

    /// `(φ(x), α(p(x)))`, or `None` outside the bump support.
    fn displacement(&self, x: &[S]) -> Result<Option<(S, Cow<'_, [S]>)>> {
        if self.is_identity() {
            return Ok(None);
        }
        if let (Hypersurface::AffineHyperplane(h), AlphaSource::Constant(a)) = (&self.surface, &self.alpha.source) {
            let s = h.signed_distance(x);
            if s.abs() >= self.params.c {
                return Ok(None);
            }
            return Ok(Some((profile(s, self.params.c).value, Cow::Borrowed(a.as_slice()))));
        }
        match self.frame(x)? {
            None => Ok(None),
            Some(foot) => {
                let phi = profile(foot.signed_distance, self.params.c).value;
                let alpha = self.alpha.at(&foot.point, &foot.normal)?;
                Ok(Some((phi, Cow::Owned(alpha))))
            }
        }
    }

    /// `φ(x) = s·|s|·bump(|s|/c)`, zero outside the bump support.
    pub fn phi(&self, x: &[S]) -> Result<S> {
        self.check_dim(x)?;
        let foot = match &self.surface {
            Hypersurface::AffineHyperplane(h) => {
                let s = h.signed_distance(x);
                return Ok(if s.abs() < self.params.c { profile(s, self.params.c).value } else { S::zero() });
            }
            Hypersurface::LevelSet(_) => self.surface.locate(x, self.params.c)?,
        };
        Ok(foot.map_or(S::zero(), |f| profile(f.signed_distance, self.params.c).value))
    }

    /// `G(x)`
    pub fn forward(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_dim(x)?;
        let mut out = x.to_vec();
        if let Some((phi, alpha)) = self.displacement(x)? {
            for (o, &a) in out.iter_mut().zip(alpha.iter()) {
                *o += phi * a;
            }
        }
        Ok(out)
    }

    /// `D(α∘p)(x)` for a point with the given foot.
    fn alpha_composite_jacobian(&self, foot: &Foot<S>) -> Result<Matrix<S>> {
        let d = self.dimension();
        if self.alpha.is_constant() {
            return Ok(Matrix::zeros(d, d));
        }
        let dalpha = self.alpha.derivative(&self.surface, &foot.point, &foot.normal)?;
        Ok(dalpha.mul_mat(&self.surface.projection_jacobian(foot)?))
    }

    /// `G'(x) = I + α ⊗ ∇φ + φ·D(α∘p)`, with `∇φ = ψ'(s)·n(p(x))`.
    pub fn jacobian(&self, x: &[S]) -> Result<Matrix<S>> {
        self.check_dim(x)?;
        let d = self.dimension();
        let mut jac = Matrix::identity(d);
        let Some(foot) = self.frame(x)? else { return Ok(jac) };
        let prof = profile(foot.signed_distance, self.params.c);
        let alpha = self.alpha.at(&foot.point, &foot.normal)?;
        jac.add_scaled_assign(&Matrix::outer(&alpha, &foot.normal), prof.slope);
        if !self.alpha.is_constant() {
            jac.add_scaled_assign(&self.alpha_composite_jacobian(&foot)?, prof.value);
        }
        Ok(jac)
    }

    /// Component Hessians `[∇²G₁(x), …, ∇²G_d(x)]`.
    ///
    /// ```text
    /// ∇²G_i = α_i (ψ''·n nᵀ + ψ'·∇²s) + ψ'(n ⊗ ∇a_i + ∇a_i ⊗ n) + φ ∇²a_i,   a_i = α_i∘p
    /// ```
    ///
    /// On the surface itself the `+n` one-sided value is returned. The last term
    /// (only present for non-constant α) uses central differences of `D(α∘p)`,
    /// which is smooth across the surface.
    pub fn hessian(&self, x: &[S]) -> Result<Vec<Matrix<S>>> {
        self.check_dim(x)?;
        let d = self.dimension();
        let Some(foot) = self.frame(x)? else { return Ok(vec![Matrix::zeros(d, d); d]) };
        let prof = profile(foot.signed_distance, self.params.c);
        let alpha = self.alpha.at(&foot.point, &foot.normal)?;
        let nn = Matrix::outer(&foot.normal, &foot.normal);
        let mut radial = nn.scaled(prof.curvature);
        if !self.surface.is_hyperplane() {
            radial.add_scaled_assign(&self.surface.signed_distance_hessian(&foot)?, prof.slope);
        }
        let mut out: Vec<Matrix<S>> = alpha.iter().map(|&a| radial.scaled(a)).collect();
        if self.alpha.is_constant() {
            return Ok(out);
        }
        let da = self.alpha_composite_jacobian(&foot)?;
        let h = S::lit(H_FD);
        let mut second: Vec<Matrix<S>> = vec![Matrix::zeros(d, d); d];
        for j in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let dp = self.alpha_composite_jacobian(&self.locate_unbounded(&xp)?)?;
            let dm = self.alpha_composite_jacobian(&self.locate_unbounded(&xm)?)?;
            for (i, sec) in second.iter_mut().enumerate() {
                for k in 0..d {
                    sec[(j, k)] = (dp[(i, k)] - dm[(i, k)]) / (S::lit(2.0) * h);
                }
            }
        }
        for (i, hi) in out.iter_mut().enumerate() {
            let grad_a = da.row(i);
            let cross = Matrix::outer(&foot.normal, grad_a).add(&Matrix::outer(grad_a, &foot.normal));
            hi.add_scaled_assign(&cross, prof.slope);
            let sym = second[i].add(&second[i].transpose()).scaled(S::lit(0.5));
            hi.add_scaled_assign(&sym, prof.value);
        }
        Ok(out)
    }

    fn locate_unbounded(&self, x: &[S]) -> Result<Foot<S>> {
        self.surface
            .locate(x, self.surface.reach())?
            .ok_or(TransformError::Geometry(GeometryError::OutsideTube { lower_bound: self.surface.reach().as_f64() }))
    }

    /// `G⁻¹(z)` by the fixed-point iteration `x ← z − φ(x)·α(p(x))`, stopped at
    /// `‖G(x) − z‖ <= TOL_INV·max(1, ‖z‖)`.
    pub fn inverse(&self, z: &[S]) -> Result<Vec<S>> {
        self.check_dim(z)?;
        if let (Hypersurface::AffineHyperplane(h), AlphaSource::Constant(alpha)) = (&self.surface, &self.alpha.source) {
            return self.planar_inverse(h.signed_distance(z), linalg::dot(h.normal(), alpha), alpha, z);
        }
        self.inverse_from(z, z)
    }

    /// The iterates `x_k = z − ψ(s(x_{k−1}))·α` move only along α, so the
    /// iteration runs on `s_k = s(z) − ψ(s_{k−1})·(n·α)`, and
    /// `G(x_k) − z = (ψ(s_k) − ψ(s_{k−1}))·α`.
    fn planar_inverse(&self, s_z: S, n_alpha: S, alpha: &[S], z: &[S]) -> Result<Vec<S>> {
        let c = self.params.c;
        let tol = S::tolerance(TOL_INV) * S::one().max(linalg::norm(z));
        let alpha_norm = linalg::norm(alpha);
        let psi = |s: S| if s.abs() >= c { S::zero() } else { profile(s, c).value };
        let mut shift = S::zero();
        let mut s = s_z;
        let mut residual = S::infinity();
        for _ in 0..MAX_INV_ITERS {
            let next = psi(s);
            residual = (next - shift).abs() * alpha_norm;
            if residual <= tol {
                return Ok(z.iter().zip(alpha).map(|(&zi, &ai)| zi - shift * ai).collect());
            }
            shift = next;
            s = s_z - shift * n_alpha;
        }
        Err(TransformError::InverseDidNotConverge {
            iterations: MAX_INV_ITERS,
            residual: residual.as_f64(),
            kappa: self.kappa.as_f64(),
        })
    }

    /// As [`Transform::inverse`], starting the iteration from `guess`.
    pub fn inverse_from(&self, z: &[S], guess: &[S]) -> Result<Vec<S>> {
        self.check_dim(z)?;
        self.check_dim(guess)?;
        if self.is_identity() {
            return Ok(z.to_vec());
        }
        let tol = S::tolerance(TOL_INV) * S::one().max(linalg::norm(z));
        let mut x = guess.to_vec();
        let mut residual = S::infinity();
        for _ in 0..MAX_INV_ITERS {
            let Some((phi, alpha)) = self.displacement(&x)? else {
                // G(x) = x here.
                residual = linalg::distance(&x, z);
                if residual <= tol {
                    return Ok(x);
                }
                x.copy_from_slice(z);
                continue;
            };
            let mut r2 = S::zero();
            for i in 0..x.len() {
                let shift = phi * alpha[i];
                let ri = x[i] + shift - z[i];
                r2 += ri * ri;
            }
            residual = r2.sqrt();
            if residual <= tol {
                return Ok(x);
            }
            let next: Vec<S> = z.iter().zip(alpha.iter()).map(|(&zi, &ai)| zi - phi * ai).collect();
            drop(alpha);
            x = next;
        }
        Err(TransformError::InverseDidNotConverge {
            iterations: MAX_INV_ITERS,
            residual: residual.as_f64(),
            kappa: self.kappa.as_f64(),
        })
    }

    /// Tube points used by the contraction certificate: surface samples from the
    /// window, each swept along its normal over stratified offsets in `(-c, c)`.
    pub fn tube_samples(&self, cert: &Certification<S>) -> Result<Vec<Vec<S>>> {
        const PER_FOOT: usize = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(cert.seed);
        let feet = (cert.samples / PER_FOOT).max(1);
        let c = self.params.c;
        let mut points = Vec::with_capacity(feet * PER_FOOT);
        for zeta in self.surface.sample_surface(&cert.window, feet, &mut rng) {
            let n = self.surface.unit_normal(&zeta)?;
            for k in 0..PER_FOOT {
                let frac = (S::lit(k as f64) + S::lit(rng.random::<f64>())) / S::lit(PER_FOOT as f64);
                let t = (S::lit(2.0) * frac - S::one()) * c;
                points.push(zeta.iter().zip(&n).map(|(&z, &ni)| z + t * ni).collect());
            }
        }
        Ok(points)
    }

    fn sample_contraction(&self, cert: &Certification<S>) -> Result<S> {
        if self.is_identity() {
            return Ok(S::zero());
        }
        let id = Matrix::identity(self.dimension());
        let mut kappa = S::zero();
        for x in self.tube_samples(cert)? {
            let k = self.jacobian(&x)?.sub(&id).frobenius_norm();
            if !k.is_finite() {
                return Ok(S::infinity());
            }
            kappa = kappa.max(k);
        }
        Ok(kappa)
    }
}

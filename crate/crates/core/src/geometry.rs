//! The exceptional hypersurface carrying the drift discontinuity.
//!
//! Two families are supported: affine hyperplanes `{x : a·x = b}` with a unit
//! normal, and regular level sets `{x : g(x) = 0}` of a smooth field. Both
//! answer the same queries: distance, closest-point projection, unit normal,
//! and the derivative data the transform needs inside the tube.
//!
//! Orientation is fixed per surface: the stored `a` for a hyperplane and
//! `+∇g/‖∇g‖` for a level set. `side(x) >= 0` always selects the half of space
//! the normal points into.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

/// Newton residual tolerance for level-set projection.
pub const TOL_PROJ: f64 = 1e-12;
/// Newton step cap for level-set projection.
pub const MAX_PROJ_STEPS: usize = 50;
/// Distance below which a point counts as lying on the surface.
pub const TOL_ON_SURFACE: f64 = 1e-9;
/// Gradient norm below which a level-set normal is degenerate.
pub const TOL_GRAD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point is outside the tube (distance at least {lower_bound})")]
    OutsideTube { lower_bound: f64 },
    #[error("projection failed after {steps} Newton steps (residual {residual:e}, iterate {iterate:?})")]
    ProjectionFailed { iterate: Vec<f64>, residual: f64, steps: usize },
    #[error("degenerate normal: gradient norm {gradient_norm:e}")]
    DegenerateNormal { gradient_norm: f64 },
    #[error("point is not on the surface (distance {distance:e})")]
    NotOnSurface { distance: f64 },
    #[error("dimension mismatch: surface lives in R^{expected}, got a point in R^{got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tube radius {epsilon0} must be positive and below the reach {reach}")]
    ReachViolation { epsilon0: f64, reach: f64 },
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

/// Smooth scalar field whose zero set is the surface.
pub trait ScalarField<S: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;
    fn value(&self, x: &[S]) -> S;
    fn gradient(&self, x: &[S]) -> Vec<S>;
    fn hessian(&self, x: &[S]) -> Matrix<S>;

    /// A certified lower bound on the distance from `x` to the zero set, when one
    /// is cheaply available. Used to skip Newton projection far from the surface.
    fn distance_lower_bound(&self, _x: &[S]) -> Option<S> {
        None
    }

    fn name(&self) -> &str;
}

/// `g(x) = ‖x − center‖² − radius²`
#[derive(Debug, Clone, PartialEq)]
pub struct Sphere<S> {
    pub center: Vec<S>,
    pub radius: S,
}

impl<S: Scalar> ScalarField<S> for Sphere<S> {
    fn dimension(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[S]) -> S {
        let d = linalg::distance(x, &self.center);
        d * d - self.radius * self.radius
    }

    fn gradient(&self, x: &[S]) -> Vec<S> {
        x.iter().zip(&self.center).map(|(&xi, &ci)| S::lit(2.0) * (xi - ci)).collect()
    }

    fn hessian(&self, _x: &[S]) -> Matrix<S> {
        Matrix::identity(self.center.len()).scaled(S::lit(2.0))
    }

    fn distance_lower_bound(&self, x: &[S]) -> Option<S> {
        Some((linalg::distance(x, &self.center) - self.radius).abs())
    }

    fn name(&self) -> &str {
        "sphere"
    }
}

/// `{x : a·x = b}` with `‖a‖ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineHyperplane<S> {
    normal: Vec<S>,
    offset: S,
}

impl<S: Scalar> AffineHyperplane<S> {
    pub fn normal(&self) -> &[S] {
        &self.normal
    }

    pub fn offset(&self) -> S {
        self.offset
    }

    /// `a·x − b`
    #[inline]
    pub fn signed_distance(&self, x: &[S]) -> S {
        linalg::dot(&self.normal, x) - self.offset
    }
}

/// Zero set of a smooth field, with a declared tube in which `∇g ≠ 0` and an
/// asserted reach.
#[derive(Clone)]
pub struct LevelSet<S: Scalar> {
    field: Arc<dyn ScalarField<S>>,
    tube_radius: S,
    reach: S,
}

impl<S: Scalar> fmt::Debug for LevelSet<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSet")
            .field("field", &self.field.name())
            .field("tube_radius", &self.tube_radius)
            .field("reach", &self.reach)
            .finish()
    }
}

impl<S: Scalar> LevelSet<S> {
    pub fn field(&self) -> &dyn ScalarField<S> {
        self.field.as_ref()
    }

    pub fn tube_radius(&self) -> S {
        self.tube_radius
    }

    /// Newton iteration on the Lagrange system `y − x + λ∇g(y) = 0, g(y) = 0`,
    /// started at `(x, 0)`.
    fn newton_project(&self, x: &[S]) -> Result<Vec<S>> {
        let d = x.len();
        let tol = S::tolerance(TOL_PROJ) * S::one().max(linalg::norm(x));
        let mut y = x.to_vec();
        let mut lambda = S::zero();
        let mut residual = S::infinity();
        for step in 0..=MAX_PROJ_STEPS {
            let grad = self.field.gradient(&y);
            let mut rhs = Vec::with_capacity(d + 1);
            for i in 0..d {
                rhs.push(-(y[i] - x[i] + lambda * grad[i]));
            }
            rhs.push(-self.field.value(&y));
            residual = linalg::norm(&rhs);
            if !residual.is_finite() {
                break;
            }
            if residual <= tol {
                return Ok(y);
            }
            if step == MAX_PROJ_STEPS {
                break;
            }
            let hess = self.field.hessian(&y);
            let jac = Matrix::from_fn(d + 1, d + 1, |i, j| match (i < d, j < d) {
                (true, true) => {
                    let id = if i == j { S::one() } else { S::zero() };
                    id + lambda * hess[(i, j)]
                }
                (true, false) => grad[i],
                (false, true) => grad[j],
                (false, false) => S::zero(),
            });
            let Some(delta) = jac.solve(&rhs) else { break };
            for i in 0..d {
                y[i] += delta[i];
            }
            lambda += delta[d];
        }
        Err(GeometryError::ProjectionFailed {
            iterate: y.iter().map(|v| v.as_f64()).collect(),
            residual: residual.as_f64(),
            steps: MAX_PROJ_STEPS,
        })
    }
}

/// Closest point of `x` on the surface, together with the normal there and the
/// signed distance `n(p)·(x − p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Foot<S> {
    pub point: Vec<S>,
    pub normal: Vec<S>,
    pub signed_distance: S,
}

#[derive(Debug, Clone)]
pub enum Hypersurface<S: Scalar> {
    AffineHyperplane(AffineHyperplane<S>),
    LevelSet(LevelSet<S>),
}

impl<S: Scalar> Hypersurface<S> {
    /// Hyperplane `{x : a·x = b}`; `a` is normalized (and `b` rescaled with it).
    pub fn hyperplane(normal: Vec<S>, offset: S) -> Result<Self> {
        let len = linalg::norm(&normal);
        if normal.is_empty() || !len.is_finite() || len <= S::zero() || !offset.is_finite() {
            return Err(GeometryError::InvalidSurface("hyperplane normal must be finite and non-zero".into()));
        }
        Ok(Self::AffineHyperplane(AffineHyperplane {
            normal: linalg::scale(&normal, S::one() / len),
            offset: offset / len,
        }))
    }

    /// `{x : g(x) = 0}` with a declared tube radius (where `∇g ≠ 0`) and an asserted reach.
    pub fn level_set(field: Arc<dyn ScalarField<S>>, tube_radius: S, reach: S) -> Result<Self> {
        if !(tube_radius > S::zero()) || !(reach > S::zero()) {
            return Err(GeometryError::InvalidSurface("tube radius and reach must be positive".into()));
        }
        Ok(Self::LevelSet(LevelSet { field, tube_radius, reach }))
    }

    /// Sphere preset; its reach is the radius.
    pub fn sphere(center: Vec<S>, radius: S) -> Result<Self> {
        if center.is_empty() || !(radius > S::zero()) {
            return Err(GeometryError::InvalidSurface("sphere needs a center and a positive radius".into()));
        }
        Self::level_set(Arc::new(Sphere { center, radius }), radius, radius)
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::AffineHyperplane(h) => h.normal.len(),
            Self::LevelSet(l) => l.field.dimension(),
        }
    }

    pub fn is_hyperplane(&self) -> bool {
        matches!(self, Self::AffineHyperplane(_))
    }

    pub fn reach(&self) -> S {
        match self {
            Self::AffineHyperplane(_) => S::infinity(),
            Self::LevelSet(l) => l.reach,
        }
    }

    fn check_dim(&self, x: &[S]) -> Result<()> {
        let expected = self.dimension();
        if x.len() != expected {
            return Err(GeometryError::DimensionMismatch { expected, got: x.len() });
        }
        Ok(())
    }

    /// Orientation function: `a·x − b` or `g(x)`. Non-negative values are the `+n` side.
    #[inline]
    pub fn side(&self, x: &[S]) -> S {
        match self {
            Self::AffineHyperplane(h) => h.signed_distance(x),
            Self::LevelSet(l) => l.field.value(x),
        }
    }

    pub fn distance(&self, x: &[S]) -> Result<S> {
        self.check_dim(x)?;
        match self {
            Self::AffineHyperplane(h) => Ok(h.signed_distance(x).abs()),
            Self::LevelSet(l) => {
                if let Some(lb) = l.field.distance_lower_bound(x) {
                    if lb >= l.tube_radius {
                        return Err(GeometryError::OutsideTube { lower_bound: lb.as_f64() });
                    }
                }
                let p = l.newton_project(x)?;
                let dist = linalg::distance(x, &p);
                if dist >= l.tube_radius {
                    return Err(GeometryError::OutsideTube { lower_bound: l.tube_radius.as_f64() });
                }
                Ok(dist)
            }
        }
    }

    /// Closest point on the surface for a point strictly inside the tube of radius `tube.epsilon0()`.
    pub fn project(&self, x: &[S], tube: &Tube<S>) -> Result<Vec<S>> {
        match self.locate(x, tube.epsilon0())? {
            Some(foot) => Ok(foot.point),
            None => Err(GeometryError::OutsideTube { lower_bound: tube.epsilon0().as_f64() }),
        }
    }

    /// Foot-point data for `x` when `distance(x) < radius`, `None` otherwise.
    pub fn locate(&self, x: &[S], radius: S) -> Result<Option<Foot<S>>> {
        self.check_dim(x)?;
        match self {
            Self::AffineHyperplane(h) => {
                let s = h.signed_distance(x);
                if s.abs() >= radius {
                    return Ok(None);
                }
                let point = x.iter().zip(&h.normal).map(|(&xi, &ai)| xi - s * ai).collect();
                Ok(Some(Foot { point, normal: h.normal.clone(), signed_distance: s }))
            }
            Self::LevelSet(l) => {
                if let Some(lb) = l.field.distance_lower_bound(x) {
                    if lb >= radius {
                        return Ok(None);
                    }
                }
                let point = l.newton_project(x)?;
                let dist = linalg::distance(x, &point);
                if dist >= radius {
                    return Ok(None);
                }
                let normal = self.normal_unchecked(&point)?;
                let diff = linalg::sub(x, &point);
                let signed_distance = linalg::dot(&normal, &diff);
                Ok(Some(Foot { point, normal, signed_distance }))
            }
        }
    }

    fn normal_unchecked(&self, zeta: &[S]) -> Result<Vec<S>> {
        match self {
            Self::AffineHyperplane(h) => Ok(h.normal.clone()),
            Self::LevelSet(l) => {
                let grad = l.field.gradient(zeta);
                let len = linalg::norm(&grad);
                if !(len >= S::tolerance(TOL_GRAD)) {
                    return Err(GeometryError::DegenerateNormal { gradient_norm: len.as_f64() });
                }
                Ok(linalg::scale(&grad, S::one() / len))
            }
        }
    }

    /// Unit normal at a point of the surface.
    pub fn unit_normal(&self, zeta: &[S]) -> Result<Vec<S>> {
        self.check_dim(zeta)?;
        let off = match self {
            Self::AffineHyperplane(h) => h.signed_distance(zeta).abs(),
            Self::LevelSet(l) => {
                let grad_norm = linalg::norm(&l.field.gradient(zeta));
                if !(grad_norm >= S::tolerance(TOL_GRAD)) {
                    return Err(GeometryError::DegenerateNormal { gradient_norm: grad_norm.as_f64() });
                }
                l.field.value(zeta).abs() / grad_norm
            }
        };
        if off > S::tolerance(TOL_ON_SURFACE) {
            return Err(GeometryError::NotOnSurface { distance: off.as_f64() });
        }
        self.normal_unchecked(zeta)
    }

    /// Derivative of the extended normal field `y ↦ ∇g(y)/‖∇g(y)‖` at `zeta`
    /// (zero for hyperplanes). Its range is the tangent space.
    pub fn normal_derivative(&self, zeta: &[S]) -> Result<Matrix<S>> {
        match self {
            Self::AffineHyperplane(h) => Ok(Matrix::zeros(h.normal.len(), h.normal.len())),
            Self::LevelSet(l) => {
                let grad = l.field.gradient(zeta);
                let len = linalg::norm(&grad);
                if !(len >= S::tolerance(TOL_GRAD)) {
                    return Err(GeometryError::DegenerateNormal { gradient_norm: len.as_f64() });
                }
                let n = linalg::scale(&grad, S::one() / len);
                let d = n.len();
                let tangent = Matrix::identity(d).sub(&Matrix::outer(&n, &n));
                Ok(tangent.mul_mat(&l.field.hessian(zeta)).scaled(S::one() / len))
            }
        }
    }

    /// Jacobian of the closest-point map at the point whose foot is `foot`:
    /// `(I + s·Dn)⁻¹ (I − n nᵀ)`.
    pub fn projection_jacobian(&self, foot: &Foot<S>) -> Result<Matrix<S>> {
        let d = foot.normal.len();
        let tangent = Matrix::identity(d).sub(&Matrix::outer(&foot.normal, &foot.normal));
        match self {
            Self::AffineHyperplane(_) => Ok(tangent),
            Self::LevelSet(_) => {
                let dn = self.normal_derivative(&foot.point)?;
                let mut lhs = Matrix::identity(d);
                lhs.add_scaled_assign(&dn, foot.signed_distance);
                let inv = lhs.inverse().ok_or_else(|| {
                    GeometryError::InvalidSurface("tube radius reaches a focal point of the surface".into())
                })?;
                Ok(inv.mul_mat(&tangent))
            }
        }
    }

    /// Hessian of the signed distance function: `Dn(p) · Dp`.
    pub fn signed_distance_hessian(&self, foot: &Foot<S>) -> Result<Matrix<S>> {
        match self {
            Self::AffineHyperplane(h) => Ok(Matrix::zeros(h.normal.len(), h.normal.len())),
            Self::LevelSet(_) => {
                let dn = self.normal_derivative(&foot.point)?;
                Ok(dn.mul_mat(&self.projection_jacobian(foot)?))
            }
        }
    }

    /// Points of the surface obtained by projecting uniform samples of `window`.
    /// Samples that cannot be projected (outside a level set's tube) are skipped.
    pub fn sample_surface<R: Rng + ?Sized>(&self, window: &Window<S>, count: usize, rng: &mut R) -> Vec<Vec<S>> {
        let radius = match self {
            Self::AffineHyperplane(_) => S::infinity(),
            Self::LevelSet(l) => l.tube_radius,
        };
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count && attempts < count * 20 {
            attempts += 1;
            let u = window.sample(rng);
            if let Ok(Some(foot)) = self.locate(&u, radius) {
                out.push(foot.point);
            }
        }
        out
    }

    /// Sample check of the tube invariants for a level set: `‖∇g‖ > TOL_GRAD`
    /// and projection of `ζ + t·n(ζ)` returns `ζ` for `|t| < epsilon0`.
    /// Returns the smallest gradient norm seen (infinite for hyperplanes).
    pub fn check_tube<R: Rng + ?Sized>(&self, epsilon0: S, window: &Window<S>, count: usize, rng: &mut R) -> Result<S> {
        let Self::LevelSet(l) = self else { return Ok(S::infinity()) };
        let mut min_grad = S::infinity();
        let tol = S::tolerance(1e-8);
        for zeta in self.sample_surface(window, count, rng) {
            let n = self.unit_normal(&zeta)?;
            let t = (S::lit(rng.random::<f64>()) * S::lit(2.0) - S::one()) * epsilon0 * S::lit(0.999);
            let x: Vec<S> = zeta.iter().zip(&n).map(|(&z, &ni)| z + t * ni).collect();
            min_grad = min_grad.min(linalg::norm(&l.field.gradient(&x)));
            let p = l.newton_project(&x)?;
            if linalg::distance(&p, &zeta) > tol * S::one().max(epsilon0) {
                return Err(GeometryError::ReachViolation { epsilon0: epsilon0.as_f64(), reach: t.abs().as_f64() });
            }
        }
        if !(min_grad > S::tolerance(TOL_GRAD)) {
            return Err(GeometryError::DegenerateNormal { gradient_norm: min_grad.as_f64() });
        }
        Ok(min_grad)
    }
}

/// Tube radius `ε₀`, validated against the surface reach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tube<S> {
    epsilon0: S,
}

impl<S: Scalar> Tube<S> {
    pub fn new(surface: &Hypersurface<S>, epsilon0: S) -> Result<Self> {
        let reach = surface.reach();
        if !(epsilon0 > S::zero()) || !(epsilon0 < reach) {
            return Err(GeometryError::ReachViolation { epsilon0: epsilon0.as_f64(), reach: reach.as_f64() });
        }
        Ok(Self { epsilon0 })
    }

    pub fn epsilon0(&self) -> S {
        self.epsilon0
    }
}

/// Axis-aligned sampling box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<S> {
    pub lo: Vec<S>,
    pub hi: Vec<S>,
}

impl<S: Scalar> Window<S> {
    pub fn new(lo: Vec<S>, hi: Vec<S>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(GeometryError::InvalidSurface("window bounds must satisfy lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    /// `[-half_width, half_width]^d`
    pub fn cube(dim: usize, half_width: S) -> Self {
        Self { lo: vec![-half_width; dim], hi: vec![half_width; dim] }
    }

    pub fn dimension(&self) -> usize {
        self.lo.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<S> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| a + (b - a) * S::lit(rng.random::<f64>())).collect()
    }

    pub fn contains(&self, x: &[S]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&a, &b))| a <= v && v <= b)
    }
}

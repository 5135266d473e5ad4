//! Discrete residual of the Itô formula with finite-variation jumps.
//!
//! For a path `Y` on a grid `t_0 < … < t_n` and a test function `f`,
//!
//! ```text
//! R(t_m) = f(Y_{t_m}) − f(Y_0)
//!        − Σ_{i<m} ∇f(Y_{t_i})·ΔY^c_i
//!        − ½ Σ_{i<m} ΔY^c_iᵀ ∇²f(Y_{t_i}) ΔY^c_i
//!        − Σ_{τ_k <= t_m} (f(Y_{τ_k}) − f(Y_{τ_k−}))
//! ```
//!
//! where `ΔY^c_i = Y_{t_{i+1}−} − Y_{t_i}` is the continuous part of the increment.

use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;
use crate::solver::Path;
use crate::transform::Transform;

use super::AnalysisError;

/// A scalar `C²` (or piecewise `C²`) test function with its derivatives.
pub trait SmoothFunction<S: Scalar> {
    fn value(&self, x: &[S]) -> Result<S, AnalysisError>;
    fn gradient(&self, x: &[S]) -> Result<Vec<S>, AnalysisError>;
    fn hessian(&self, x: &[S]) -> Result<Matrix<S>, AnalysisError>;
}

fn check_component(component: usize, dim: usize) -> Result<(), AnalysisError> {
    if component >= dim {
        return Err(AnalysisError::ComponentOutOfRange { component, dimension: dim });
    }
    Ok(())
}

/// `x ↦ G_k(x)`
#[derive(Debug, Clone, Copy)]
pub struct GComponent<'a, S: Scalar> {
    transform: &'a Transform<S>,
    component: usize,
}

impl<'a, S: Scalar> GComponent<'a, S> {
    pub fn new(transform: &'a Transform<S>, component: usize) -> Result<Self, AnalysisError> {
        check_component(component, transform.dimension())?;
        Ok(Self { transform, component })
    }
}

impl<S: Scalar> SmoothFunction<S> for GComponent<'_, S> {
    fn value(&self, x: &[S]) -> Result<S, AnalysisError> {
        Ok(self.transform.forward(x)?[self.component])
    }

    fn gradient(&self, x: &[S]) -> Result<Vec<S>, AnalysisError> {
        Ok(self.transform.jacobian(x)?.row(self.component).to_vec())
    }

    fn hessian(&self, x: &[S]) -> Result<Matrix<S>, AnalysisError> {
        Ok(self.transform.hessian(x)?.swap_remove(self.component))
    }
}

/// `z ↦ (G⁻¹)_k(z)`, with derivatives from the inverse function theorem:
/// `∇(G⁻¹) = J⁻¹` and `∂²(G⁻¹)_k = −Σ_m (J⁻¹)_{km} J⁻ᵀ ∇²G_m J⁻¹`, `J = G'(G⁻¹(z))`.
#[derive(Debug, Clone, Copy)]
pub struct GInverseComponent<'a, S: Scalar> {
    transform: &'a Transform<S>,
    component: usize,
}

impl<'a, S: Scalar> GInverseComponent<'a, S> {
    pub fn new(transform: &'a Transform<S>, component: usize) -> Result<Self, AnalysisError> {
        check_component(component, transform.dimension())?;
        Ok(Self { transform, component })
    }

    fn inverse_jacobian(&self, x: &[S]) -> Result<Matrix<S>, AnalysisError> {
        self.transform.jacobian(x)?.inverse().ok_or_else(|| AnalysisError::Invalid("singular Jacobian of G".into()))
    }
}

impl<S: Scalar> SmoothFunction<S> for GInverseComponent<'_, S> {
    fn value(&self, z: &[S]) -> Result<S, AnalysisError> {
        Ok(self.transform.inverse(z)?[self.component])
    }

    fn gradient(&self, z: &[S]) -> Result<Vec<S>, AnalysisError> {
        let x = self.transform.inverse(z)?;
        Ok(self.inverse_jacobian(&x)?.row(self.component).to_vec())
    }

    fn hessian(&self, z: &[S]) -> Result<Matrix<S>, AnalysisError> {
        let x = self.transform.inverse(z)?;
        let jinv = self.inverse_jacobian(&x)?;
        let jinv_t = jinv.transpose();
        let d = self.transform.dimension();
        let mut out = Matrix::zeros(d, d);
        for (m, hm) in self.transform.hessian(&x)?.iter().enumerate() {
            let w = jinv[(self.component, m)];
            if w != S::zero() {
                out.add_scaled_assign(&jinv_t.mul_mat(hm).mul_mat(&jinv), -w);
            }
        }
        Ok(out)
    }
}

/// `f(x) = ½ xᵀ A x + bᵀ x` with symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic<S> {
    pub a: Matrix<S>,
    pub b: Vec<S>,
}

impl<S: Scalar> SmoothFunction<S> for Quadratic<S> {
    fn value(&self, x: &[S]) -> Result<S, AnalysisError> {
        Ok(S::lit(0.5) * linalg::dot(x, &self.a.mul_vec(x)) + linalg::dot(&self.b, x))
    }

    fn gradient(&self, x: &[S]) -> Result<Vec<S>, AnalysisError> {
        Ok(linalg::add(&self.a.mul_vec(x), &self.b))
    }

    fn hessian(&self, _x: &[S]) -> Result<Matrix<S>, AnalysisError> {
        Ok(self.a.clone())
    }
}

/// `R(t_m)` at every grid point of `path` (so `R(t_0) = 0`).
pub fn ito_residual_with<S: Scalar, F: SmoothFunction<S> + ?Sized>(
    f: &F,
    path: &Path<S>,
) -> Result<Vec<S>, AnalysisError> {
    let n = path.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let f0 = f.value(path.state(0))?;
    let mut out = Vec::with_capacity(n);
    out.push(S::zero());
    let mut first = S::zero();
    let mut second = S::zero();
    let mut jumps = S::zero();
    for i in 0..n - 1 {
        let y = path.state(i);
        let left = path.left_limit(i + 1);
        let dyc = linalg::sub(left, y);
        first += linalg::dot(&f.gradient(y)?, &dyc);
        second += S::lit(0.5) * linalg::dot(&dyc, &f.hessian(y)?.mul_vec(&dyc));
        if path.is_jump[i + 1] {
            jumps += f.value(path.state(i + 1))? - f.value(left)?;
        }
        let r = f.value(path.state(i + 1))? - f0 - first - second - jumps;
        out.push(r);
    }
    Ok(out)
}

/// The residual series for `f = G_component`.
pub fn ito_residual<S: Scalar>(
    transform: &Transform<S>,
    path: &Path<S>,
    component: usize,
) -> Result<Vec<S>, AnalysisError> {
    if path.dim != transform.dimension() {
        return Err(AnalysisError::Invalid("path and transform dimensions differ".into()));
    }
    ito_residual_with(&GComponent::new(transform, component)?, path)
}

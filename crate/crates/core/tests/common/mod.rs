#![allow(dead_code)]

use std::sync::Arc;

use jumpsde_core::analysis::{build_transform, TransformSpec};
use jumpsde_core::geometry::Sphere;
use jumpsde_core::*;

pub fn auto_spec() -> TransformSpec<f64> {
    TransformSpec::Auto { epsilon0: 1.0, kappa_max: 0.5 }
}

pub fn transformed(model: Model64, spec: TransformSpec<f64>) -> TransformedModel64 {
    let window = Window::cube(model.dimension(), 2.0);
    let t = build_transform(&model, &spec, &window, 4096, 17).expect("certified transform");
    TransformedModel::new(model, t).unwrap()
}

pub fn sign_1d() -> TransformedModel64 {
    transformed(presets::sign_1d().unwrap(), auto_spec())
}

pub fn cpp_2d() -> TransformedModel64 {
    transformed(presets::cpp_threshold_2d().unwrap(), auto_spec())
}

/// Unit circle threshold with affine drift pieces and state-dependent
/// diffusion, so that α varies along the surface.
pub fn circle_model() -> Model64 {
    let surface = Hypersurface::level_set(Arc::new(Sphere { center: vec![0.0, 0.0], radius: 1.0 }), 1.0, 1.0).unwrap();
    let m = |rows: &[[f64; 2]; 2]| Matrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()]).unwrap();
    let plus = AffineMap::new(m(&[[-0.5, 0.2], [0.0, -0.3]]), vec![-1.0, 0.3]).unwrap();
    let minus = AffineMap::new(m(&[[-0.1, 0.0], [0.4, -0.2]]), vec![0.6, -0.2]).unwrap();
    let drift = PiecewiseDrift::new(surface, plus, minus).unwrap();
    let sigma = Diffusion::affine(
        m(&[[1.0, 0.1], [0.0, 0.9]]),
        vec![m(&[[0.1, 0.0], [0.0, 0.05]]), m(&[[0.0, 0.05], [-0.05, 0.1]])],
    )
    .unwrap();
    let rho = JumpCoefficient::MarkScaled(AffineMap::new(m(&[[-0.1, 0.0], [0.0, -0.1]]), vec![0.2, 0.1]).unwrap());
    Model::new(drift, sigma, rho, 1.5, MarkLaw::Normal { mean: 0.3, std: 0.5 }, vec![0.9, 0.1], 1.0).unwrap()
}

pub fn circle() -> TransformedModel64 {
    transformed(circle_model(), TransformSpec::Auto { epsilon0: 0.5, kappa_max: 0.5 })
}

/// Central differences of `G` with step `h`.
pub fn fd_jacobian(t: &Transform64, x: &[f64], h: f64) -> Matrix64 {
    let d = x.len();
    let mut out = Matrix::zeros(d, d);
    for j in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let gp = t.forward(&xp).unwrap();
        let gm = t.forward(&xm).unwrap();
        for i in 0..d {
            out[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    out
}

/// Central differences of the analytic Jacobian: `out[i][(j, k)] ≈ ∂²G_i/∂x_j∂x_k`.
pub fn fd_hessian(t: &Transform64, x: &[f64], h: f64) -> Vec<Matrix64> {
    let d = x.len();
    let mut out = vec![Matrix::zeros(d, d); d];
    for k in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let jp = t.jacobian(&xp).unwrap();
        let jm = t.jacobian(&xm).unwrap();
        for (i, hi) in out.iter_mut().enumerate() {
            for j in 0..d {
                hi[(j, k)] = (jp[(i, j)] - jm[(i, j)]) / (2.0 * h);
            }
        }
    }
    out
}

/// Uniform point of the cube `[-r, r]^d` from a unit-cube sample.
pub fn in_cube(u: &[f64], r: f64) -> Vec<f64> {
    u.iter().map(|v| (2.0 * v - 1.0) * r).collect()
}

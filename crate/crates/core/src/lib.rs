//! Simulation and verification toolkit for jump-diffusion SDEs whose drift is
//! discontinuous across a hypersurface `Θ`:
//!
//! ```text
//! dX_t = μ(X_{t−}) dt + σ(X_{t−}) dW_t + ∫ ρ(X_{t−}, y) ν(dy, dt)
//! ```
//!
//! The transform [`Transform`] maps `X` to `Z = G(X)`, whose coefficients are
//! Lipschitz. Everything is generic over the scalar type (`f32` or `f64`);
//! the `*64` aliases fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coefficients;
pub mod drivers;
pub mod geometry;
pub mod linalg;
pub mod presets;
pub mod scalar;
pub mod solver;
pub mod transform;

pub use coefficients::{
    estimate_pw_lipschitz, AffineMap, Diffusion, JumpCoefficient, MarkLaw, Model, ModelError, PiecewiseDrift,
    TransformedModel,
};
pub use drivers::{JumpTrain, NoiseId, NoisePlan};
pub use geometry::{GeometryError, Hypersurface, Tube, Window};
pub use linalg::Matrix;
pub use presets::Preset;
pub use scalar::Scalar;
pub use solver::{Path, Scheme, SchemeConfig, SolverError};
pub use transform::{AlphaField, Certification, Transform, TransformError, TransformParams};

pub type Model64 = Model<f64>;
pub type TransformedModel64 = TransformedModel<f64>;
pub type Transform64 = Transform<f64>;
pub type TransformParams64 = TransformParams<f64>;
pub type Hypersurface64 = Hypersurface<f64>;
pub type Path64 = Path<f64>;
pub type NoisePlan64 = NoisePlan<f64>;
pub type Matrix64 = Matrix<f64>;

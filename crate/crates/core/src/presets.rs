//! Built-in models: a one-dimensional sign drift, a general-dimension
//! threshold model, and the Poisson / compound-Poisson threshold examples.

use std::fmt;
use std::str::FromStr;

use crate::coefficients::{AffineMap, Diffusion, JumpCoefficient, MarkLaw, Model, ModelError, PiecewiseDrift};
use crate::geometry::Hypersurface;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// `μ = -1` above 0, `+1` below, `σ = 1`, state-proportional Poisson jumps.
    Sign1d,
    /// `μ(x) = -x ∓ e₁` on either side of `{x₁ = 0}`, `σ = I`, no jumps.
    ThresholdAffine,
    /// Threshold drift with Poisson jumps `ρ(x, y) = f(x)`.
    Poisson1d,
    /// Two-dimensional threshold drift with compound-Poisson jumps `ρ(x, y) = y·f(x)`.
    CppThreshold2d,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Sign1d, Preset::ThresholdAffine, Preset::Poisson1d, Preset::CppThreshold2d];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sign1d => "sign_1d",
            Self::ThresholdAffine => "threshold_affine",
            Self::Poisson1d => "poisson_1d",
            Self::CppThreshold2d => "cpp_threshold_2d",
        }
    }

    /// Dimension the preset is built in when none is requested.
    pub fn default_dimension(self) -> usize {
        match self {
            Self::Sign1d | Self::Poisson1d => 1,
            Self::ThresholdAffine | Self::CppThreshold2d => 2,
        }
    }

    pub fn supports_dimension(self, dim: usize) -> bool {
        match self {
            Self::ThresholdAffine => dim >= 1,
            _ => dim == self.default_dimension(),
        }
    }

    /// Tube radius used when none is configured. Every preset surface is a
    /// hyperplane, so any positive value is admissible.
    pub fn default_epsilon0(self) -> f64 {
        1.0
    }

    pub fn build<S: Scalar>(self, dim: Option<usize>) -> Result<Model<S>, ModelError> {
        let dim = dim.unwrap_or_else(|| self.default_dimension());
        if !self.supports_dimension(dim) {
            return Err(ModelError::Invalid(format!("preset '{}' does not support dimension {dim}", self.name())));
        }
        match self {
            Self::Sign1d => sign_1d(),
            Self::ThresholdAffine => threshold_affine(dim),
            Self::Poisson1d => poisson_1d(),
            Self::CppThreshold2d => cpp_threshold_2d(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownPreset(pub String);

impl fmt::Display for UnknownPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown preset '{}'", self.0)
    }
}

impl std::error::Error for UnknownPreset {}

impl FromStr for Preset {
    type Err = UnknownPreset;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| UnknownPreset(s.to_owned()))
    }
}

fn lit<S: Scalar>(v: &[f64]) -> Vec<S> {
    v.iter().map(|&x| S::lit(x)).collect()
}

fn mat<S: Scalar>(rows: &[&[f64]]) -> Matrix<S> {
    let rows: Vec<Vec<S>> = rows.iter().map(|r| lit(r)).collect();
    Matrix::from_rows(&rows).expect("rectangular literal")
}

fn origin_plane<S: Scalar>(normal: &[f64]) -> Result<Hypersurface<S>, ModelError> {
    Hypersurface::hyperplane(lit(normal), S::zero()).map_err(|e| ModelError::Invalid(e.to_string()))
}

/// `dX = -sign(X)dt + dW + (½ − ¼X₋)dN`, `N` Poisson with rate 1, `X₀ = 0.1`, `T = 1`.
pub fn sign_1d<S: Scalar>() -> Result<Model<S>, ModelError> {
    let drift = PiecewiseDrift::new(
        origin_plane(&[1.0])?,
        AffineMap::constant(lit(&[-1.0])),
        AffineMap::constant(lit(&[1.0])),
    )?;
    let jump = JumpCoefficient::MarkScaled(AffineMap::new(mat(&[&[-0.25]]), lit(&[0.5]))?);
    Model::new(drift, Diffusion::scalar(1, S::one()), jump, 1.0, MarkLaw::Dirac { value: 1.0 }, lit(&[0.1]), S::one())
}

/// `μ(x) = -x − e₁` for `x₁ >= 0` and `-x + e₁` otherwise, `σ = I`, `X₀ = 0`, `T = 1`.
pub fn threshold_affine<S: Scalar>(dim: usize) -> Result<Model<S>, ModelError> {
    let mut e1 = vec![S::zero(); dim];
    e1[0] = S::one();
    let neg_id = Matrix::identity(dim).scaled(-S::one());
    let minus_e1: Vec<S> = e1.iter().map(|&v| -v).collect();
    let surface = Hypersurface::hyperplane(e1.clone(), S::zero()).map_err(|e| ModelError::Invalid(e.to_string()))?;
    let drift = PiecewiseDrift::new(surface, AffineMap::new(neg_id.clone(), minus_e1)?, AffineMap::new(neg_id, e1)?)?;
    Model::new(
        drift,
        Diffusion::scalar(dim, S::one()),
        JumpCoefficient::None,
        0.0,
        MarkLaw::Dirac { value: 1.0 },
        vec![S::zero(); dim],
        S::one(),
    )
}

/// `μ(x) = -½x − 1` for `x >= 0` and `-½x + 1` otherwise, `σ = 1`,
/// `ρ(x, y) = 0.3 − 0.2x` driven by a rate-2 Poisson process, `X₀ = 0.2`, `T = 1`.
pub fn poisson_1d<S: Scalar>() -> Result<Model<S>, ModelError> {
    let a = mat(&[&[-0.5]]);
    let drift = PiecewiseDrift::new(
        origin_plane(&[1.0])?,
        AffineMap::new(a.clone(), lit(&[-1.0]))?,
        AffineMap::new(a, lit(&[1.0]))?,
    )?;
    let jump = JumpCoefficient::StateOnly(AffineMap::new(mat(&[&[-0.2]]), lit(&[0.3]))?);
    Model::new(drift, Diffusion::scalar(1, S::one()), jump, 2.0, MarkLaw::Dirac { value: 1.0 }, lit(&[0.2]), S::one())
}

/// Two-dimensional threshold on `{x₁ + x₂ = 0}` with compound-Poisson jumps
/// `ρ(x, y) = y·(-0.1x + (0.3, -0.2))`, marks `0.8` w.p. `0.6` and `-1.2` otherwise.
pub fn cpp_threshold_2d<S: Scalar>() -> Result<Model<S>, ModelError> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let a = mat(&[&[-0.5, 0.0], &[0.0, -0.5]]);
    let drift = PiecewiseDrift::new(
        origin_plane(&[h, h])?,
        AffineMap::new(a.clone(), lit(&[-1.0, -0.5]))?,
        AffineMap::new(a, lit(&[1.0, 0.5]))?,
    )?;
    let sigma = Diffusion::Constant(mat(&[&[1.0, 0.2], &[0.0, 0.8]]));
    let jump = JumpCoefficient::MarkScaled(AffineMap::new(mat(&[&[-0.1, 0.0], &[0.0, -0.1]]), lit(&[0.3, -0.2]))?);
    Model::new(drift, sigma, jump, 2.0, MarkLaw::TwoPoint { v1: 0.8, p: 0.6, v2: -1.2 }, lit(&[0.1, -0.05]), S::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::alpha_at;

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert_eq!("nope".parse::<Preset>().unwrap_err().to_string(), "unknown preset 'nope'");
    }

    #[test]
    fn presets_build_in_their_dimension() {
        for p in Preset::ALL {
            let m: Model<f64> = p.build(None).unwrap();
            assert_eq!(m.dimension(), p.default_dimension());
        }
        let m: Model<f64> = Preset::ThresholdAffine.build(Some(4)).unwrap();
        assert_eq!(m.dimension(), 4);
        assert!(Preset::Sign1d.build::<f64>(Some(2)).is_err());
    }

    #[test]
    fn preset_alpha_values() {
        let m: Model<f64> = sign_1d().unwrap();
        assert_eq!(alpha_at(&m, m.surface(), &[0.0]).unwrap(), vec![1.0]);
        let m: Model<f64> = cpp_threshold_2d().unwrap();
        let a = alpha_at(&m, m.surface(), &[0.0, 0.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12 && (a[1] - 0.5).abs() < 1e-12);
        let m: Model<f64> = threshold_affine(3).unwrap();
        assert_eq!(alpha_at(&m, m.surface(), &[0.0, 0.4, -1.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }
}

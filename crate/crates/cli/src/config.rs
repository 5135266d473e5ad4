//! Strict JSON run configuration and its translation into core types.

use jumpsde_core::analysis::TransformSpec;
use jumpsde_core::{
    AffineMap, Diffusion, Hypersurface, JumpCoefficient, MarkLaw, Matrix, Model64, PiecewiseDrift, Preset, Scheme,
    TransformParams, Window,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_owned(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub plus: AffineSpec,
    pub minus: AffineSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    /// `s·I`
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpSpec {
    None,
    StateOnly { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    MarkScaled { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkSpec {
    Dirac { value: f64 },
    Normal { mean: f64, std: f64 },
    Exponential { rate: f64 },
    TwoPoint { v1: f64, p: f64, v2: f64 },
}

impl From<MarkSpec> for MarkLaw {
    fn from(m: MarkSpec) -> Self {
        match m {
            MarkSpec::Dirac { value } => MarkLaw::Dirac { value },
            MarkSpec::Normal { mean, std } => MarkLaw::Normal { mean, std },
            MarkSpec::Exponential { rate } => MarkLaw::Exponential { rate },
            MarkSpec::TwoPoint { v1, p, v2 } => MarkLaw::TwoPoint { v1, p, v2 },
        }
    }
}

/// A preset plus optional overrides of its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump: Option<JumpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marks: Option<MarkSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Hyperplane { normal: Vec<f64>, offset: f64 },
    LevelSet { preset: String, center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformFields {
    /// Omitted: choose `c` by certification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransformConfig {
    Keyword(String),
    Fields(TransformFields),
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Half-width of the sampling cube around the origin.
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_c0")]
    pub c0: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { window: default_window(), samples: default_samples(), c0: default_c0() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// One `paths/path_<id>.csv` per path instead of a single file with a `path_id` column.
    #[serde(default)]
    pub per_path_files: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), per_path_files: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSpec>,
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_h_ref")]
    pub h_ref: f64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableConfig>,
    #[serde(default, skip_serializing)]
    pub output: OutputConfig,
}

fn default_window() -> f64 {
    2.0
}
fn default_samples() -> usize {
    4096
}
fn default_c0() -> f64 {
    jumpsde_core::analysis::check::DEFAULT_C0
}
fn default_points() -> usize {
    201
}
fn default_dir() -> String {
    "out".into()
}
fn default_scheme() -> Scheme {
    Scheme::TransformedEm
}
fn default_h() -> f64 {
    1.0 / 1024.0
}
fn default_levels() -> Vec<f64> {
    (5..10).map(|k| 0.5f64.powi(k)).collect()
}
fn default_h_ref() -> f64 {
    0.5f64.powi(jumpsde_core::solver::REFERENCE_LEVEL as i32)
}
fn default_paths() -> usize {
    1000
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("{field} must be positive")))
    }
}

fn matrix(field: &str, rows: &[Vec<f64>], dim: usize) -> Result<Matrix<f64>, ConfigError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(invalid(field, format!("expected a {dim}x{dim} matrix")));
    }
    Matrix::from_rows(rows).ok_or_else(|| invalid(field, "ragged matrix"))
}

fn affine(field: &str, m: &[Vec<f64>], offset: &[f64], dim: usize) -> Result<AffineMap<f64>, ConfigError> {
    if offset.len() != dim {
        return Err(invalid(field, format!("offset must have {dim} entries")));
    }
    AffineMap::new(matrix(field, m, dim)?, offset.to_vec()).map_err(|e| invalid(field, e.to_string()))
}

/// Steps of `h` over `[0, T]`, requiring `T/h` to be an integer.
pub fn steps_for(field: &str, h: f64, horizon: f64) -> Result<usize, ConfigError> {
    positive(field, h)?;
    if h > horizon {
        return Err(invalid(field, format!("{field} must not exceed T")));
    }
    let n = (horizon / h).round();
    if ((n * h - horizon) / horizon).abs() > 1e-9 {
        return Err(invalid(field, format!("T / {field} must be an integer")));
    }
    Ok(n as usize)
}

impl RunConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        self.model.preset.parse::<Preset>().map_err(|e| invalid("model.preset", e.to_string()))?;
        positive("h", self.h)?;
        positive("h_ref", self.h_ref)?;
        for (i, &h) in self.levels.iter().enumerate() {
            positive(&format!("levels[{i}]"), h)?;
        }
        if self.paths == 0 {
            return Err(invalid("paths", "paths must be positive"));
        }
        if let Some(t) = self.horizon {
            positive("T", t)?;
        }
        positive("check.window", self.check.window)?;
        positive("check.c0", self.check.c0)?;
        if self.check.samples == 0 {
            return Err(invalid("check.samples", "check.samples must be positive"));
        }
        if let Some(t) = &self.table {
            if t.points < 2 {
                return Err(invalid("table.points", "table.points must be at least 2"));
            }
        }
        self.transform_spec()?;
        self.build_model()?;
        Ok(())
    }

    fn preset(&self) -> Preset {
        self.model.preset.parse().expect("validated preset")
    }

    /// Horizon after applying the `T` override.
    pub fn horizon(&self) -> Result<f64, ConfigError> {
        Ok(self.horizon.unwrap_or(self.build_model()?.horizon()))
    }

    fn surface(&self, dim: usize) -> Result<Option<Hypersurface<f64>>, ConfigError> {
        let Some(spec) = &self.surface else { return Ok(None) };
        let s = match spec {
            SurfaceSpec::Hyperplane { normal, offset } => {
                if normal.len() != dim {
                    return Err(invalid("surface.normal", format!("expected {dim} entries")));
                }
                let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                if len.is_nan() || len <= 0.0 {
                    return Err(invalid("surface.normal", "normal must be non-zero"));
                }
                Hypersurface::hyperplane(normal.iter().map(|v| v / len).collect(), offset / len)
            }
            SurfaceSpec::LevelSet { preset, center, radius } => {
                if preset != "sphere" {
                    return Err(invalid("surface.preset", format!("unknown level-set preset '{preset}'")));
                }
                if center.len() != dim {
                    return Err(invalid("surface.center", format!("expected {dim} entries")));
                }
                positive("surface.radius", *radius)?;
                Hypersurface::sphere(center.clone(), *radius)
            }
        };
        s.map(Some).map_err(|e| invalid("surface", e.to_string()))
    }

    /// The preset with every override applied.
    pub fn build_model(&self) -> Result<Model64, ConfigError> {
        let spec = &self.model;
        let preset: Preset = spec
            .preset
            .parse()
            .map_err(|e: jumpsde_core::presets::UnknownPreset| invalid("model.preset", e.to_string()))?;
        let mut model = preset.build::<f64>(spec.dimension).map_err(|e| invalid("model.dimension", e.to_string()))?;
        let dim = model.dimension();
        let surface = self.surface(dim)?;
        if spec.drift.is_some() || surface.is_some() {
            let (plus, minus) = match &spec.drift {
                Some(d) => (
                    affine("model.drift.plus", &d.plus.matrix, &d.plus.offset, dim)?,
                    affine("model.drift.minus", &d.minus.matrix, &d.minus.offset, dim)?,
                ),
                None => (model.drift().plus().clone(), model.drift().minus().clone()),
            };
            let surface = surface.unwrap_or_else(|| model.surface().clone());
            let drift = PiecewiseDrift::new(surface, plus, minus).map_err(|e| invalid("model.drift", e.to_string()))?;
            model = model.with_drift(drift).map_err(|e| invalid("model.drift", e.to_string()))?;
        }
        if let Some(sigma) = &spec.sigma {
            let d = match sigma {
                SigmaSpec::Scalar(s) if s.is_finite() => Diffusion::scalar(dim, *s),
                SigmaSpec::Scalar(_) => return Err(invalid("model.sigma", "sigma must be finite")),
                SigmaSpec::Matrix(rows) => Diffusion::Constant(matrix("model.sigma", rows, dim)?),
            };
            model = model.with_diffusion(d).map_err(|e| invalid("model.sigma", e.to_string()))?;
        }
        if spec.jump.is_some() || spec.intensity.is_some() || spec.marks.is_some() {
            let jump = match &spec.jump {
                None => model.jump().clone(),
                Some(JumpSpec::None) => JumpCoefficient::None,
                Some(JumpSpec::StateOnly { matrix, offset }) => {
                    JumpCoefficient::StateOnly(affine("model.jump", matrix, offset, dim)?)
                }
                Some(JumpSpec::MarkScaled { matrix, offset }) => {
                    JumpCoefficient::MarkScaled(affine("model.jump", matrix, offset, dim)?)
                }
            };
            let intensity = spec.intensity.unwrap_or(model.intensity());
            let marks = spec.marks.map_or_else(|| model.marks().clone(), MarkLaw::from);
            model = model.with_jumps(jump, intensity, marks).map_err(|e| invalid("model.jump", e.to_string()))?;
        }
        if let Some(x0) = &spec.x0 {
            model = model.with_x0(x0.clone()).map_err(|e| invalid("model.x0", e.to_string()))?;
        }
        if let Some(t) = self.horizon {
            model = model.with_horizon(t).map_err(|e| invalid("T", e.to_string()))?;
        }
        Ok(model)
    }

    fn default_epsilon0(&self) -> f64 {
        match &self.surface {
            Some(SurfaceSpec::LevelSet { radius, .. }) => 0.5 * radius,
            _ => self.preset().default_epsilon0(),
        }
    }

    pub fn transform_spec(&self) -> Result<TransformSpec<f64>, ConfigError> {
        let kappa_default = jumpsde_core::transform::DEFAULT_KAPPA_MAX;
        let fields = match &self.transform {
            TransformConfig::Keyword(k) if k == "auto" => TransformFields { c: None, epsilon0: None, kappa_max: None },
            TransformConfig::Keyword(k) => {
                return Err(invalid("transform", format!("expected \"auto\" or an object, got '{k}'")))
            }
            TransformConfig::Fields(f) => f.clone(),
        };
        let epsilon0 = fields.epsilon0.unwrap_or_else(|| self.default_epsilon0());
        let kappa_max = fields.kappa_max.unwrap_or(kappa_default);
        positive("transform.epsilon0", epsilon0)?;
        if !(kappa_max > 0.0 && kappa_max < 1.0) {
            return Err(invalid("transform.kappa_max", "transform.kappa_max must lie in (0, 1)"));
        }
        Ok(match fields.c {
            None => TransformSpec::Auto { epsilon0, kappa_max },
            Some(c) => {
                positive("transform.c", c)?;
                TransformSpec::Fixed(
                    TransformParams::new(c, epsilon0, kappa_max).map_err(|e| invalid("transform", e.to_string()))?,
                )
            }
        })
    }

    pub fn check_window(&self, dim: usize) -> Window<f64> {
        Window::cube(dim, self.check.window)
    }

    /// The effective configuration as canonical JSON.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of [`RunConfig::canonical_json`].
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

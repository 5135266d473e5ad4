//! Subcommand execution and the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};

use jumpsde_core::analysis::{
    build_transform, check_assumptions, convergence_study, AnalysisError, CheckOptions, ConvergenceReport, StudyConfig,
    TransformSummary,
};
use jumpsde_core::solver::simulate_many;
use jumpsde_core::{Model64, Path64, Scheme, SchemeConfig, SolverError, Transform, TransformError, TransformedModel};
use serde::Serialize;

use crate::config::{steps_for, ConfigError, RunConfig};
use crate::output::{join_floats, CsvFile, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Simulate,
    Convergence,
    Table,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Check => "check",
            Self::Simulate => "simulate",
            Self::Convergence => "convergence",
            Self::Table => "table",
        }
    }

    pub fn requires_seed(self) -> bool {
        matches!(self, Self::Simulate | Self::Convergence)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("assumption or certification failure: {0}")]
    Assumption(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Assumption(_) => 1,
            Self::Config(_) | Self::Io(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

/// Failure while constructing `G`.
fn build_error(e: TransformError) -> CliError {
    match e {
        TransformError::InvalidParams(_) | TransformError::DimensionMismatch { .. } => CliError::Config(e.to_string()),
        _ => CliError::Assumption(e.to_string()),
    }
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::Config(_) | SolverError::Model(_) => CliError::Config(e.to_string()),
        _ => CliError::Numerical(e.to_string()),
    }
}

fn analysis_error(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::Solver(s) => solver_error(s),
        AnalysisError::Transform(t) => CliError::Numerical(t.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// Result of a successful run: exit code 0 or 1 and the files written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub message: String,
}

/// Applies the flag overrides, then runs `command`.
pub fn run(command: Command, mut cfg: RunConfig, seed: Option<u64>, out: Option<&Path>) -> Result<Outcome, CliError> {
    match seed {
        Some(s) => cfg.seed = s,
        None if command.requires_seed() => {
            return Err(CliError::Config(format!("--seed is required for '{}'", command.name())));
        }
        None => {}
    }
    if let Some(dir) = out {
        cfg.output.dir = dir.to_string_lossy().into_owned();
    }
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    let ctx = Context {
        prov: Provenance::new(cfg.seed, cfg.sha256()),
        config: serde_json::to_value(&cfg).expect("configuration serializes"),
        dir,
    };
    match command {
        Command::Check => check(&cfg, &ctx),
        Command::Simulate => simulate(&cfg, &ctx),
        Command::Convergence => convergence(&cfg, &ctx),
        Command::Table => table(&cfg, &ctx),
    }
}

struct Context {
    prov: Provenance,
    config: serde_json::Value,
    dir: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        Ok(crate::output::write_json(&self.path(name), &self.prov, &self.config, body)?)
    }
}

fn check(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let opts = CheckOptions {
        transform: cfg.transform_spec()?,
        window: cfg.check_window(model.dimension()),
        samples: cfg.check.samples,
        seed: cfg.seed,
        c0: cfg.check.c0,
    };
    let report = check_assumptions(&model, &opts);
    let text = report.to_text();
    let files = vec![
        ctx.json("check_report.json", &report)?,
        crate::output::write_text(&ctx.path("check_report.txt"), &ctx.prov, &text)?,
    ];
    Ok(Outcome { code: if report.pass { 0 } else { 1 }, files, message: text })
}

const CERT_SAMPLES_MIN: usize = 1024;

fn transformed_model(cfg: &RunConfig, model: Model64, scheme: Scheme) -> Result<TransformedModel<f64>, CliError> {
    let spec = cfg.transform_spec()?;
    let transform = match scheme {
        // The direct scheme never evaluates G.
        Scheme::DirectEm => Transform::identity(model.surface().clone(), spec.epsilon0()).map_err(build_error)?,
        Scheme::TransformedEm => build_transform(
            &model,
            &spec,
            &cfg.check_window(model.dimension()),
            cfg.check.samples.max(CERT_SAMPLES_MIN),
            cfg.seed,
        )
        .map_err(build_error)?,
    };
    TransformedModel::new(model, transform).map_err(|e| CliError::Config(e.to_string()))
}

fn state_columns(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect()
}

#[derive(Serialize)]
struct SimulationSummary {
    scheme: Scheme,
    paths: usize,
    steps: usize,
    h: f64,
    horizon: f64,
    dimension: usize,
    terminal_mean: Vec<f64>,
    terminal_cov: Vec<Vec<f64>>,
    jump_count_mean: f64,
    jump_count_total: usize,
    transform: TransformSummary,
}

fn summarize(paths: &[Path64], dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = paths.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in paths {
        for (m, x) in mean.iter_mut().zip(p.terminal()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![vec![0.0; dim]; dim];
    for p in paths {
        let x = p.terminal();
        for i in 0..dim {
            for j in 0..dim {
                cov[i][j] += (x[i] - mean[i]) * (x[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1.0).max(1.0);
    cov.iter_mut().flatten().for_each(|c| *c /= denom);
    (mean, cov)
}

fn write_path_rows(csv: &mut CsvFile, prefix: Option<usize>, path: &Path64) -> std::io::Result<()> {
    for i in 0..path.len() {
        let mut row = match prefix {
            Some(id) => format!("{id},"),
            None => String::new(),
        };
        row.push_str(&join_floats(std::iter::once(path.times[i]).chain(path.state(i).iter().copied())));
        row.push_str(if path.is_jump[i] { ",1" } else { ",0" });
        csv.row(&row)?;
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let dim = model.dimension();
    let horizon = model.horizon();
    let steps = steps_for("h", cfg.h, horizon)?;
    let tm = transformed_model(cfg, model, cfg.scheme)?;
    let scheme = SchemeConfig::new(steps, cfg.scheme).map_err(solver_error)?;
    let paths = simulate_many(&tm, &scheme, cfg.seed, cfg.paths).map_err(solver_error)?;

    let mut files = Vec::new();
    let state_cols = state_columns("x", dim);
    if cfg.output.per_path_files {
        let sub = ctx.path("paths");
        fs::create_dir_all(&sub)?;
        let cols: Vec<String> = ["t".to_owned()].into_iter().chain(state_cols).chain(["is_jump".to_owned()]).collect();
        for (id, p) in paths.iter().enumerate() {
            let mut csv = CsvFile::create(&sub.join(format!("path_{id:06}.csv")), &ctx.prov, &cols)?;
            write_path_rows(&mut csv, None, p)?;
            files.push(csv.finish()?);
        }
    } else {
        let cols: Vec<String> = ["path_id".to_owned(), "t".to_owned()]
            .into_iter()
            .chain(state_cols)
            .chain(["is_jump".to_owned()])
            .collect();
        let mut csv = CsvFile::create(&ctx.path("paths.csv"), &ctx.prov, &cols)?;
        for (id, p) in paths.iter().enumerate() {
            write_path_rows(&mut csv, Some(id), p)?;
        }
        files.push(csv.finish()?);
    }

    let (terminal_mean, terminal_cov) = summarize(&paths, dim);
    let jump_count_total: usize = paths.iter().map(|p| p.jumps.len()).sum();
    let summary = SimulationSummary {
        scheme: cfg.scheme,
        paths: paths.len(),
        steps,
        h: cfg.h,
        horizon,
        dimension: dim,
        terminal_mean,
        terminal_cov,
        jump_count_mean: jump_count_total as f64 / paths.len() as f64,
        jump_count_total,
        transform: TransformSummary::of(tm.transform()),
    };
    files.push(ctx.json("summary.json", &summary)?);
    let message = format!("simulated {} path(s) with {} steps ({})", paths.len(), steps, cfg.scheme.name());
    Ok(Outcome { code: 0, files, message })
}

fn slope_line(report: &ConvergenceReport) -> String {
    match (report.exact, report.slope) {
        (true, _) => "slope=exact".to_owned(),
        (false, Some(s)) => format!("slope={s:?}"),
        (false, None) => "slope=undefined".to_owned(),
    }
}

fn convergence(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let horizon = model.horizon();
    let reference_steps = steps_for("h_ref", cfg.h_ref, horizon)?;
    let levels: Vec<usize> = cfg
        .levels
        .iter()
        .enumerate()
        .map(|(i, &h)| steps_for(&format!("levels[{i}]"), h, horizon))
        .collect::<Result<_, _>>()?;
    // The reference is always the transformed scheme.
    let tm = transformed_model(cfg, model, Scheme::TransformedEm)?;
    let study = StudyConfig { scheme: cfg.scheme, levels: &levels, reference_steps, paths: cfg.paths, seed: cfg.seed };
    let report = convergence_study(&tm, &study).map_err(analysis_error)?;
    if report.levels.iter().all(|l| l.excluded) {
        return Err(CliError::Numerical("every level failed; see the per-level failure counts".into()));
    }

    let cols: Vec<String> = ["h", "error", "ci_lo", "ci_hi"].iter().map(|s| s.to_string()).collect();
    let mut csv = CsvFile::create(&ctx.path("convergence.csv"), &ctx.prov, &cols)?;
    for l in report.levels.iter().filter(|l| !l.excluded) {
        csv.row(&join_floats([l.h, l.error.mean, l.error.ci_lo, l.error.ci_hi]))?;
    }
    let slope = slope_line(&report);
    csv.comment(&slope)?;
    let files = vec![csv.finish()?, ctx.json("convergence_report.json", &report)?];
    let mut message = format!("{} over {} level(s): {slope}", cfg.scheme.name(), levels.len());
    for f in &report.flags {
        message.push_str(&format!("\nwarning: {f}"));
    }
    Ok(Outcome { code: 0, files, message })
}

fn table(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let dim = model.dimension();
    let spec = cfg.transform_spec()?;
    let (lo, hi, points) = match &cfg.table {
        Some(t) => {
            if t.lo.len() != dim || t.hi.len() != dim {
                return Err(CliError::Config(format!("table.lo and table.hi need {dim} entries")));
            }
            (t.lo.clone(), t.hi.clone(), t.points)
        }
        None => {
            let e = 2.0 * spec.epsilon0();
            (vec![-e; dim], vec![e; dim], 201)
        }
    };
    let tm = transformed_model(cfg, model, Scheme::TransformedEm)?;
    let t = tm.transform();
    let cols: Vec<String> = state_columns("x", dim)
        .into_iter()
        .chain(state_columns("G", dim))
        .chain(["det_jacobian".to_owned(), "phi".to_owned()])
        .collect();
    let mut csv = CsvFile::create(&ctx.path("table.csv"), &ctx.prov, &cols)?;
    let numeric = |e: TransformError| CliError::Numerical(e.to_string());
    for k in 0..points {
        let w = k as f64 / (points - 1) as f64;
        let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + w * (b - a)).collect();
        let g = t.forward(&x).map_err(numeric)?;
        let det = t.jacobian(&x).map_err(numeric)?.determinant();
        let phi = t.phi(&x).map_err(numeric)?;
        csv.row(&join_floats(x.iter().chain(&g).copied().chain([det, phi])))?;
    }
    let message = format!("tabulated G at {points} point(s), c = {:?}", t.params().c());
    Ok(Outcome { code: 0, files: vec![csv.finish()?], message })
}

//! End-to-end acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use jumpsde_core::analysis::{
    build_transform, convergence_study, distribution_compare, ito_residual, poisson_count_gof, StudyConfig,
    TransformSpec,
};
use jumpsde_core::drivers::{sample_jump_train, stream, Channel};
use jumpsde_core::solver::{noise_for, simulate, simulate_many, REFERENCE_LEVEL};
use jumpsde_core::*;
use rand::Rng;

const BIN: &str = env!("CARGO_BIN_EXE_jumpsde");
const EPS0: f64 = 1.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn transformed(model: Model64) -> TransformedModel64 {
    let spec = TransformSpec::Auto { epsilon0: EPS0, kappa_max: 0.5 };
    let window = Window::cube(model.dimension(), 2.0 * EPS0);
    let t = build_transform(&model, &spec, &window, 4096, 11).expect("certified transform");
    TransformedModel::new(model, t).unwrap()
}

fn direct(model: Model64) -> TransformedModel64 {
    let t = Transform::identity(model.surface().clone(), EPS0).unwrap();
    TransformedModel::new(model, t).unwrap()
}

fn presets() -> [(&'static str, TransformedModel64); 2] {
    [
        ("sign_1d", transformed(presets::sign_1d().unwrap())),
        ("cpp_threshold_2d", transformed(presets::cpp_threshold_2d().unwrap())),
    ]
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn uniform_point(rng: &mut impl Rng, dim: usize, r: f64) -> Vec<f64> {
    (0..dim).map(|_| (2.0 * rng.random::<f64>() - 1.0) * r).collect()
}

fn round_trip() -> Outcome {
    let mut worst = 0.0f64;
    for (_, m) in presets() {
        let t = m.transform();
        let mut rng = stream(1, Channel::Sampling, 0);
        for _ in 0..10_000 {
            let x = uniform_point(&mut rng, t.dimension(), 2.0 * EPS0);
            let back = t.inverse(&t.forward(&x).unwrap()).unwrap();
            worst = worst.max(norm_diff(&back, &x));
        }
    }
    outcome(worst <= 1e-10, format!("max ‖G⁻¹(G(x)) − x‖ = {worst:e} (limit 1e-10)"))
}

fn jacobian() -> Outcome {
    let h = 1e-7;
    let mut worst = 0.0f64;
    for (_, m) in presets() {
        let t = m.transform();
        let c = t.params().c();
        let d = t.dimension();
        let mut rng = stream(2, Channel::Sampling, 0);
        let mut found = 0;
        while found < 1000 {
            let x = uniform_point(&mut rng, d, 2.0 * EPS0);
            if t.surface().distance(&x).unwrap() >= c {
                continue;
            }
            found += 1;
            let jac = t.jacobian(&x).unwrap();
            for j in 0..d {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[j] += h;
                xm[j] -= h;
                let (gp, gm) = (t.forward(&xp).unwrap(), t.forward(&xm).unwrap());
                for i in 0..d {
                    worst = worst.max(((gp[i] - gm[i]) / (2.0 * h) - jac[(i, j)]).abs());
                }
            }
        }
    }
    outcome(worst <= 1e-6, format!("max |∇G − FD| = {worst:e} over 1000 tube points per preset (limit 1e-6)"))
}

/// Largest `|f(a) − f(b)|/|a − b|` over `pairs` pairs straddling 0 at separation `delta`.
fn straddling_ratio(f: impl Fn(f64) -> f64, delta: f64, pairs: usize, rng: &mut impl Rng) -> f64 {
    (0..pairs)
        .map(|_| {
            let a = -delta * rng.random::<f64>();
            let b = a + delta;
            (f(b) - f(a)).abs() / delta
        })
        .fold(0.0, f64::max)
}

const LIPSCHITZ_BOUND: f64 = 60.0;

fn cancellation() -> Outcome {
    let m = transformed(presets::sign_1d().unwrap());
    let mu = |z: f64| m.mu_tilde(&[z]).unwrap()[0];
    let d = 1e-12;
    let gap = (mu(d) - mu(-d)).abs();
    let mut rng = stream(3, Channel::Sampling, 0);
    let deltas = [1e-1, 1e-2, 1e-3, 1e-4];
    let ratios: Vec<f64> = deltas.iter().map(|&s| straddling_ratio(mu, s, 2500, &mut rng)).collect();
    let raw = straddling_ratio(|x| m.base().drift().eval(&[x])[0], 1e-4, 10, &mut rng);
    // A surviving discontinuity would grow the ratio tenfold per decade.
    let stable = ratios.windows(2).all(|w| w[1] <= 2.0 * w[0]) && ratios.iter().all(|&r| r <= LIPSCHITZ_BOUND);
    outcome(
        gap <= 1e-8 && stable,
        format!(
            "|μ̃(0+) − μ̃(0−)| = {gap:e} (limit 1e-8); straddling Lipschitz ratios {ratios:.3?} at separations {deltas:?} \
             (growth ≤ 2 per decade, bound {LIPSCHITZ_BOUND}; raw drift gives {raw:.1e})"
        ),
    )
}

fn inverse_jump() -> Outcome {
    let mut worst = 0.0f64;
    for (_, m) in presets() {
        let t = m.transform();
        let base = m.base();
        let mut rng = stream(4, Channel::Sampling, 0);
        let mut marks = stream(4, Channel::Marks, 0);
        for _ in 0..10_000 {
            let z = uniform_point(&mut rng, t.dimension(), 2.0 * EPS0);
            let y = base.marks().sample(&mut marks);
            let x = t.inverse(&z).unwrap();
            let zj: Vec<f64> = z.iter().zip(m.rho_tilde(&z, y).unwrap()).map(|(a, b)| a + b).collect();
            let lhs = t.inverse(&zj).unwrap();
            let rhs: Vec<f64> = x.iter().zip(base.jump().eval(&x, y)).map(|(a, b)| a + b).collect();
            worst = worst.max(norm_diff(&lhs, &rhs));
        }
    }
    outcome(worst <= 1e-10, format!("max inverse-jump defect = {worst:e} over 10⁴ pairs per preset (limit 1e-10)"))
}

fn scheme_equivalence() -> Outcome {
    let base = presets::cpp_threshold_2d().unwrap();
    let drift = PiecewiseDrift::continuous(base.surface().clone(), base.drift().plus().clone()).unwrap();
    let m = transformed(base.with_drift(drift).unwrap());
    let steps = 256;
    let mut identical = 0;
    for i in 0..100 {
        let noise = noise_for(m.base(), 5, i, steps).unwrap();
        let d = simulate(&m, &SchemeConfig::new(steps, Scheme::DirectEm).unwrap(), &noise).unwrap();
        let t = simulate(&m, &SchemeConfig::new(steps, Scheme::TransformedEm).unwrap(), &noise).unwrap();
        let same = d.times.iter().map(|v| v.to_bits()).eq(t.times.iter().map(|v| v.to_bits()))
            && d.states.iter().map(|v| v.to_bits()).eq(t.states.iter().map(|v| v.to_bits()))
            && d.is_jump == t.is_jump;
        identical += usize::from(same);
    }
    outcome(
        m.transform().is_identity() && identical == 100,
        format!("{identical}/100 paths bitwise identical with α ≡ 0"),
    )
}

fn terminal_law(m: &TransformedModel64, scheme: Scheme, seed: u64) -> Vec<Vec<f64>> {
    let cfg = SchemeConfig::new(1024, scheme).unwrap();
    simulate_many(m, &cfg, seed, 10_000).unwrap().into_iter().map(|p| p.terminal().to_vec()).collect()
}

fn distributional() -> Outcome {
    let dirac = presets::sign_1d().unwrap();
    let jump = dirac.jump().clone();
    let two_point = dirac.clone().with_jumps(jump, 1.0, MarkLaw::TwoPoint { v1: 1.0, p: 0.5, v2: -0.5 }).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, model) in [("dirac", dirac), ("two_point", two_point)] {
        let a = terminal_law(&direct(model.clone()), Scheme::DirectEm, 60);
        let b = terminal_law(&transformed(model), Scheme::TransformedEm, 61);
        let cmp = distribution_compare(&a, &b, 0.01).unwrap();
        pass &= cmp.pass;
        detail.push(format!("{name}: D = {:.4} vs critical {:.4}", cmp.statistics[0], cmp.critical_value));
    }
    outcome(pass, format!("{} (10⁴ paths per scheme, h = 2⁻¹⁰, α = 0.01)", detail.join("; ")))
}

fn ito_refinement() -> Outcome {
    let m = transformed(presets::sign_1d().unwrap());
    let means: Vec<f64> = [64usize, 128, 256, 512, 1024]
        .iter()
        .map(|&steps| {
            let cfg = SchemeConfig::new(steps, Scheme::TransformedEm).unwrap();
            let total: f64 = (0..1000u64)
                .map(|i| {
                    let noise = noise_for(m.base(), 7, i, 1024).unwrap();
                    let p = simulate(&m, &cfg, &noise).unwrap();
                    ito_residual(m.transform(), &p, 0).unwrap().last().unwrap().abs()
                })
                .sum();
            total / 1000.0
        })
        .collect();
    let monotone = means.windows(2).all(|w| w[1] < w[0]);
    outcome(
        monotone,
        format!(
            "mean |R(T)| over h = 2⁻⁶…2⁻¹⁰: [{}]",
            means.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn calibration_model() -> Model64 {
    let surface = Hypersurface::hyperplane(vec![1.0], 0.0).unwrap();
    let drift = AffineMap::new(Matrix::identity(1).scaled(-1.0), vec![0.0]).unwrap();
    Model::new(
        PiecewiseDrift::continuous(surface, drift).unwrap(),
        Diffusion::scalar(1, 1.0),
        JumpCoefficient::None,
        0.0,
        MarkLaw::Dirac { value: 1.0 },
        vec![1.0],
        1.0,
    )
    .unwrap()
}

fn strong_order() -> Outcome {
    let levels = [32usize, 64, 128, 256, 512];
    let study = |m: &TransformedModel64, scheme| {
        let cfg =
            StudyConfig { scheme, levels: &levels, reference_steps: 1 << REFERENCE_LEVEL, paths: 10_000, seed: 8 };
        convergence_study(m, &cfg).unwrap()
    };
    let calib = study(&transformed(calibration_model()), Scheme::DirectEm);
    let sign = study(&transformed(presets::sign_1d().unwrap()), Scheme::TransformedEm);
    let (c, s) = (calib.slope.unwrap_or(f64::NAN), sign.slope.unwrap_or(f64::NAN));
    outcome(
        (c - 1.0).abs() <= 0.15 && s >= 0.4,
        format!("calibration order {c:.3} (target 1.0 ± 0.15); sign_1d transformed order {s:.3} (target ≥ 0.4)"),
    )
}

fn driver_statistics() -> Outcome {
    let lambda = 1.0;
    let marks = MarkLaw::Dirac { value: 1.0 };
    let counts: Vec<usize> = (0..100_000u64)
        .map(|i| {
            let mut times = stream(9, Channel::JumpTimes, i);
            let mut m = stream(9, Channel::Marks, i);
            sample_jump_train(lambda, &marks, 1.0, &mut times, &mut m).len()
        })
        .collect();
    let gof = poisson_count_gof(&counts, lambda, 0.01).unwrap();
    outcome(
        gof.pass && gof.mean_pass,
        format!(
            "χ² = {:.2} on {} dof (critical {:.2}); mean N_T = {:.4} in [{:.4}, {:.4}]",
            gof.statistic,
            gof.degrees_of_freedom,
            gof.critical_value,
            gof.sample_mean,
            gof.mean_interval.0,
            gof.mean_interval.1
        ),
    )
}

fn cli(args: &[&str], config: &Path, out: &Path) -> i32 {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn assumption_gate(dir: &Path) -> Outcome {
    let degenerate = dir.join("sigma0.json");
    let unit = dir.join("sigma1.json");
    fs::write(&degenerate, r#"{"model":{"preset":"sign_1d","sigma":0.0}}"#).unwrap();
    fs::write(&unit, r#"{"model":{"preset":"sign_1d","sigma":1.0}}"#).unwrap();
    let code0 = cli(&["check"], &degenerate, &dir.join("gate0"));
    let code1 = cli(&["check"], &unit, &dir.join("gate1"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("gate1/check_report.json")).unwrap()).unwrap();
    let kappa = report["transform"]["kappa"].as_f64().unwrap_or(f64::NAN);
    let clause = report["clauses"].as_array().unwrap().iter().find(|c| c["name"] == "non_parallelity").unwrap();
    let min = clause["value"].as_f64().unwrap();
    outcome(
        code0 == 1 && code1 == 0 && kappa <= 0.5 && min == 1.0,
        format!("σ ≡ 0 exits {code0}; σ ≡ 1 exits {code1} with κ = {kappa:.4} and min ‖σᵀn‖ = {min}"),
    )
}

fn files_under(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(dir: &Path) -> Outcome {
    let runs: [(&str, &str, &str); 4] = [
        ("check", "{\"model\":{\"preset\":\"cpp_threshold_2d\"}}", ""),
        (
            "simulate",
            "{\"model\":{\"preset\":\"cpp_threshold_2d\"},\"h\":0.0078125,\"paths\":64,\"output\":{\"per_path_files\":true}}",
            "5",
        ),
        (
            "convergence",
            "{\"model\":{\"preset\":\"sign_1d\"},\"levels\":[0.0625,0.03125,0.015625],\"h_ref\":0.0009765625,\"paths\":64}",
            "6",
        ),
        ("table", "{\"model\":{\"preset\":\"cpp_threshold_2d\"},\"table\":{\"lo\":[-1,-1],\"hi\":[1,0.5],\"points\":101}}", ""),
    ];
    let mut failures = Vec::new();
    let mut compared = 0;
    for (cmd, text, seed) in runs {
        let cfg = dir.join(format!("{cmd}.json"));
        fs::write(&cfg, text).unwrap();
        let outputs: Vec<_> = [("1", "a"), ("1", "b"), ("3", "c")]
            .iter()
            .map(|(workers, tag)| {
                let out = dir.join(format!("{cmd}_{tag}"));
                let mut args = vec![cmd, "--workers", workers];
                if !seed.is_empty() {
                    args.extend(["--seed", seed]);
                }
                let code = cli(&args, &cfg, &out);
                (code, files_under(&out))
            })
            .collect();
        compared += outputs[0].1.len();
        if outputs[0].0 != 0 || outputs.iter().any(|o| o != &outputs[0]) || outputs[0].1.is_empty() {
            failures.push(cmd);
        }
    }
    outcome(
        failures.is_empty(),
        format!("{compared} artifact(s) byte-identical across reruns and 1 vs 3 workers; mismatches: {failures:?}"),
    )
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    type Criterion<'a> = (Duration, Box<dyn Fn() -> Outcome + 'a>);
    let secs = Duration::from_secs;
    let criteria: Vec<Criterion> = vec![
        (secs(1), Box::new(round_trip)),
        (secs(1), Box::new(jacobian)),
        (secs(5), Box::new(cancellation)),
        (secs(2), Box::new(inverse_jump)),
        (secs(1), Box::new(scheme_equivalence)),
        (secs(120), Box::new(distributional)),
        (secs(120), Box::new(ito_refinement)),
        (secs(300), Box::new(strong_order)),
        (secs(10), Box::new(driver_statistics)),
        (secs(5), Box::new(|| assumption_gate(dir))),
        (Duration::MAX, Box::new(|| determinism(dir))),
    ];
    let mut failed = Vec::new();
    for (i, (budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= *budget;
        let limit = if *budget == Duration::MAX { String::new() } else { format!(", limit {}s", budget.as_secs()) };
        let line = format!(
            "criterion {}: {} [{:.2}s{limit}] {}\n",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            o.detail
        );
        std::io::stderr().write_all(line.as_bytes()).unwrap();
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

mod common;

use std::sync::LazyLock;

use common::*;
use jumpsde_core::analysis::*;
use jumpsde_core::solver::{noise_for, simulate};
use jumpsde_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SIGN: LazyLock<TransformedModel64> = LazyLock::new(sign_1d);
static CPP: LazyLock<TransformedModel64> = LazyLock::new(cpp_2d);

/// cpp preset with the drift discontinuity removed.
fn continuous_cpp() -> TransformedModel64 {
    let base = presets::cpp_threshold_2d().unwrap();
    let drift = PiecewiseDrift::continuous(base.surface().clone(), base.drift().plus().clone()).unwrap();
    transformed(base.with_drift(drift).unwrap(), auto_spec())
}

fn path(m: &TransformedModel64, steps: usize, scheme: Scheme, index: u64) -> Path64 {
    let noise = noise_for(m.base(), 77, index, 1024).unwrap();
    simulate(m, &SchemeConfig::new(steps, scheme).unwrap(), &noise).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[test]
fn identity_residual_is_round_off() {
    let m = continuous_cpp();
    assert!(m.transform().is_identity());
    for index in 0..20 {
        let p = path(&m, 64, Scheme::TransformedEm, index);
        for k in 0..2 {
            let r = ito_residual(m.transform(), &p, k).unwrap();
            assert_eq!(r[0], 0.0);
            assert!(max_abs(&r) < 1e-12, "{}", max_abs(&r));
        }
    }
}

#[test]
fn quadratic_residual_is_round_off() {
    let q = Quadratic { a: Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, -1.0]]).unwrap(), b: vec![0.3, -0.7] };
    for index in 0..20 {
        let p = path(&CPP, 128, Scheme::DirectEm, index);
        assert!(max_abs(&ito_residual_with(&q, &p).unwrap()) < 1e-11);
    }
}

#[test]
fn transform_residual_shrinks_with_the_step() {
    let mean_terminal = |steps| {
        let total: f64 = (0..200)
            .map(|i| {
                let p = path(&SIGN, steps, Scheme::TransformedEm, i);
                ito_residual(SIGN.transform(), &p, 0).unwrap().last().unwrap().abs()
            })
            .sum();
        total / 200.0
    };
    let coarse = mean_terminal(16);
    let fine = mean_terminal(1024);
    assert!(fine < coarse / 4.0, "coarse {coarse}, fine {fine}");
}

#[test]
fn inverse_component_derivatives_match_finite_differences() {
    let t = CIRCLE_T.transform();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let th: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let r = 1.0 + (rng.random::<f64>() - 0.5) * 0.4;
        let z = vec![r * th.cos(), r * th.sin()];
        for k in 0..2 {
            let f = GInverseComponent::new(t, k).unwrap();
            let g = f.gradient(&z).unwrap();
            let h = 1e-6;
            for j in 0..2 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[j] += h;
                zm[j] -= h;
                let fd = (f.value(&zp).unwrap() - f.value(&zm).unwrap()) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-6, "{fd} vs {}", g[j]);
            }
        }
    }
    assert!(GInverseComponent::new(t, 2).is_err());
    assert!(GComponent::new(t, 5).is_err());
}

static CIRCLE_T: LazyLock<TransformedModel64> = LazyLock::new(circle);

#[test]
fn constant_coefficients_converge_exactly() {
    let base = presets::threshold_affine(2).unwrap();
    let drift = PiecewiseDrift::continuous(base.surface().clone(), AffineMap::constant(vec![0.5, -0.25])).unwrap();
    let m = transformed(base.with_drift(drift).unwrap(), auto_spec());
    let report = convergence_study(
        &m,
        &StudyConfig { scheme: Scheme::TransformedEm, levels: &[4, 8, 16], reference_steps: 64, paths: 32, seed: 1 },
    )
    .unwrap();
    assert!(report.exact, "{report:?}");
    assert_eq!(report.order_label(), "exact");
    assert!(report.slope.is_none());
}

#[test]
fn sign_study_has_positive_order() {
    let report = convergence_study(
        &SIGN,
        &StudyConfig {
            scheme: Scheme::TransformedEm,
            levels: &[16, 32, 64, 128],
            reference_steps: 2048,
            paths: 200,
            seed: 9,
        },
    )
    .unwrap();
    let slope = report.slope.unwrap();
    assert!(slope > 0.2 && slope < 1.5, "slope {slope}");
    assert!(report.levels.iter().all(|l| l.failures == 0 && l.error.mean > 0.0));
    let first = &report.levels[0];
    let last = report.levels.last().unwrap();
    assert!(last.error.mean < first.error.mean);
    assert!(first.error.ci_lo <= first.error.mean && first.error.mean <= first.error.ci_hi);
}

#[test]
fn study_configuration_is_validated() {
    let cfg = |levels: &'static [usize]| StudyConfig {
        scheme: Scheme::DirectEm,
        levels,
        reference_steps: 64,
        paths: 4,
        seed: 0,
    };
    assert!(convergence_study(&SIGN, &cfg(&[4, 8])).is_err());
    assert!(convergence_study(&SIGN, &cfg(&[4, 8, 48])).is_err());
    assert!(convergence_study(&SIGN, &StudyConfig { paths: 0, ..cfg(&[4, 8, 16]) }).is_err());
}

/// Brute-force `sup |F_a − F_b|` over all sample points.
fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|&x| (cdf(a, x) - cdf(b, x)).abs()).fold(0.0, f64::max)
}

#[test]
fn ks_statistic_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let n = rng.random_range(1..60);
        let m = rng.random_range(1..60);
        // coarse values so that ties occur
        let a: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 10.0).floor()).collect();
        let b: Vec<f64> = (0..m).map(|_| (rng.random::<f64>() * 10.0).floor() + 0.5 * rng.random::<f64>()).collect();
        assert!((ks_statistic(&a, &b).unwrap() - ks_brute(&a, &b)).abs() < 1e-15);
    }
}

#[test]
fn ks_comparison_separates_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let draw = |rng: &mut ChaCha8Rng, shift: f64| -> Vec<Vec<f64>> {
        (0..2000).map(|_| vec![rng.random::<f64>() + shift, rng.random::<f64>()]).collect()
    };
    let a = draw(&mut rng, 0.0);
    let b = draw(&mut rng, 0.0);
    let c = draw(&mut rng, 0.1);
    let same = distribution_compare(&a, &b, 0.01).unwrap();
    assert!(same.pass, "{same:?}");
    let shifted = distribution_compare(&a, &c, 0.01).unwrap();
    assert!(!shifted.pass);
    assert!((same.critical_value - ks_critical_value(0.005, 2000, 2000)).abs() < 1e-15);
    // Tabulated two-sample coefficient at α = 0.05 is 1.358.
    assert!((ks_critical_value(0.05, 100, 100) / (0.02f64).sqrt() - 1.358).abs() < 1e-3);
}

#[test]
fn direct_and_transformed_laws_agree_at_fine_resolution() {
    let terminal =
        |scheme| -> Vec<Vec<f64>> { (0..1500).map(|i| path(&CPP, 256, scheme, i).terminal().to_vec()).collect() };
    let cmp = distribution_compare(&terminal(Scheme::DirectEm), &terminal(Scheme::TransformedEm), 0.01).unwrap();
    assert!(cmp.pass, "{cmp:?}");
}

fn options(dim: usize) -> CheckOptions<f64> {
    CheckOptions { transform: auto_spec(), window: Window::cube(dim, 2.0), samples: 512, seed: 3, c0: 1e-6 }
}

#[test]
fn presets_satisfy_the_assumptions() {
    for preset in Preset::ALL {
        let model = preset.build::<f64>(None).unwrap();
        let report = check_assumptions(&model, &options(model.dimension()));
        assert!(report.pass, "{}: {}", preset.name(), report.to_text());
        assert!(report.clause("kappa").unwrap().value <= 0.5);
    }
}

#[test]
fn tangential_noise_violates_non_parallelity() {
    // σ only moves along the surface {x₁ = 0}.
    let model = presets::threshold_affine(2)
        .unwrap()
        .with_diffusion(Diffusion::Constant(Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap()))
        .unwrap();
    let report = check_assumptions(&model, &options(2));
    assert!(!report.pass);
    assert!(!report.clause("non_parallelity").unwrap().pass);
    assert!(!report.clause("kappa").unwrap().pass);
    assert!(report.transform_error.is_some());
}

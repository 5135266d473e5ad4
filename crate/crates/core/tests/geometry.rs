use jumpsde_core::*;
use proptest::prelude::*;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Closest of `n` equally spaced points on the unit circle.
fn brute_circle(x: &[f64], n: usize) -> (f64, Vec<f64>) {
    (0..n)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / n as f64;
            let p = vec![th.cos(), th.sin()];
            (dist(x, &p), p)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
}

fn circle() -> Hypersurface64 {
    Hypersurface::sphere(vec![0.0, 0.0], 1.0).unwrap()
}

#[test]
fn circle_distance_and_projection_match_brute_force() {
    let s = circle();
    let (d, _) = brute_circle(&[2.0, 0.0], 100_000);
    // (2, 0) sits on the edge of the declared tube: only a lower bound is reported.
    match s.distance(&[2.0, 0.0]) {
        Err(GeometryError::OutsideTube { lower_bound }) => assert!((lower_bound - d).abs() < 1e-8),
        other => panic!("{other:?}"),
    }
    let field = geometry::Sphere::<f64> { center: vec![0.0, 0.0], radius: 1.0 };
    let wide = Hypersurface::level_set(std::sync::Arc::new(field), 1.5, 1.0).unwrap();
    assert!((wide.distance(&[2.0, 0.0]).unwrap() - d).abs() < 1e-8);

    let tube = Tube::new(&s, 0.9).unwrap();
    let p = s.project(&[0.5, 0.0], &tube).unwrap();
    let (_, q) = brute_circle(&[0.5, 0.0], 100_000);
    assert!(dist(&p, &q) < 1e-4);
    assert!(dist(&p, &[1.0, 0.0]) < 1e-12);
}

#[test]
fn hyperplane_examples() {
    let s = Hypersurface::hyperplane(vec![1.0, 0.0], 0.0).unwrap();
    assert_eq!(s.distance(&[3.0, 4.0]).unwrap(), 3.0);
    assert_eq!(s.distance(&[0.0, 7.0]).unwrap(), 0.0);
    let tube = Tube::new(&s, 5.0).unwrap();
    assert_eq!(s.project(&[3.0, 4.0], &tube).unwrap(), vec![0.0, 4.0]);
    assert_eq!(s.project(&[0.0, 7.0], &tube).unwrap(), vec![0.0, 7.0]);
    assert_eq!(s.unit_normal(&[0.0, 4.0]).unwrap(), vec![1.0, 0.0]);
    assert!(s.project(&[6.0, 0.0], &tube).is_err());
    let c = circle();
    assert_eq!(c.unit_normal(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
    assert_eq!(c.unit_normal(&[0.0, -1.0]).unwrap(), vec![0.0, -1.0]);
    assert!(c.unit_normal(&[0.5, 0.0]).is_err());
}

fn unit_normal_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d).prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hyperplane_decomposition(raw in unit_normal_vec(3), b in -2.0f64..2.0, x in prop::collection::vec(-5.0f64..5.0, 3)) {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let a: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let s = Hypersurface::hyperplane(a.clone(), b).unwrap();
        let tube = Tube::new(&s, 100.0).unwrap();
        let p = s.project(&x, &tube).unwrap();
        let sd: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum::<f64>() - b;
        for i in 0..3 {
            prop_assert!((x[i] - (p[i] + sd * a[i])).abs() < 1e-13);
        }
        prop_assert!((s.distance(&x).unwrap() - sd.abs()).abs() < 1e-13);
        let pp = s.project(&p, &tube).unwrap();
        prop_assert!(dist(&pp, &p) < 1e-14);
    }

    #[test]
    fn level_set_projection_is_idempotent_and_orthogonal(th in 0.0f64..std::f64::consts::TAU, r in 0.2f64..1.8) {
        let s = circle();
        let tube = Tube::new(&s, 0.85).unwrap();
        let x = vec![r * th.cos(), r * th.sin()];
        prop_assume!((r - 1.0).abs() < 0.8);
        let p = s.project(&x, &tube).unwrap();
        let pp = s.project(&p, &tube).unwrap();
        prop_assert!(dist(&p, &pp) < 1e-12);
        prop_assert!((dist(&p, &[0.0, 0.0]) - 1.0).abs() < 1e-12);
        prop_assert!((s.distance(&x).unwrap() - (r - 1.0).abs()).abs() < 1e-12);
        let n = s.unit_normal(&p).unwrap();
        let diff: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a - b).collect();
        let len = dist(&x, &p);
        prop_assume!(len > 1e-9);
        let cos = (diff[0] * n[0] + diff[1] * n[1]).abs() / len;
        prop_assert!(cos >= 1.0 - 1e-8);
    }
}

mod common;

use mixreg::ellipsoid::{chi2_quantile, Ellipsoid, EllipsoidKind};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use common::*;

fn random_ellipse(rng: &mut impl Rng) -> Ellipsoid {
    let g = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let shape = &g * g.transpose() + DMatrix::identity(2, 2) * 0.2;
    Ellipsoid {
        center: DVector::from_fn(2, |_, _| rng.random::<f64>() * 10.0 - 5.0),
        shape,
        threshold: 0.5 + 5.0 * rng.random::<f64>(),
        kind: EllipsoidKind::Ls,
        repaired: false,
    }
}

/// Hit-or-miss integration over the axis-aligned bounding box.
fn hit_or_miss_area(e: &Ellipsoid, draws: usize, rng: &mut impl Rng) -> f64 {
    let cov = e.shape.clone().try_inverse().unwrap() * e.threshold;
    let half = [cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt()];
    let mut hits = 0usize;
    for _ in 0..draws {
        let p = DVector::from_fn(2, |i, _| {
            e.center[i] + half[i] * (2.0 * rng.random::<f64>() - 1.0)
        });
        if e.contains(&p).unwrap() {
            hits += 1;
        }
    }
    4.0 * half[0] * half[1] * hits as f64 / draws as f64
}

#[test]
fn volume_matches_hit_or_miss() {
    let mut rng = rng(10);
    for _ in 0..10 {
        let e = random_ellipse(&mut rng);
        let mc = hit_or_miss_area(&e, 400_000, &mut rng);
        let v = e.volume().unwrap();
        assert!((mc - v).abs() < 0.01 * v, "MC {mc} vs {v}");
    }
}

#[test]
fn chi2_quantiles_against_independent_oracles() {
    let q2 = chi2_quantile(2, 0.95).unwrap();
    assert!((q2 + 2.0 * 0.05f64.ln()).abs() < 1e-9);
    let z = normal_quantile(0.975);
    let q1 = chi2_quantile(1, 0.95).unwrap();
    assert!((q1 - z * z).abs() < 1e-6, "{q1} vs {}", z * z);
    // χ²₃ via its closed-form CDF 2Φ(√x) − 1 − √(2x/π) e^{−x/2}.
    let q3 = chi2_quantile(3, 0.9).unwrap();
    let cdf3 = 2.0 * normal_cdf(q3.sqrt())
        - 1.0
        - (2.0 * q3 / std::f64::consts::PI).sqrt() * (-q3 / 2.0).exp();
    assert!((cdf3 - 0.9).abs() < 1e-8, "{cdf3}");
}

#[test]
fn containment_is_translation_invariant() {
    let mut rng = rng(11);
    for _ in 0..50 {
        let e = random_ellipse(&mut rng);
        let p = DVector::from_fn(2, |_, _| rng.random::<f64>() * 10.0 - 5.0);
        let shift = DVector::from_fn(2, |_, _| rng.random::<f64>() * 100.0 - 50.0);
        let moved = Ellipsoid {
            center: &e.center + &shift,
            ..e.clone()
        };
        assert_eq!(
            e.contains(&p).unwrap(),
            moved.contains(&(&p + &shift)).unwrap()
        );
        assert!(e.contains(&e.center).unwrap());
    }
}

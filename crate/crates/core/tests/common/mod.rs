//! Helpers and independent oracles shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

use mixreg::model::{flatten, ComponentParams};
use mixreg::simlab::{gen_sample, replication_rng, ExperimentConfig};
use mixreg::{MixtureSample, TauVector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn experiment(id: u8, n: usize, reps: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig::experiment(id, n, reps, seed).expect("preset exists")
}

/// Sample of replication `r` of `cfg`.
pub fn sample(cfg: &ExperimentConfig, r: u64) -> MixtureSample {
    let mut rng = replication_rng(cfg.base_seed, r);
    gen_sample(cfg, &mut rng)
}

/// Data-generating τ of a simulation config (scalar regressor plus intercept).
pub fn true_tau(cfg: &ExperimentConfig) -> TauVector {
    let comps: Vec<ComponentParams> = cfg
        .components
        .iter()
        .map(|c| ComponentParams {
            b: DVector::from_vec(vec![c.b0, c.b1]),
            sigma2: c.sigma * c.sigma,
            mu: DVector::from_element(1, c.mu),
            cov: DMatrix::from_element(1, 1, c.spread * c.spread),
        })
        .collect();
    flatten(&comps).unwrap()
}

/// A valid τ near `tau`: every coordinate jittered, variances kept positive.
pub fn jitter(tau: &TauVector, scale: f64, rng: &mut impl Rng) -> TauVector {
    let mut out = tau.clone();
    for m in 0..tau.layout.m {
        for i in tau.layout.coef_range(m).chain(tau.layout.mean_range(m)) {
            out.values[i] += scale * (2.0 * rng.random::<f64>() - 1.0);
        }
        for i in tau.layout.cov_range(m) {
            out.values[i] *= 1.0 + scale * (2.0 * rng.random::<f64>() - 1.0);
        }
        let v = tau.layout.variance_index(m);
        out.values[v] *= 1.0 + scale * (2.0 * rng.random::<f64>() - 1.0);
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gradient by Richardson-extrapolated central differences.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let h = 1e-3 * (1.0 + x[i].abs());
        let central = |h: f64| {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        };
        let (d1, d2) = (central(h), central(h / 2.0));
        g[i] = (4.0 * d2 - d1) / 3.0;
    }
    g
}

/// Ordinary least squares via QR, independent of the normal equations.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty).unwrap()
}

/// Standard normal CDF by composite Simpson quadrature of the density.
pub fn normal_cdf(z: f64) -> f64 {
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (a, b) = (0.0, z.abs());
    let steps = 20_000;
    let h = (b - a) / steps as f64;
    let mut acc = phi(a) + phi(b);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * phi(a + i as f64 * h);
    }
    let half = acc * h / 3.0;
    if z >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Normal quantile by bisection on [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sample mean and (n − 1)-normalized variance.
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Median of a copy of `v`.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

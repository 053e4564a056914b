mod common;

use mixreg::emfit::{em_fit, em_iterate, em_weights, pilot_estimates, EmConfig};
use mixreg::likelihood::log_likelihood;
use mixreg::model::unflatten;
use mixreg::MixtureSample;
use nalgebra::{DMatrix, DVector};

use common::*;

#[test]
fn loglik_trace_never_decreases() {
    for r in 0..30u64 {
        let cfg = experiment(1, 1000, 30, 3);
        let s = sample(&cfg, r);
        let pilot = pilot_estimates(&s).unwrap();
        let fit = em_fit(&s, &pilot.tau, &EmConfig::default()).unwrap();
        assert_eq!(fit.loglik_trace.len(), fit.iters + 1);
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "replication {r}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn single_steps_ascend_from_random_starts() {
    let cfg = experiment(3, 500, 1, 8);
    let s = sample(&cfg, 0);
    let mut rng = rng(4);
    for _ in 0..20 {
        let tau = jitter(&true_tau(&cfg), 0.4, &mut rng);
        let next = em_iterate(&s, &tau, &EmConfig::default()).unwrap();
        let before = log_likelihood(&s, &tau).unwrap();
        let after = log_likelihood(&s, &next).unwrap();
        assert!(after >= before - 1e-8, "{before} -> {after}");
    }
}

#[test]
fn posteriors_are_distributions() {
    let cfg = experiment(3, 800, 1, 2);
    let s = sample(&cfg, 0);
    let w = em_weights(&s, &jitter(&true_tau(&cfg), 0.3, &mut rng(1))).unwrap();
    for j in 0..s.n() {
        let row = w.row(j);
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}

/// Direct Bayes-rule oracle for the posterior of one observation.
fn bayes_posterior(
    s: &MixtureSample,
    cfg: &mixreg::simlab::ExperimentConfig,
    j: usize,
) -> Vec<f64> {
    let x = s.x[(j, 1)];
    let dens: Vec<f64> = cfg
        .components
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let zx = (x - c.mu) / c.spread;
            let ze = (s.y[j] - c.b0 - c.b1 * x) / c.sigma;
            s.p[(j, m)] * (-0.5 * (zx * zx + ze * ze)).exp() / (c.spread * c.sigma)
        })
        .collect();
    let total: f64 = dens.iter().sum();
    dens.iter().map(|d| d / total).collect()
}

#[test]
fn posteriors_match_bayes_rule() {
    let cfg = experiment(1, 1000, 1, 12);
    let s = sample(&cfg, 0);
    let latent = s.latent.clone().unwrap();
    let w = em_weights(&s, &true_tau(&cfg)).unwrap();
    let (mut decisive, mut recognized) = (0, 0);
    for j in 0..s.n() {
        let oracle = bayes_posterior(&s, &cfg, j);
        for m in 0..2 {
            assert!((w[(j, m)] - oracle[m]).abs() < 1e-12);
        }
        // Away from where the two regression lines cross, membership is
        // essentially certain.
        let x = s.x[(j, 1)];
        if (3.5 + 2.5 * x).abs() > 8.0 {
            decisive += 1;
            if (w[(j, latent[j])] - 1.0).abs() < 1e-3 {
                recognized += 1;
            }
        }
    }
    assert!(decisive > s.n() / 2);
    assert!(
        recognized as f64 >= 0.99 * decisive as f64,
        "{recognized}/{decisive}"
    );
}

#[test]
fn experiment_one_converges_near_truth() {
    let seeds = 100;
    let (mut converged, mut close) = (0, 0);
    for r in 0..seeds {
        let cfg = experiment(1, 1000, seeds as usize, 5);
        let s = sample(&cfg, r);
        let pilot = pilot_estimates(&s).unwrap();
        let cfg_em = EmConfig {
            max_iters: 200,
            ..EmConfig::default()
        };
        let Ok(fit) = em_fit(&s, &pilot.tau, &cfg_em) else {
            continue;
        };
        if fit.converged {
            converged += 1;
        }
        let b1 = fit.tau.coef(0);
        if (b1 - DVector::from_vec(vec![-3.0, -0.5])).norm() < 0.2 {
            close += 1;
        }
    }
    assert!(converged >= 95, "converged {converged}/100");
    assert!(close >= 90, "close {close}/100");
}

#[test]
fn components_keep_their_labels() {
    let cfg = experiment(3, 5000, 10, 6);
    for r in 0..10 {
        let s = sample(&cfg, r);
        let pilot = pilot_estimates(&s).unwrap();
        let fit = em_fit(&s, &pilot.tau, &EmConfig::default()).unwrap();
        for k in 0..2 {
            let own = (fit.tau.coef(k) - cfg.true_coefs(k)).norm();
            let other = (fit.tau.coef(k) - cfg.true_coefs(1 - k)).norm();
            assert!(own < other, "replication {r} component {k}");
        }
    }
}

#[test]
fn pilot_means_are_root_n_consistent() {
    let spread = |n: usize| {
        let cfg = experiment(1, n, 60, 13);
        let errs: Vec<f64> = (0..60)
            .map(|r| {
                let pilot = pilot_estimates(&sample(&cfg, r)).unwrap();
                unflatten(&pilot.tau)[0].mu[0] + 2.0
            })
            .collect();
        (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt()
    };
    let (small, large) = (spread(1_000), spread(100_000));
    let ratio = small / large;
    assert!((5.0..20.0).contains(&ratio), "rmse {small} -> {large}");
    assert!(large < 0.05, "rmse at n=1e5: {large}");
}

#[test]
fn pilot_covariances_are_positive_definite() {
    for r in 0..20 {
        let cfg = experiment(3, 300, 20, 14);
        let s = sample(&cfg, r);
        let pilot = pilot_estimates(&s).unwrap();
        for c in unflatten(&pilot.tau) {
            assert!(c.sigma2 > 0.0);
            assert!(c.cov.cholesky().is_some());
        }
    }
}

#[test]
fn single_component_em_is_closed_form() {
    let n = 300;
    let mut rng = rng(21);
    let mut normal = mixreg::simlab::NormalSource::new(&mut rng);
    let xs: Vec<[f64; 2]> = (0..n)
        .map(|_| [normal.standard(), 2.0 + normal.standard()])
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| 1.0 + 0.5 * x[0] - 2.0 * x[1] + 0.3 * normal.standard())
        .collect();
    let x = DMatrix::from_fn(n, 3, |j, c| if c == 0 { 1.0 } else { xs[j][c - 1] });
    let s = MixtureSample::new(DVector::from_vec(ys), x, DMatrix::from_element(n, 1, 1.0)).unwrap();

    let b = ols(&s.x, &s.y);
    let sigma2 = (&s.y - &s.x * &b).norm_squared() / n as f64;
    let z = s.x.columns(1, 2).into_owned();
    let mu = z.row_mean().transpose();
    let centered = DMatrix::from_fn(n, 2, |j, c| z[(j, c)] - mu[c]);
    let cov = centered.transpose() * &centered / n as f64;

    let pilot = pilot_estimates(&s).unwrap();
    let fit = em_fit(&s, &pilot.tau, &EmConfig::default()).unwrap();
    assert!(fit.converged && fit.iters <= 2, "iters {}", fit.iters);
    let c = &unflatten(&fit.tau)[0];
    assert!((&c.b - &b).amax() < 1e-10);
    assert!((c.sigma2 - sigma2).abs() < 1e-10);
    assert!((&c.mu - &mu).amax() < 1e-10);
    assert!((&c.cov - &cov).amax() < 1e-10);
}

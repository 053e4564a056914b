//! Moment-based pilot estimates and the EM algorithm for the Gaussian
//! mixture of regressions with known mixing probabilities.
//!
//! The M-step follows the classical update order: the new regressor
//! covariance is centered at the previous mean and the new error variance
//! uses residuals at the previous coefficients. Each partial update maximizes
//! the expected complete-data log-likelihood in its own block, so the
//! observed log-likelihood still never decreases.
//!
//! Components are never relabelled: the known probabilities `p_j^m` anchor
//! component `m` of the output to component `m` of the pilot.

use nalgebra::{DMatrix, DVector};

use crate::error::{MixregError, Result};
use crate::likelihood::{log_likelihood, Prepared};
use crate::linalg::{solve_checked, CompensatedSum, MAX_CONDITION};
use crate::lsfit::{fit_ls, LsFit};
use crate::mixweights::psd_repair;
use crate::model::{flatten, unflatten, ComponentParams, MixtureSample, TauVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Stop once the max-norm change of τ drops below this.
    pub delta: f64,
    pub max_iters: usize,
    /// Lower clamp for error variances and regressor covariance eigenvalues.
    pub variance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            max_iters: 500,
            variance_floor: 1e-10,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || self.max_iters == 0 || !(self.variance_floor > 0.0) {
            return Err(MixregError::Config(format!(
                "EM config needs delta > 0, max_iters ≥ 1, variance_floor > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub tau: TauVector,
    pub iters: usize,
    pub converged: bool,
    /// L(τ⁽⁰⁾), L(τ⁽¹⁾), …, L(τ_final).
    pub loglik_trace: Vec<f64>,
}

/// Pilot τ⁽⁰⁾ built from the minimax-weighted moments.
#[derive(Debug, Clone)]
pub struct PilotEstimate {
    pub tau: TauVector,
    /// Σ̂⁽⁰⁾_m needed an eigenvalue repair.
    pub cov_repaired: Vec<bool>,
    /// σ̂²⁽⁰⁾_m was clamped at the floor.
    pub sigma2_clamped: Vec<bool>,
}

impl PilotEstimate {
    pub fn repaired(&self) -> bool {
        self.cov_repaired
            .iter()
            .chain(self.sigma2_clamped.iter())
            .any(|&f| f)
    }
}

/// Runs the LS fit and assembles the pilot with the default variance floor.
pub fn pilot_estimates(s: &MixtureSample) -> Result<PilotEstimate> {
    let ls = fit_ls(s)?;
    Ok(pilot_from_ls(s, &ls, EmConfig::default().variance_floor))
}

/// Pilot from an existing LS fit: b̂ from LS, μ̂ and Σ̂ as minimax-weighted
/// mean and centered second moment, σ̂² as the weighted mean squared residual.
///
/// The signed minimax weights can make Σ̂ indefinite or σ̂² negative. Flooring
/// such a value would start EM from a spike that starves the component, so
/// those moments are recomputed with the (nonnegative) concentrations
/// p_j^m as weights instead, and the fallback is flagged.
pub fn pilot_from_ls(s: &MixtureSample, ls: &LsFit, floor: f64) -> PilotEstimate {
    let mut comps = Vec::with_capacity(s.dims.m);
    let mut cov_repaired = Vec::with_capacity(s.dims.m);
    let mut sigma2_clamped = Vec::with_capacity(s.dims.m);
    for (w, fit) in ls.weights.iter().zip(ls.components.iter()) {
        let signed = weighted_moments(s, w.a.as_slice(), &fit.bhat);
        let needs_cov = signed
            .cov
            .symmetric_eigenvalues()
            .iter()
            .any(|&v| !(v >= floor));
        let needs_sigma2 = !(signed.sigma2 >= floor);
        let fallback = (needs_cov || needs_sigma2)
            .then(|| weighted_moments(s, s.p.column(w.k).as_slice(), &fit.bhat));
        let (mu, cov) = match (&fallback, needs_cov) {
            (Some(f), true) => (f.mu.clone(), psd_repair(&f.cov, floor).0),
            _ => (signed.mu, signed.cov),
        };
        let sigma2 = match (&fallback, needs_sigma2) {
            (Some(f), true) => f.sigma2.max(floor),
            _ => signed.sigma2,
        };
        cov_repaired.push(needs_cov);
        sigma2_clamped.push(needs_sigma2);
        comps.push(ComponentParams {
            b: fit.bhat.clone(),
            sigma2,
            mu,
            cov,
        });
    }
    PilotEstimate {
        tau: flatten(&comps).expect("components share dimensions"),
        cov_repaired,
        sigma2_clamped,
    }
}

struct Moments {
    mu: DVector<f64>,
    cov: DMatrix<f64>,
    sigma2: f64,
}

/// Regressor mean and centered covariance plus mean squared residual at `b`,
/// all with observation weights `w` normalized by Σ w.
fn weighted_moments(s: &MixtureSample, w: &[f64], b: &DVector<f64>) -> Moments {
    let (n, d, q) = (s.n(), s.dims.d, s.dims.density_dim());
    let off = s.density_offset();
    let total: f64 = w.iter().sum();
    let mut mu = DVector::zeros(q);
    for j in 0..n {
        for a in 0..q {
            mu[a] += w[j] * s.x[(j, off + a)];
        }
    }
    mu /= total;
    let mut cov = DMatrix::zeros(q, q);
    let mut rss = 0.0;
    for j in 0..n {
        for a in 0..q {
            let za = s.x[(j, off + a)] - mu[a];
            for t in 0..=a {
                cov[(a, t)] += w[j] * za * (s.x[(j, off + t)] - mu[t]);
            }
        }
        let fitted: f64 = (0..d).map(|i| s.x[(j, i)] * b[i]).sum();
        rss += w[j] * (s.y[j] - fitted).powi(2);
    }
    for a in 0..q {
        for t in 0..a {
            cov[(t, a)] = cov[(a, t)];
        }
    }
    cov /= total;
    Moments {
        mu,
        cov,
        sigma2: rss / total,
    }
}

/// Posterior membership probabilities w_j^m at τ, as an n × M matrix.
pub fn em_weights(s: &MixtureSample, tau: &TauVector) -> Result<DMatrix<f64>> {
    Ok(e_step(s, tau)?.0)
}

fn e_step(s: &MixtureSample, tau: &TauVector) -> Result<(DMatrix<f64>, f64)> {
    let prep = Prepared::new(s, tau)?;
    let mut scratch = prep.scratch();
    let mut w = DMatrix::zeros(s.n(), s.dims.m);
    let mut ll = CompensatedSum::default();
    for j in 0..s.n() {
        let (row, z, u) = scratch.split();
        ll.add(prep.posterior(s, j, row, z, u));
        for (m, v) in row.iter().enumerate() {
            w[(j, m)] = *v;
        }
    }
    Ok((w, ll.value()))
}

/// One EM iteration τ⁽ⁱ⁾ → τ⁽ⁱ⁺¹⁾.
pub fn em_iterate(s: &MixtureSample, tau: &TauVector, cfg: &EmConfig) -> Result<TauVector> {
    Ok(em_step(s, tau, cfg)?.0)
}

/// Returns τ⁽ⁱ⁺¹⁾ and L(τ⁽ⁱ⁾).
fn em_step(s: &MixtureSample, tau: &TauVector, cfg: &EmConfig) -> Result<(TauVector, f64)> {
    let (w, ll) = e_step(s, tau)?;
    let (n, d, mm, q) = (s.n(), s.dims.d, s.dims.m, s.dims.density_dim());
    let off = s.density_offset();
    let starve = mm as f64 * n as f64 * 1e-12;
    let old = unflatten(tau);
    let mut next = Vec::with_capacity(mm);
    for (m, prev) in old.iter().enumerate() {
        let col = w.column(m);
        let wbar: f64 = col.iter().sum();
        if !(wbar >= starve) {
            return Err(MixregError::DegenerateComponent {
                component: m,
                weight: wbar,
            });
        }
        let mut mu = DVector::zeros(q);
        let mut cov = DMatrix::zeros(q, q);
        let mut xtwx = DMatrix::zeros(d, d);
        let mut xtwy = DVector::zeros(d);
        let mut rss = 0.0;
        for j in 0..n {
            let wj = col[j];
            if wj == 0.0 {
                continue;
            }
            for a in 0..q {
                let xa = s.x[(j, off + a)];
                mu[a] += wj * xa;
                let za = xa - prev.mu[a];
                for t in 0..=a {
                    cov[(a, t)] += wj * za * (s.x[(j, off + t)] - prev.mu[t]);
                }
            }
            let mut fitted = 0.0;
            for r in 0..d {
                let xr = s.x[(j, r)];
                fitted += xr * prev.b[r];
                let wx = wj * xr;
                xtwy[r] += wx * s.y[j];
                for c in 0..=r {
                    xtwx[(r, c)] += wx * s.x[(j, c)];
                }
            }
            rss += wj * (s.y[j] - fitted).powi(2);
        }
        for a in 0..q {
            for t in 0..a {
                cov[(t, a)] = cov[(a, t)];
            }
        }
        for r in 0..d {
            for c in 0..r {
                xtwx[(c, r)] = xtwx[(r, c)];
            }
        }
        mu /= wbar;
        cov /= wbar;
        let (cov, _) = psd_repair(&cov, cfg.variance_floor);
        let b = solve_checked(&xtwx, &xtwy, MAX_CONDITION).map_err(|_| {
            MixregError::DegenerateComponent {
                component: m,
                weight: wbar,
            }
        })?;
        next.push(ComponentParams {
            b,
            sigma2: (rss / wbar).max(cfg.variance_floor),
            mu,
            cov,
        });
    }
    Ok((flatten(&next)?, ll))
}

/// Iterates EM from `tau0` until the max-norm change falls below `cfg.delta`
/// or `cfg.max_iters` is reached. Non-convergence is reported, not an error.
pub fn em_fit(s: &MixtureSample, tau0: &TauVector, cfg: &EmConfig) -> Result<EmResult> {
    cfg.validate()?;
    let mut tau = tau0.clone();
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut converged = false;
    while iters < cfg.max_iters {
        let (next, ll) = em_step(s, &tau, cfg)?;
        trace.push(ll);
        iters += 1;
        let change = next.max_abs_diff(&tau);
        tau = next;
        if change < cfg.delta {
            converged = true;
            break;
        }
    }
    trace.push(log_likelihood(s, &tau)?);
    Ok(EmResult {
        tau,
        iters,
        converged,
        loglik_trace: trace,
    })
}

//! Gaussian mixture-of-regressions log-likelihood, its score and Hessian,
//! the one-step Newton estimator and the empirical Fisher information.
//!
//! Component `m` has density
//! `φ_m(y, x) = N(x̃; μ_m, Σ_m) · N(y − xᵀ b^m; 0, σ²_m)`, where `x̃` are the
//! stochastic regressors (the intercept column, if any, is excluded). The
//! per-observation log-likelihood is `ln Σ_m p_j^m φ_m(Y_j, X_j)`, evaluated
//! with log-sum-exp.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{MixregError, Result};
use crate::linalg::{
    log_sum_exp, solve_checked, sym_inverse, symmetrize, CompensatedSum, MAX_CONDITION,
};
use crate::model::{unflatten, MixtureSample, TauLayout, TauVector};

/// Relative finite-difference step used for the Hessian.
pub const FD_STEP: f64 = 1e-5;

/// Empirical information Î(n, τ̂) = Σ_j g_j g_jᵀ with g_j the per-observation score.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix {
    pub matrix: DMatrix<f64>,
    pub at: TauVector,
}

/// Î_k(n)⁺ = ([Î(n)⁻¹]_(k))⁻¹ for the coefficients of component `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoSubBlock {
    pub k: usize,
    pub iplus: DMatrix<f64>,
}

/// Per-component quantities reused across observations.
struct Component {
    b: Vec<f64>,
    mu: Vec<f64>,
    /// Row-major q × q inverse covariance.
    cov_inv: Vec<f64>,
    sigma2: f64,
    log_const: f64,
}

pub(crate) struct Prepared {
    layout: TauLayout,
    comps: Vec<Component>,
}

impl Prepared {
    pub(crate) fn new(s: &MixtureSample, tau: &TauVector) -> Result<Self> {
        let layout = tau.layout;
        if layout.d != s.dims.d || layout.m != s.dims.m || layout.q != s.dims.density_dim() {
            return Err(MixregError::DimensionMismatch(format!(
                "tau layout (d={}, q={}, M={}) does not match sample (d={}, q={}, M={})",
                layout.d,
                layout.q,
                layout.m,
                s.dims.d,
                s.dims.density_dim(),
                s.dims.m
            )));
        }
        let q = layout.q;
        let comps = unflatten(tau)
            .into_iter()
            .enumerate()
            .map(|(m, c)| {
                if !(c.sigma2 > 0.0) || !c.sigma2.is_finite() {
                    return Err(MixregError::InvalidParams(format!(
                        "component {m}: error variance {} is not positive",
                        c.sigma2
                    )));
                }
                if !c.b.iter().chain(c.mu.iter()).all(|v| v.is_finite()) {
                    return Err(MixregError::InvalidParams(format!(
                        "component {m}: non-finite parameters"
                    )));
                }
                let (cov_inv, log_det) = if q == 0 {
                    (Vec::new(), 0.0)
                } else {
                    let chol = c.cov.clone().cholesky().ok_or_else(|| {
                        MixregError::InvalidParams(format!(
                            "component {m}: regressor covariance is not positive definite"
                        ))
                    })?;
                    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                    let inv = chol.inverse();
                    let mut flat = vec![0.0; q * q];
                    for r in 0..q {
                        for t in 0..q {
                            flat[r * q + t] = inv[(r, t)];
                        }
                    }
                    (flat, log_det)
                };
                let log_const = -0.5 * ((q + 1) as f64 * (2.0 * PI).ln() + log_det + c.sigma2.ln());
                Ok(Component {
                    b: c.b.iter().copied().collect(),
                    mu: c.mu.iter().copied().collect(),
                    cov_inv,
                    sigma2: c.sigma2,
                    log_const,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layout, comps })
    }

    fn residual(&self, s: &MixtureSample, j: usize, m: usize) -> f64 {
        let b = &self.comps[m].b;
        let mut fitted = 0.0;
        for (i, bi) in b.iter().enumerate() {
            fitted += s.x[(j, i)] * bi;
        }
        s.y[j] - fitted
    }

    /// Writes `z = x̃ − μ_m` and `u = Σ_m⁻¹ z`; returns zᵀ Σ_m⁻¹ z.
    fn centered(&self, s: &MixtureSample, j: usize, m: usize, z: &mut [f64], u: &mut [f64]) -> f64 {
        let q = self.layout.q;
        let off = s.density_offset();
        let c = &self.comps[m];
        for a in 0..q {
            z[a] = s.x[(j, off + a)] - c.mu[a];
        }
        let mut quad = 0.0;
        for a in 0..q {
            let mut acc = 0.0;
            for t in 0..q {
                acc += c.cov_inv[a * q + t] * z[t];
            }
            u[a] = acc;
            quad += acc * z[a];
        }
        quad
    }

    /// Fills `logs[m] = ln p_j^m + ln φ_m(ξ_j)`; returns ln f_j.
    fn joint_logs(
        &self,
        s: &MixtureSample,
        j: usize,
        logs: &mut [f64],
        z: &mut [f64],
        u: &mut [f64],
    ) -> f64 {
        for m in 0..self.layout.m {
            let p = s.p[(j, m)];
            if p <= 0.0 {
                logs[m] = f64::NEG_INFINITY;
                continue;
            }
            let c = &self.comps[m];
            let r = self.residual(s, j, m);
            let quad = self.centered(s, j, m, z, u);
            logs[m] = p.ln() + c.log_const - 0.5 * (quad + r * r / c.sigma2);
        }
        log_sum_exp(logs)
    }

    /// Posterior membership probabilities of observation `j`; returns ln f_j.
    pub(crate) fn posterior(
        &self,
        s: &MixtureSample,
        j: usize,
        w: &mut [f64],
        z: &mut [f64],
        u: &mut [f64],
    ) -> f64 {
        let lse = self.joint_logs(s, j, w, z, u);
        for v in w.iter_mut() {
            *v = (*v - lse).exp();
        }
        lse
    }

    /// Gradient of ln f_j with respect to τ, written into `g`.
    fn observation_score(
        &self,
        s: &MixtureSample,
        j: usize,
        scratch: &mut Scratch,
        g: &mut [f64],
    ) -> f64 {
        let layout = self.layout;
        let (d, q) = (layout.d, layout.q);
        let lse = self.posterior(s, j, &mut scratch.w, &mut scratch.z, &mut scratch.u);
        for m in 0..layout.m {
            let w = scratch.w[m];
            let c = &self.comps[m];
            let r = self.residual(s, j, m);
            let start = layout.coef_range(m).start;
            let coef = w * r / c.sigma2;
            for i in 0..d {
                g[start + i] = coef * s.x[(j, i)];
            }
            self.centered(s, j, m, &mut scratch.z, &mut scratch.u);
            let mstart = layout.mean_range(m).start;
            for a in 0..q {
                g[mstart + a] = w * scratch.u[a];
            }
            let cstart = layout.cov_range(m).start;
            for a in 0..q {
                for t in 0..=a {
                    let grad = 0.5 * (scratch.u[a] * scratch.u[t] - c.cov_inv[a * q + t]);
                    let mult = if a == t { 1.0 } else { 2.0 };
                    g[cstart + TauLayout::vech_offset(a, t)] = w * mult * grad;
                }
            }
            g[layout.variance_index(m)] =
                w * 0.5 * (r * r / (c.sigma2 * c.sigma2) - 1.0 / c.sigma2);
        }
        lse
    }

    pub(crate) fn scratch(&self) -> Scratch {
        Scratch {
            w: vec![0.0; self.layout.m],
            z: vec![0.0; self.layout.q],
            u: vec![0.0; self.layout.q],
        }
    }
}

pub(crate) struct Scratch {
    pub(crate) w: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
}

impl Scratch {
    pub(crate) fn split(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (&mut self.w, &mut self.z, &mut self.u)
    }
}

/// L(τ) = Σ_j ln Σ_m p_j^m φ_m(ξ_j).
pub fn log_likelihood(s: &MixtureSample, tau: &TauVector) -> Result<f64> {
    let prep = Prepared::new(s, tau)?;
    let mut scratch = prep.scratch();
    let (w, z, u) = scratch.split();
    let total: CompensatedSum = (0..s.n()).map(|j| prep.joint_logs(s, j, w, z, u)).collect();
    Ok(total.value())
}

/// Analytic gradient s_n(τ) of the log-likelihood.
pub fn score(s: &MixtureSample, tau: &TauVector) -> Result<DVector<f64>> {
    let prep = Prepared::new(s, tau)?;
    Ok(score_prepared(s, &prep))
}

fn score_prepared(s: &MixtureSample, prep: &Prepared) -> DVector<f64> {
    let p = prep.layout.len();
    let mut scratch = prep.scratch();
    let mut g = vec![0.0; p];
    let mut acc = vec![CompensatedSum::default(); p];
    for j in 0..s.n() {
        prep.observation_score(s, j, &mut scratch, &mut g);
        for (a, v) in acc.iter_mut().zip(g.iter()) {
            a.add(*v);
        }
    }
    DVector::from_iterator(p, acc.iter().map(CompensatedSum::value))
}

/// Central finite differences of the analytic score, before symmetrization.
///
/// Column `i` is `(s(τ + h_i e_i) − s(τ − h_i e_i)) / (2 h_i)` with
/// `h_i = FD_STEP · (1 + |τ_i|)`.
pub fn score_jacobian(s: &MixtureSample, tau: &TauVector) -> Result<DMatrix<f64>> {
    Prepared::new(s, tau)?;
    let p = tau.len();
    let mut h = DMatrix::zeros(p, p);
    for i in 0..p {
        let step = FD_STEP * (1.0 + tau.values[i].abs());
        let mut plus = tau.clone();
        plus.values[i] += step;
        let mut minus = tau.clone();
        minus.values[i] -= step;
        let sp = score(s, &plus)?;
        let sm = score(s, &minus)?;
        h.set_column(i, &((sp - sm) / (2.0 * step)));
    }
    Ok(h)
}

/// Symmetrized finite-difference Hessian γ_n(τ).
pub fn hessian(s: &MixtureSample, tau: &TauVector) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&score_jacobian(s, tau)?))
}

/// One Newton–Raphson step τ⁰ − γ_n(τ⁰)⁻¹ s_n(τ⁰).
pub fn one_step(s: &MixtureSample, tau0: &TauVector) -> Result<TauVector> {
    let g = score(s, tau0)?;
    if g.iter().all(|&v| v == 0.0) {
        return Ok(tau0.clone());
    }
    let h = hessian(s, tau0)?;
    let step = solve_checked(&h, &g, MAX_CONDITION).map_err(|_| MixregError::SingularHessian)?;
    TauVector::new(tau0.layout, &tau0.values - step)
}

/// Î(n, τ) = Σ_j g_j g_jᵀ.
pub fn empirical_info(s: &MixtureSample, tau: &TauVector) -> Result<InfoMatrix> {
    let prep = Prepared::new(s, tau)?;
    let p = prep.layout.len();
    let mut scratch = prep.scratch();
    let mut g = vec![0.0; p];
    let mut info = vec![0.0; p * p];
    for j in 0..s.n() {
        prep.observation_score(s, j, &mut scratch, &mut g);
        for r in 0..p {
            let gr = g[r];
            if gr == 0.0 {
                continue;
            }
            let row = &mut info[r * p..r * p + r + 1];
            for (cell, gc) in row.iter_mut().zip(g.iter()) {
                *cell += gr * gc;
            }
        }
    }
    let mut matrix = DMatrix::zeros(p, p);
    for r in 0..p {
        for c in 0..=r {
            matrix[(r, c)] = info[r * p + c];
            matrix[(c, r)] = info[r * p + c];
        }
    }
    Ok(InfoMatrix {
        matrix,
        at: tau.clone(),
    })
}

/// Inverts Î, keeps the coefficient block of component `k`, inverts again.
pub fn info_subblock(info: &InfoMatrix, k: usize) -> Result<InfoSubBlock> {
    let layout = info.at.layout;
    if k >= layout.m {
        return Err(MixregError::DimensionMismatch(format!(
            "component {k} out of range for M = {}",
            layout.m
        )));
    }
    let inv = sym_inverse(&info.matrix, MAX_CONDITION).ok_or(MixregError::SingularInfo)?;
    let idx = layout.coef_range(k);
    let block = inv
        .view((idx.start, idx.start), (layout.d, layout.d))
        .into_owned();
    let iplus = sym_inverse(&block, MAX_CONDITION).ok_or(MixregError::SingularInfo)?;
    Ok(InfoSubBlock { k, iplus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{flatten, ComponentParams};

    fn single_component_sample() -> MixtureSample {
        let xs = [0.3, -1.2, 2.5, 0.9, -0.4, 1.7, 3.1, -2.2];
        let ys = [1.1, -0.7, 3.9, 2.2, 0.1, 2.8, 5.0, -1.9];
        let x = DMatrix::from_fn(8, 2, |j, c| if c == 0 { 1.0 } else { xs[j] });
        MixtureSample::new(
            DVector::from_column_slice(&ys),
            x,
            DMatrix::from_element(8, 1, 1.0),
        )
        .unwrap()
    }

    fn single_tau(b: [f64; 2], mu: f64, var: f64, sigma2: f64) -> TauVector {
        flatten(&[ComponentParams {
            b: DVector::from_column_slice(&b),
            sigma2,
            mu: DVector::from_element(1, mu),
            cov: DMatrix::from_element(1, 1, var),
        }])
        .unwrap()
    }

    fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
        -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var)
    }

    #[test]
    fn single_component_is_product_of_normals() {
        let s = single_component_sample();
        let tau = single_tau([0.5, 1.2], 0.4, 2.0, 0.7);
        let expect: f64 = (0..8)
            .map(|j| {
                let x = s.x[(j, 1)];
                normal_logpdf(x, 0.4, 2.0) + normal_logpdf(s.y[j] - 0.5 - 1.2 * x, 0.0, 0.7)
            })
            .sum();
        let got = log_likelihood(&s, &tau).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let s = single_component_sample();
        assert!(matches!(
            log_likelihood(&s, &single_tau([0.0, 0.0], 0.0, 1.0, 0.0)),
            Err(MixregError::InvalidParams(_))
        ));
        assert!(matches!(
            score(&s, &single_tau([0.0, 0.0], 0.0, -1.0, 1.0)),
            Err(MixregError::InvalidParams(_))
        ));
    }

    #[test]
    fn zero_score_means_no_step() {
        let s = single_component_sample();
        // Closed-form MLE of the single-component model.
        let n = 8.0;
        let xs: Vec<f64> = (0..8).map(|j| s.x[(j, 1)]).collect();
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let b = (s.x.transpose() * &s.x).try_inverse().unwrap() * s.x.transpose() * &s.y;
        let rss: f64 = (0..8).map(|j| (s.y[j] - b[0] - b[1] * xs[j]).powi(2)).sum();
        let tau = single_tau([b[0], b[1]], mean, var, rss / n);
        let g = score(&s, &tau).unwrap();
        assert!(g.amax() < 1e-10, "{g}");
        let os = one_step(&s, &tau).unwrap();
        assert!(os.max_abs_diff(&tau) < 1e-8);
    }

    #[test]
    fn subblock_of_block_diagonal_info() {
        let layout = TauLayout::new(2, 1, 1);
        let mut m = DMatrix::zeros(5, 5);
        let b = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
        m.view_mut((0, 0), (2, 2)).copy_from(&b);
        m[(2, 2)] = 1.5;
        m[(3, 3)] = 0.7;
        m[(4, 4)] = 4.0;
        m[(3, 4)] = 0.2;
        m[(4, 3)] = 0.2;
        let info = InfoMatrix {
            matrix: m,
            at: TauVector::new(layout, DVector::zeros(5)).unwrap(),
        };
        let sub = info_subblock(&info, 0).unwrap();
        assert!((sub.iplus - b).amax() < 1e-12);
    }
}

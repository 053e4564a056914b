//! Weighted least squares with minimax weights and the plug-in sandwich
//! covariance of the resulting coefficient estimate.

use nalgebra::{DMatrix, DVector};

use crate::error::{MixregError, Result};
use crate::linalg::{solve_checked, sym_inverse, symmetrize, MAX_CONDITION};
use crate::mixweights::{all_minimax_weights, psd_repair, WeightVector};
use crate::model::MixtureSample;

/// Lower clamp applied to plug-in error variances.
pub const SIGMA2_FLOOR: f64 = 1e-12;

/// Eigenvalue floor for V̂, relative to its largest absolute eigenvalue.
pub const VHAT_RELATIVE_FLOOR: f64 = 1e-10;

/// Plug-in moment estimates shared by all target components.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates {
    /// D̂^(m): weighted second moments of the regressors, one d × d per component.
    pub dhat: Vec<DMatrix<f64>>,
    /// L̂^{is(m)} stored at `lhat[m][i * d + s]`.
    pub lhat: Vec<Vec<DMatrix<f64>>>,
    pub sigma2hat: Vec<f64>,
    /// σ̂²_m fell below [`SIGMA2_FLOOR`] and was clamped.
    pub sigma2_clamped: Vec<bool>,
    /// α̂^{(k)}_{s,q} as an M × M matrix per target k.
    pub alpha: Vec<DMatrix<f64>>,
    /// α̂^{(k)}_s = Σ_q α̂^{(k)}_{s,q}.
    pub alpha_marginal: Vec<DVector<f64>>,
}

impl MomentEstimates {
    pub fn lhat(&self, m: usize, i: usize, s: usize) -> &DMatrix<f64> {
        let d = self.dhat[m].nrows();
        &self.lhat[m][i * d + s]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsFitResult {
    pub k: usize,
    pub bhat: DVector<f64>,
    /// Asymptotic covariance of √n (b̂ − b^k).
    pub vhat: DMatrix<f64>,
    /// Eigenvalues of V̂ were clamped to make it positive definite.
    pub repaired: bool,
}

/// Least squares fit of every component from one sample.
#[derive(Debug, Clone)]
pub struct LsFit {
    pub weights: Vec<WeightVector>,
    pub moments: MomentEstimates,
    pub components: Vec<LsFitResult>,
}

/// b̂ solving (Xᵀ A X) b = Xᵀ A Y with A = diag(a^k).
pub fn ls_estimate(s: &MixtureSample, w: &WeightVector) -> Result<DVector<f64>> {
    let (n, d) = (s.n(), s.dims.d);
    if w.a.len() != n {
        return Err(MixregError::DimensionMismatch(format!(
            "{} weights for {n} observations",
            w.a.len()
        )));
    }
    let mut xtax = DMatrix::zeros(d, d);
    let mut xtay = DVector::zeros(d);
    for j in 0..n {
        let a = w.a[j];
        for r in 0..d {
            let xr = a * s.x[(j, r)];
            xtay[r] += xr * s.y[j];
            for c in 0..=r {
                xtax[(r, c)] += xr * s.x[(j, c)];
            }
        }
    }
    for r in 0..d {
        for c in 0..r {
            xtax[(c, r)] = xtax[(r, c)];
        }
    }
    solve_checked(&xtax, &xtay, MAX_CONDITION).map_err(|condition| MixregError::SingularDesign {
        component: w.k,
        condition,
    })
}

/// D̂, L̂, σ̂² and α̂ from the minimax weights and per-component LS estimates.
pub fn moment_estimates(
    s: &MixtureSample,
    weights: &[WeightVector],
    bhats: &[DVector<f64>],
) -> Result<MomentEstimates> {
    let (n, d, mm) = (s.n(), s.dims.d, s.dims.m);
    if weights.len() != mm || bhats.len() != mm {
        return Err(MixregError::DimensionMismatch(format!(
            "need weights and estimates for all {mm} components"
        )));
    }
    let nf = n as f64;
    let mut dhat = vec![DMatrix::zeros(d, d); mm];
    let mut lhat = vec![vec![DMatrix::zeros(d, d); d * d]; mm];
    let mut sigma2 = vec![0.0; mm];
    let mut xx = vec![0.0; d * d];
    for j in 0..n {
        for i in 0..d {
            for t in 0..d {
                xx[i * d + t] = s.x[(j, i)] * s.x[(j, t)];
            }
        }
        for m in 0..mm {
            let a = weights[m].a[j];
            let fitted: f64 = (0..d).map(|i| s.x[(j, i)] * bhats[m][i]).sum();
            let r = s.y[j] - fitted;
            sigma2[m] += a * r * r;
            for i in 0..d {
                for t in 0..d {
                    let axx = a * xx[i * d + t];
                    dhat[m][(i, t)] += axx;
                    let l = &mut lhat[m][i * d + t];
                    for u in 0..d {
                        for v in 0..d {
                            l[(u, v)] += axx * xx[u * d + v];
                        }
                    }
                }
            }
        }
    }
    for m in 0..mm {
        dhat[m] /= nf;
        for l in lhat[m].iter_mut() {
            *l /= nf;
        }
        sigma2[m] /= nf;
    }
    let sigma2_clamped: Vec<bool> = sigma2.iter().map(|&v| !(v >= SIGMA2_FLOOR)).collect();
    let sigma2hat = sigma2.iter().map(|&v| v.max(SIGMA2_FLOOR)).collect();

    let mut alpha = vec![DMatrix::zeros(mm, mm); mm];
    for j in 0..n {
        for k in 0..mm {
            let a2 = weights[k].a[j] * weights[k].a[j];
            for sc in 0..mm {
                let ps = a2 * s.p[(j, sc)];
                for q in 0..mm {
                    alpha[k][(sc, q)] += ps * s.p[(j, q)];
                }
            }
        }
    }
    for a in alpha.iter_mut() {
        *a /= nf;
    }
    let alpha_marginal = alpha
        .iter()
        .map(|a| DVector::from_fn(mm, |sc, _| a.row(sc).sum()))
        .collect();
    Ok(MomentEstimates {
        dhat,
        lhat,
        sigma2hat,
        sigma2_clamped,
        alpha,
        alpha_marginal,
    })
}

/// V̂ = D̂⁻¹ Σ̂ D̂⁻¹ for target component `k`, repaired to positive definite
/// when necessary. Returns V̂ and whether the repair touched it.
pub fn asymptotic_covariance(
    moments: &MomentEstimates,
    bhats: &[DVector<f64>],
    k: usize,
) -> Result<(DMatrix<f64>, bool)> {
    let mm = moments.dhat.len();
    if k >= mm || bhats.len() != mm {
        return Err(MixregError::DimensionMismatch(format!(
            "component {k} with {} estimates for M = {mm}",
            bhats.len()
        )));
    }
    let d = moments.dhat[k].nrows();
    let dinv = sym_inverse(&moments.dhat[k], MAX_CONDITION).ok_or_else(|| {
        MixregError::SingularDesign {
            component: k,
            condition: crate::linalg::sym_condition(&moments.dhat[k]),
        }
    })?;

    let deltas: Vec<DVector<f64>> = bhats.iter().map(|b| b - &bhats[k]).collect();
    // (b̂^s − b̂^k)ᵀ M̂^{il(s,m)} (b̂^m − b̂^k) factorizes as (D̂^(s) Δ_s)_i (D̂^(m) Δ_m)_l.
    let projected: Vec<DVector<f64>> = (0..mm).map(|sc| &moments.dhat[sc] * &deltas[sc]).collect();
    let alpha = &moments.alpha[k];
    let alpha_s = &moments.alpha_marginal[k];

    let mut sigma = DMatrix::zeros(d, d);
    for i in 0..d {
        for l in 0..d {
            let mut acc = 0.0;
            for sc in 0..mm {
                let mut term = moments.dhat[sc][(i, l)] * moments.sigma2hat[sc];
                if sc != k {
                    let lm = moments.lhat(sc, i, l);
                    term += deltas[sc].dot(&(lm * &deltas[sc]));
                }
                acc += alpha_s[sc] * term;
            }
            for sc in 0..mm {
                for m in 0..mm {
                    acc -= alpha[(sc, m)] * projected[sc][i] * projected[m][l];
                }
            }
            sigma[(i, l)] = acc;
        }
    }
    let vhat = symmetrize(&(&dinv * symmetrize(&sigma) * &dinv));
    let top = vhat
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    if top == 0.0 || !top.is_finite() {
        return Err(MixregError::SingularCovariance);
    }
    let (repaired, clamped) = psd_repair(&vhat, VHAT_RELATIVE_FLOOR * top);
    Ok((repaired, clamped > 0))
}

/// Minimax weights, LS estimates, moments and V̂ for every component.
pub fn fit_ls(s: &MixtureSample) -> Result<LsFit> {
    let weights = all_minimax_weights(&s.p)?;
    let bhats = weights
        .iter()
        .map(|w| ls_estimate(s, w))
        .collect::<Result<Vec<_>>>()?;
    let moments = moment_estimates(s, &weights, &bhats)?;
    let components = (0..s.dims.m)
        .map(|k| {
            let (vhat, repaired) = asymptotic_covariance(&moments, &bhats, k)?;
            Ok(LsFitResult {
                k,
                bhat: bhats[k].clone(),
                vhat,
                repaired,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LsFit {
        weights,
        moments,
        components,
    })
}

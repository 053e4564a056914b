//! Confidence ellipsoids `{β : (β − b̂)ᵀ A (β − b̂) ≤ q}` for regression
//! coefficients, with `q` the (1 − α)-quantile of χ²_d.
//!
//! The LS ellipsoid uses `A = n V̂⁻¹`; the EM and one-step ellipsoids use
//! `A = Î_k(n)⁺`, which already grows with n.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MixregError, Result};
use crate::likelihood::InfoSubBlock;
use crate::linalg::{sym_inverse, MAX_CONDITION};
use crate::lsfit::LsFitResult;
use crate::special::{gamma, gamma_p};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EllipsoidKind {
    Ls,
    Os,
    Em,
}

impl fmt::Display for EllipsoidKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EllipsoidKind::Ls => "LS",
            EllipsoidKind::Os => "OS",
            EllipsoidKind::Em => "EM",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    /// Symmetric positive definite quadratic-form matrix.
    pub shape: DMatrix<f64>,
    pub threshold: f64,
    pub kind: EllipsoidKind,
    /// The shape came from a covariance estimate that needed an eigenvalue repair.
    pub repaired: bool,
}

/// Q such that P(χ²_d ≤ Q) = prob.
pub fn chi2_quantile(d: usize, prob: f64) -> Result<f64> {
    if d == 0 {
        return Err(MixregError::Domain("chi-square needs d ≥ 1".into()));
    }
    if !(prob > 0.0 && prob < 1.0) {
        return Err(MixregError::Domain(format!(
            "probability {prob} not in (0, 1)"
        )));
    }
    let a = d as f64 / 2.0;
    let cdf = |x: f64| gamma_p(a, x / 2.0);
    let log_norm = a * 2f64.ln() + crate::special::ln_gamma(a);
    let pdf = |x: f64| ((a - 1.0) * x.ln() - x / 2.0 - log_norm).exp();

    let (mut lo, mut hi) = (0.0, d as f64 + 1.0);
    while cdf(hi) < prob {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = cdf(x) - prob;
        if f.abs() < 1e-15 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - f / pdf(x);
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    Ok(x)
}

fn threshold_for(d: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MixregError::Domain(format!("alpha {alpha} not in (0, 1)")));
    }
    chi2_quantile(d, 1.0 - alpha)
}

/// Ellipsoid from the LS estimate: shape n V̂⁻¹.
pub fn ls_ellipsoid(fit: &LsFitResult, n: usize, alpha: f64) -> Result<Ellipsoid> {
    let d = fit.bhat.len();
    let vinv = sym_inverse(&fit.vhat, MAX_CONDITION).ok_or(MixregError::SingularCovariance)?;
    Ok(Ellipsoid {
        center: fit.bhat.clone(),
        shape: vinv * n as f64,
        threshold: threshold_for(d, alpha)?,
        kind: EllipsoidKind::Ls,
        repaired: fit.repaired,
    })
}

/// Ellipsoid from an information sub-block: shape Î_k(n)⁺.
pub fn info_ellipsoid(
    bhat: &DVector<f64>,
    sub: &InfoSubBlock,
    alpha: f64,
    kind: EllipsoidKind,
) -> Result<Ellipsoid> {
    let d = bhat.len();
    if sub.iplus.nrows() != d || sub.iplus.ncols() != d {
        return Err(MixregError::DimensionMismatch(format!(
            "center has {d} entries, information block is {}×{}",
            sub.iplus.nrows(),
            sub.iplus.ncols()
        )));
    }
    if sub.iplus.clone().cholesky().is_none() {
        return Err(MixregError::SingularInfo);
    }
    Ok(Ellipsoid {
        center: bhat.clone(),
        shape: sub.iplus.clone(),
        threshold: threshold_for(d, alpha)?,
        kind,
        repaired: false,
    })
}

impl Ellipsoid {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// S(β) = (β − center)ᵀ A (β − center).
    pub fn statistic(&self, beta: &DVector<f64>) -> Result<f64> {
        if beta.len() != self.dim() {
            return Err(MixregError::DimensionMismatch(format!(
                "point has {} entries, ellipsoid has {}",
                beta.len(),
                self.dim()
            )));
        }
        let diff = beta - &self.center;
        Ok(diff.dot(&(&self.shape * &diff)))
    }

    /// Boundary points count as inside.
    pub fn contains(&self, beta: &DVector<f64>) -> Result<bool> {
        Ok(self.statistic(beta)? <= self.threshold)
    }

    /// π^{d/2} / Γ(d/2 + 1) · q^{d/2} / √det A.
    pub fn volume(&self) -> Result<f64> {
        let chol = self
            .shape
            .clone()
            .cholesky()
            .ok_or(MixregError::SingularCovariance)?;
        let sqrt_det: f64 = chol.l().diagonal().iter().product();
        let h = self.dim() as f64 / 2.0;
        Ok(PI.powf(h) / gamma(h + 1.0) * self.threshold.powf(h) / sqrt_det)
    }

    /// `count` points center + √q A^{−1/2} (cos t, sin t), t uniform on [0, 2π).
    pub fn boundary_points(&self, count: usize) -> Result<Vec<DVector<f64>>> {
        if self.dim() != 2 {
            return Err(MixregError::UnsupportedDim(self.dim()));
        }
        let eig = self.shape.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
            return Err(MixregError::SingularCovariance);
        }
        let q = &eig.eigenvectors;
        let inv_sqrt =
            q * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt())) * q.transpose();
        let radius = self.threshold.sqrt();
        Ok((0..count)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / count as f64;
                let unit = DVector::from_vec(vec![t.cos(), t.sin()]);
                &self.center + &inv_sqrt * unit * radius
            })
            .collect())
    }
}

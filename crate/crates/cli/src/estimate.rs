//! `estimate`: LS (and optionally EM / one-step) fits with confidence
//! ellipsoids for user data.

use mixreg::ellipsoid::{info_ellipsoid, ls_ellipsoid, Ellipsoid, EllipsoidKind};
use mixreg::emfit::{em_fit, pilot_from_ls, EmConfig};
use mixreg::likelihood::{empirical_info, info_subblock, log_likelihood, one_step};
use mixreg::linalg::{sym_inverse, MAX_CONDITION};
use mixreg::lsfit::fit_ls;
use mixreg::{MixtureSample, TauVector};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub alpha: f64,
    pub em: bool,
    pub one_step: bool,
    /// Number of simultaneous sets; the per-set level is alpha / bonferroni.
    pub bonferroni: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidReport {
    pub center: Vec<f64>,
    pub shape: Vec<Vec<f64>>,
    pub threshold: f64,
    pub volume: f64,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    /// 1-based.
    pub component: usize,
    pub estimate: Vec<f64>,
    /// LS only: asymptotic covariance V̂ of √n (b̂ − b).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vhat: Option<Vec<Vec<f64>>>,
    /// EM / one-step only: information block Î_k(n)⁺.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub information: Option<Vec<Vec<f64>>>,
    pub std_errors: Vec<f64>,
    pub ellipsoid: EllipsoidReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: EllipsoidKind,
    pub components: Vec<ComponentReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub intercept: bool,
    pub alpha: f64,
    pub bonferroni: usize,
    /// Level actually used for each ellipsoid.
    pub alpha_per_set: f64,
    pub renormalized_rows: usize,
    pub methods: Vec<MethodReport>,
}

impl EllipsoidReport {
    pub fn from_ellipsoid(e: &Ellipsoid) -> CliResult<Self> {
        Ok(Self {
            center: e.center.iter().copied().collect(),
            shape: rows(&e.shape),
            threshold: e.threshold,
            volume: e.volume()?,
            repaired: e.repaired,
        })
    }

    pub fn to_ellipsoid(&self, kind: EllipsoidKind) -> CliResult<Ellipsoid> {
        let d = self.center.len();
        if self.shape.len() != d || self.shape.iter().any(|r| r.len() != d) {
            return Err(CliError::Input(format!(
                "ellipsoid shape must be {d}×{d} to match its center"
            )));
        }
        Ok(Ellipsoid {
            center: DVector::from_column_slice(&self.center),
            shape: DMatrix::from_fn(d, d, |i, j| self.shape[i][j]),
            threshold: self.threshold,
            kind,
            repaired: self.repaired,
        })
    }
}

fn rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn std_errors(cov: &DMatrix<f64>) -> Vec<f64> {
    cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
}

fn info_method(
    s: &MixtureSample,
    tau: &TauVector,
    alpha: f64,
    kind: EllipsoidKind,
) -> CliResult<MethodReport> {
    let info = empirical_info(s, tau)?;
    let mut components = Vec::with_capacity(s.dims.m);
    for k in 0..s.dims.m {
        let sub = info_subblock(&info, k)?;
        let bhat = tau.coef(k);
        let e = info_ellipsoid(&bhat, &sub, alpha, kind)?;
        let cov =
            sym_inverse(&sub.iplus, MAX_CONDITION).ok_or(mixreg::MixregError::SingularInfo)?;
        components.push(ComponentReport {
            component: k + 1,
            estimate: bhat.iter().copied().collect(),
            vhat: None,
            information: Some(rows(&sub.iplus)),
            std_errors: std_errors(&cov),
            ellipsoid: EllipsoidReport::from_ellipsoid(&e)?,
        });
    }
    Ok(MethodReport {
        method: kind,
        components,
        iterations: None,
        converged: None,
        log_likelihood: Some(log_likelihood(s, tau)?),
    })
}

/// Runs the requested estimators; warnings go to `warn`.
pub fn estimate(
    s: &MixtureSample,
    opts: &EstimateOptions,
    mut warn: impl FnMut(String),
) -> CliResult<EstimateReport> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(CliError::Input(format!(
            "alpha must lie in (0, 1), got {}",
            opts.alpha
        )));
    }
    if opts.bonferroni == 0 {
        return Err(CliError::Input("bonferroni must be at least 1".into()));
    }
    let alpha = opts.alpha / opts.bonferroni as f64;
    let n = s.n();

    let ls = fit_ls(s)?;
    let mut ls_components = Vec::with_capacity(s.dims.m);
    for fit in &ls.components {
        let e = ls_ellipsoid(fit, n, alpha)?;
        if fit.repaired {
            warn(format!(
                "component {}: V̂ was not positive definite and was repaired",
                fit.k + 1
            ));
        }
        ls_components.push(ComponentReport {
            component: fit.k + 1,
            estimate: fit.bhat.iter().copied().collect(),
            vhat: Some(rows(&fit.vhat)),
            information: None,
            std_errors: std_errors(&(&fit.vhat / n as f64)),
            ellipsoid: EllipsoidReport::from_ellipsoid(&e)?,
        });
    }
    let mut methods = vec![MethodReport {
        method: EllipsoidKind::Ls,
        components: ls_components,
        iterations: None,
        converged: None,
        log_likelihood: None,
    }];

    if opts.em || opts.one_step {
        let cfg = EmConfig::default();
        let pilot = pilot_from_ls(s, &ls, cfg.variance_floor);
        if pilot.repaired() {
            warn("pilot covariance or variance estimates were clamped".into());
        }
        if opts.one_step {
            let tau = one_step(s, &pilot.tau)?;
            methods.push(info_method(s, &tau, alpha, EllipsoidKind::Os)?);
        }
        if opts.em {
            let fit = em_fit(s, &pilot.tau, &cfg)?;
            if !fit.converged {
                warn(format!(
                    "EM did not converge within {} iterations; reporting the last iterate",
                    fit.iters
                ));
            }
            let mut report = info_method(s, &fit.tau, alpha, EllipsoidKind::Em)?;
            report.iterations = Some(fit.iters);
            report.converged = Some(fit.converged);
            methods.push(report);
        }
    }

    Ok(EstimateReport {
        n,
        d: s.dims.d,
        m: s.dims.m,
        intercept: s.dims.intercept,
        alpha: opts.alpha,
        bonferroni: opts.bonferroni,
        alpha_per_set: alpha,
        renormalized_rows: 0,
        methods,
    })
}

/// Long-format table: one row per (method, component, coefficient).
pub fn write_csv(path: &std::path::Path, report: &EstimateReport) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path.display(), e))?;
    let io = |e: csv::Error| CliError::io(path.display(), e);
    w.write_record([
        "method",
        "component",
        "coefficient",
        "estimate",
        "std_error",
        "threshold",
        "volume",
    ])
    .map_err(io)?;
    for m in &report.methods {
        for c in &m.components {
            for (i, (b, se)) in c.estimate.iter().zip(&c.std_errors).enumerate() {
                w.write_record([
                    m.method.to_string(),
                    c.component.to_string(),
                    format!("b{i}"),
                    format!("{b:.16e}"),
                    format!("{se:.16e}"),
                    format!("{:.16e}", c.ellipsoid.threshold),
                    format!("{:.16e}", c.ellipsoid.volume),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

//! Simulation of two-component mixtures of simple regressions with random
//! concentrations, and the Monte Carlo harness that measures how often the LS
//! and EM confidence ellipsoids cover the true coefficients.
//!
//! Randomness: every replication `r` draws from its own ChaCha8 stream seeded
//! with `base_seed ^ r` (via `SeedableRng::seed_from_u64`), so results do not
//! depend on scheduling. Within a replication the draw order is fixed: the
//! n × M concentration uniforms row by row, then for each observation one
//! uniform for the label, one normal for the regressor and the error draws
//! (one normal, or six normals for a scaled Student t₅). Normals come from
//! the Marsaglia polar method.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{info_ellipsoid, ls_ellipsoid, EllipsoidKind};
use crate::emfit::{em_fit, pilot_from_ls, EmConfig};
use crate::error::{MixregError, Result};
use crate::likelihood::{empirical_info, info_subblock};
use crate::lsfit::fit_ls;
use crate::model::MixtureSample;

/// Share of failed replications above which a summary is flagged invalid.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Gaussian,
    /// √(3/5) σ t₅: Student t with 5 degrees of freedom scaled to variance σ².
    Student5,
}

/// One component of `Y = b0 + b1 X + ε`, `X ~ N(mu, spread²)`, `Var ε = sigma²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimComponent {
    pub mu: f64,
    pub spread: f64,
    pub sigma: f64,
    pub b0: f64,
    pub b1: f64,
}

impl SimComponent {
    pub const fn new(mu: f64, spread: f64, sigma: f64, b0: f64, b1: f64) -> Self {
        Self {
            mu,
            spread,
            sigma,
            b0,
            b1,
        }
    }
}

const TABLE1: [SimComponent; 2] = [
    SimComponent::new(-2.0, 3.0, 1.0, -3.0, -0.5),
    SimComponent::new(4.0, 2.0, 1.0, 0.5, 2.0),
];
const TABLE1_LOW_NOISE: [SimComponent; 2] = [
    SimComponent::new(-2.0, 3.0, 0.25, -3.0, -0.5),
    SimComponent::new(4.0, 2.0, 0.25, 0.5, 2.0),
];
const TABLE3: [SimComponent; 2] = [
    SimComponent::new(0.0, 2.0, 0.5, 0.5, 2.0),
    SimComponent::new(1.0, 2.0, 0.5, -0.5, -1.0 / 3.0),
];

fn preset(id: u8) -> Option<(&'static [SimComponent; 2], ErrorKind)> {
    match id {
        1 => Some((&TABLE1, ErrorKind::Gaussian)),
        2 => Some((&TABLE1_LOW_NOISE, ErrorKind::Gaussian)),
        3 => Some((&TABLE3, ErrorKind::Gaussian)),
        4 => Some((&TABLE3, ErrorKind::Student5)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Built-in experiment 1–4, or `None` for custom parameters.
    pub id: Option<u8>,
    pub components: Vec<SimComponent>,
    pub error_kind: ErrorKind,
    pub n: usize,
    pub replications: usize,
    pub alpha: f64,
    pub base_seed: u64,
}

impl ExperimentConfig {
    /// Built-in experiment `id` at α = 0.05.
    pub fn experiment(id: u8, n: usize, replications: usize, base_seed: u64) -> Result<Self> {
        let (comps, error_kind) =
            preset(id).ok_or_else(|| MixregError::Config(format!("unknown experiment id {id}")))?;
        Ok(Self {
            id: Some(id),
            components: comps.to_vec(),
            error_kind,
            n,
            replications,
            alpha: 0.05,
            base_seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(id) = self.id {
            let (comps, kind) = preset(id)
                .ok_or_else(|| MixregError::Config(format!("unknown experiment id {id}")))?;
            if self.components != comps.as_slice() || self.error_kind != kind {
                return Err(MixregError::Config(format!(
                    "components/error_kind do not match built-in experiment {id}"
                )));
            }
        }
        if self.components.is_empty() {
            return Err(MixregError::Config("components: need at least one".into()));
        }
        for (k, c) in self.components.iter().enumerate() {
            let finite = [c.mu, c.spread, c.sigma, c.b0, c.b1]
                .iter()
                .all(|v| v.is_finite());
            if !finite || c.spread < 0.0 || c.sigma < 0.0 {
                return Err(MixregError::Config(format!(
                    "components[{k}]: parameters must be finite with spread, sigma ≥ 0"
                )));
            }
        }
        if self.n < 3 {
            return Err(MixregError::Config(
                "n: need at least 3 observations".into(),
            ));
        }
        if self.replications == 0 {
            return Err(MixregError::Config("replications: must be ≥ 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(MixregError::Config(format!(
                "alpha: {} not in (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }

    /// True (b0, b1) of component `k`.
    pub fn true_coefs(&self, k: usize) -> DVector<f64> {
        let c = &self.components[k];
        DVector::from_vec(vec![c.b0, c.b1])
    }
}

/// Standard normal draws by the Marsaglia polar method.
pub struct NormalSource<'a, R: Rng> {
    rng: &'a mut R,
    spare: Option<f64>,
}

impl<'a, R: Rng> NormalSource<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        Self { rng, spare: None }
    }

    pub fn standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.rng.random::<f64>() - 1.0;
            let v = 2.0 * self.rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    /// Student t with 5 degrees of freedom: Z / √(χ²₅ / 5).
    pub fn student5(&mut self) -> f64 {
        let z = self.standard();
        let chi2: f64 = (0..5).map(|_| self.standard().powi(2)).sum();
        z / (chi2 / 5.0).sqrt()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

pub fn replication_rng(base_seed: u64, r: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed ^ r)
}

/// Rows `u_j / Σ_s u_j^s` with `u` i.i.d. uniform on (0, 1].
pub fn gen_concentrations<R: Rng>(n: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, m);
    for j in 0..n {
        let mut total = 0.0;
        for c in 0..m {
            let u = 1.0 - rng.random::<f64>();
            p[(j, c)] = u;
            total += u;
        }
        for c in 0..m {
            p[(j, c)] /= total;
        }
    }
    p
}

/// Draws concentrations, labels, regressors and responses for one sample.
/// The design matrix is `[1, X]`.
pub fn gen_sample<R: Rng>(cfg: &ExperimentConfig, rng: &mut R) -> MixtureSample {
    let (n, m) = (cfg.n, cfg.components.len());
    let p = gen_concentrations(n, m, rng);
    let mut normals = NormalSource::new(rng);
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    let mut latent = Vec::with_capacity(n);
    for j in 0..n {
        let u = normals.uniform();
        let mut kappa = m - 1;
        let mut cum = 0.0;
        for c in 0..m {
            cum += p[(j, c)];
            if u < cum {
                kappa = c;
                break;
            }
        }
        let comp = &cfg.components[kappa];
        let xv = comp.mu + comp.spread * normals.standard();
        let eps = match cfg.error_kind {
            ErrorKind::Gaussian => comp.sigma * normals.standard(),
            ErrorKind::Student5 => (3.0f64 / 5.0).sqrt() * comp.sigma * normals.student5(),
        };
        x[(j, 0)] = 1.0;
        x[(j, 1)] = xv;
        y[j] = comp.b0 + comp.b1 * xv + eps;
        latent.push(kappa);
    }
    MixtureSample::new(y, x, p)
        .and_then(|s| s.with_latent(latent))
        .expect("generated shapes are consistent")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Ls,
    Em,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ls => "LS",
            Method::Em => "EM",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub covered: bool,
    pub volume: f64,
    pub repaired: bool,
}

/// Per-replication results; `None` marks a failed fit for that component.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub r: u64,
    pub ls: Vec<Option<Outcome>>,
    pub em: Vec<Option<Outcome>>,
    pub em_iters: Option<usize>,
}

impl ReplicationRecord {
    pub fn outcomes(&self, method: Method) -> &[Option<Outcome>] {
        match method {
            Method::Ls => &self.ls,
            Method::Em => &self.em,
        }
    }
}

/// Fits LS and EM ellipsoids on replication `r` and scores them.
pub fn run_replication(cfg: &ExperimentConfig, r: u64) -> ReplicationRecord {
    let m = cfg.components.len();
    let mut rng = replication_rng(cfg.base_seed, r);
    let s = gen_sample(cfg, &mut rng);
    let mut record = ReplicationRecord {
        r,
        ls: vec![None; m],
        em: vec![None; m],
        em_iters: None,
    };
    let Ok(ls) = fit_ls(&s) else {
        return record;
    };
    for (k, fit) in ls.components.iter().enumerate() {
        record.ls[k] = ls_ellipsoid(fit, s.n(), cfg.alpha)
            .and_then(|e| score_ellipsoid(&e, &cfg.true_coefs(k)))
            .ok();
    }

    let em_cfg = EmConfig::default();
    let pilot = pilot_from_ls(&s, &ls, em_cfg.variance_floor);
    let Ok(em) = em_fit(&s, &pilot.tau, &em_cfg) else {
        return record;
    };
    record.em_iters = Some(em.iters);
    if !em.converged {
        return record;
    }
    let Ok(info) = empirical_info(&s, &em.tau) else {
        return record;
    };
    for k in 0..m {
        record.em[k] = info_subblock(&info, k)
            .and_then(|sub| info_ellipsoid(&em.tau.coef(k), &sub, cfg.alpha, EllipsoidKind::Em))
            .and_then(|e| score_ellipsoid(&e, &cfg.true_coefs(k)))
            .ok();
    }
    record
}

fn score_ellipsoid(e: &crate::ellipsoid::Ellipsoid, truth: &DVector<f64>) -> Result<Outcome> {
    Ok(Outcome {
        covered: e.contains(truth)?,
        volume: e.volume()?,
        repaired: e.repaired,
    })
}

/// All replications `0..cfg.replications`, in order. Runs on the current
/// rayon pool.
pub fn run_replications(cfg: &ExperimentConfig) -> Result<Vec<ReplicationRecord>> {
    cfg.validate()?;
    Ok((0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub method: Method,
    /// 1-based component number.
    pub component: usize,
    pub n: usize,
    /// Covering count over all replications; a failed fit counts as not covering.
    pub coverage: f64,
    /// Mean volume over successful replications (NaN if none succeeded).
    pub avg_volume: f64,
    pub failures: usize,
    /// Successful replications whose covariance needed an eigenvalue repair.
    pub repaired: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n: usize,
    pub replications: usize,
    pub alpha: f64,
    pub rows: Vec<McRow>,
    /// Some (method, component) failed in more than 5% of replications.
    pub invalid: bool,
}

impl McSummary {
    pub fn row(&self, method: Method, component: usize) -> Option<&McRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.component == component)
    }
}

/// Aggregates per-replication records into coverage and mean volume.
pub fn summarize(n: usize, alpha: f64, records: &[ReplicationRecord]) -> McSummary {
    let reps = records.len();
    let m = records.first().map_or(0, |r| r.ls.len());
    let mut rows = Vec::new();
    for method in [Method::Ls, Method::Em] {
        for k in 0..m {
            let outcomes: Vec<Outcome> = records
                .iter()
                .filter_map(|rec| rec.outcomes(method)[k])
                .collect();
            let ok = outcomes.len() as f64;
            let covered = outcomes.iter().filter(|o| o.covered).count();
            let avg_volume = outcomes.iter().map(|o| o.volume).sum::<f64>() / ok;
            rows.push(McRow {
                method,
                component: k + 1,
                n,
                coverage: covered as f64 / reps as f64,
                avg_volume,
                failures: reps - outcomes.len(),
                repaired: outcomes.iter().filter(|o| o.repaired).count(),
            });
        }
    }
    let invalid = rows
        .iter()
        .any(|r| r.failures as f64 > MAX_FAILURE_RATE * reps as f64);
    McSummary {
        n,
        replications: reps,
        alpha,
        rows,
        invalid,
    }
}

pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<McSummary> {
    let records = run_replications(cfg)?;
    Ok(summarize(cfg.n, cfg.alpha, &records))
}

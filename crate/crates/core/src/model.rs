//! Sample and parameter types for the mixture-of-regressions model.
//!
//! Each observation `j` carries a response `Y_j`, a regressor row `X_j` of
//! length `d` and a known vector of mixing probabilities `p_j` over `M`
//! components. The latent component label is never observed; simulated
//! samples keep it only for diagnostics.
//!
//! The flat parameter vector τ is laid out in per-component blocks. Block `m`
//! holds, in order: `b^m` (d entries), `μ_m` (q entries), the lower-triangle
//! row-major half-vectorization of `Σ_m` (q(q+1)/2 entries) and `σ²_m`.
//! Here `q` is the number of stochastic regressors: when the first regressor
//! column is the constant 1 (an intercept), it carries no density and
//! `q = d − 1`; otherwise `q = d`.

use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MixregError, Result};

/// Tolerance on |Σ_m p_j^m − 1| for a row to count as a probability vector.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Sample size.
    pub n: usize,
    /// Number of regressors, including an intercept column if present.
    pub d: usize,
    /// Number of mixture components.
    pub m: usize,
    /// First regressor column is the constant 1.
    pub intercept: bool,
}

impl ModelDims {
    pub fn layout(&self) -> TauLayout {
        TauLayout::new(self.d, self.density_dim(), self.m)
    }

    /// Number of regressors modelled by the Gaussian regressor density.
    pub fn density_dim(&self) -> usize {
        self.d - usize::from(self.intercept)
    }
}

/// Which model quantity a τ coordinate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TauField {
    Coef(usize),
    Mean(usize),
    /// Entry `(row, col)` of Σ with `row ≥ col`.
    Cov(usize, usize),
    ErrorVariance,
}

/// Index arithmetic for the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TauLayout {
    pub d: usize,
    pub q: usize,
    pub m: usize,
}

impl TauLayout {
    pub fn new(d: usize, q: usize, m: usize) -> Self {
        Self { d, q, m }
    }

    pub fn vech_len(&self) -> usize {
        self.q * (self.q + 1) / 2
    }

    pub fn block_len(&self) -> usize {
        self.d + self.q + self.vech_len() + 1
    }

    /// Total length P of τ.
    pub fn len(&self) -> usize {
        self.m * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, comp: usize) -> Range<usize> {
        let start = comp * self.block_len();
        start..start + self.block_len()
    }

    pub fn coef_range(&self, comp: usize) -> Range<usize> {
        let start = comp * self.block_len();
        start..start + self.d
    }

    pub fn mean_range(&self, comp: usize) -> Range<usize> {
        let start = comp * self.block_len() + self.d;
        start..start + self.q
    }

    pub fn cov_range(&self, comp: usize) -> Range<usize> {
        let start = comp * self.block_len() + self.d + self.q;
        start..start + self.vech_len()
    }

    pub fn variance_index(&self, comp: usize) -> usize {
        (comp + 1) * self.block_len() - 1
    }

    /// Offset of Σ(row, col), `row ≥ col`, inside the vech segment.
    pub fn vech_offset(row: usize, col: usize) -> usize {
        debug_assert!(row >= col);
        row * (row + 1) / 2 + col
    }

    /// The (component, field) pair owning coordinate `i`.
    pub fn owner(&self, i: usize) -> Option<(usize, TauField)> {
        if i >= self.len() {
            return None;
        }
        let comp = i / self.block_len();
        let mut off = i % self.block_len();
        if off < self.d {
            return Some((comp, TauField::Coef(off)));
        }
        off -= self.d;
        if off < self.q {
            return Some((comp, TauField::Mean(off)));
        }
        off -= self.q;
        if off < self.vech_len() {
            let mut row = 0;
            while (row + 1) * (row + 2) / 2 <= off {
                row += 1;
            }
            return Some((comp, TauField::Cov(row, off - row * (row + 1) / 2)));
        }
        Some((comp, TauField::ErrorVariance))
    }
}

/// A rule broken by a [`MixtureSample`].
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    ProbabilityOutOfRange { column: usize, value: f64 },
    RowSum { sum: f64 },
    NonFinite,
    LatentOutOfRange { label: usize },
    TooFewObservations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub row: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(row) = self.row {
            write!(f, "row {row}: ")?;
        }
        write!(f, "{}", self.rule)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::ProbabilityOutOfRange { column, value } => {
                write!(f, "probability out of [0,1] in column {column} ({value})")
            }
            Rule::RowSum { sum } => write!(f, "row sum ≠ 1 ({sum})"),
            Rule::NonFinite => write!(f, "non-finite value"),
            Rule::LatentOutOfRange { label } => write!(f, "latent label {label} out of range"),
            Rule::TooFewObservations => {
                write!(f, "sample size must exceed the number of regressors")
            }
        }
    }
}

/// Observed data: responses, regressors and mixing probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSample {
    pub dims: ModelDims,
    pub y: DVector<f64>,
    /// n × d regressors.
    pub x: DMatrix<f64>,
    /// n × M mixing probabilities.
    pub p: DMatrix<f64>,
    /// True 0-based component labels; simulation diagnostics only.
    pub latent: Option<Vec<usize>>,
}

impl MixtureSample {
    /// Builds a sample, checking shapes only. An all-ones first column of `x`
    /// is treated as an intercept.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, p: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 || x.ncols() == 0 || p.ncols() == 0 {
            return Err(MixregError::DimensionMismatch(
                "sample needs at least one observation, regressor and component".into(),
            ));
        }
        if x.nrows() != n || p.nrows() != n {
            return Err(MixregError::DimensionMismatch(format!(
                "y has {n} rows, X has {}, P has {}",
                x.nrows(),
                p.nrows()
            )));
        }
        let intercept = x.column(0).iter().all(|&v| v == 1.0);
        let dims = ModelDims {
            n,
            d: x.ncols(),
            m: p.ncols(),
            intercept,
        };
        Ok(Self {
            dims,
            y,
            x,
            p,
            latent: None,
        })
    }

    pub fn with_latent(mut self, latent: Vec<usize>) -> Result<Self> {
        if latent.len() != self.dims.n {
            return Err(MixregError::DimensionMismatch(format!(
                "{} latent labels for {} observations",
                latent.len(),
                self.dims.n
            )));
        }
        self.latent = Some(latent);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.dims.n
    }

    /// Column index of the first regressor covered by the regressor density.
    pub fn density_offset(&self) -> usize {
        usize::from(self.dims.intercept)
    }

    /// Collects every broken sample invariant.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.dims.n <= self.dims.d {
            out.push(Violation {
                row: None,
                rule: Rule::TooFewObservations,
            });
        }
        for j in 0..self.dims.n {
            let finite = self.y[j].is_finite()
                && self.x.row(j).iter().all(|v| v.is_finite())
                && self.p.row(j).iter().all(|v| v.is_finite());
            if !finite {
                out.push(Violation {
                    row: Some(j),
                    rule: Rule::NonFinite,
                });
                continue;
            }
            for (column, &value) in self.p.row(j).iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    out.push(Violation {
                        row: Some(j),
                        rule: Rule::ProbabilityOutOfRange { column, value },
                    });
                }
            }
            let sum: f64 = self.p.row(j).iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                out.push(Violation {
                    row: Some(j),
                    rule: Rule::RowSum { sum },
                });
            }
        }
        if let Some(latent) = &self.latent {
            for (j, &label) in latent.iter().enumerate() {
                if label >= self.dims.m {
                    out.push(Violation {
                        row: Some(j),
                        rule: Rule::LatentOutOfRange { label },
                    });
                }
            }
        }
        out
    }

    /// Rescales probability rows whose sum misses 1 by more than
    /// [`ROW_SUM_TOLERANCE`] but at most `max_drift`. Returns the rescaled row
    /// indices; rows drifting further are left untouched for `validate` to flag.
    pub fn renormalize_rows(&mut self, max_drift: f64) -> Vec<usize> {
        let mut touched = Vec::new();
        for j in 0..self.dims.n {
            let sum: f64 = self.p.row(j).iter().sum();
            let drift = (sum - 1.0).abs();
            if drift > ROW_SUM_TOLERANCE && drift <= max_drift && sum > 0.0 {
                let mut row = self.p.row_mut(j);
                row /= sum;
                touched.push(j);
            }
        }
        touched
    }
}

/// Parameters of one mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentParams {
    /// Regression coefficients, length d.
    pub b: DVector<f64>,
    /// Error variance σ².
    pub sigma2: f64,
    /// Regressor mean, length q.
    pub mu: DVector<f64>,
    /// q × q regressor covariance.
    pub cov: DMatrix<f64>,
}

/// Flat parameter vector τ.
#[derive(Debug, Clone, PartialEq)]
pub struct TauVector {
    pub layout: TauLayout,
    pub values: DVector<f64>,
}

impl TauVector {
    pub fn new(layout: TauLayout, values: DVector<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(MixregError::DimensionMismatch(format!(
                "tau has {} entries, layout expects {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn coef(&self, comp: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.values.as_slice()[self.layout.coef_range(comp)])
    }

    pub fn max_abs_diff(&self, other: &TauVector) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Packs per-component parameters into τ.
pub fn flatten(params: &[ComponentParams]) -> Result<TauVector> {
    let first = params
        .first()
        .ok_or_else(|| MixregError::DimensionMismatch("no components".into()))?;
    let layout = TauLayout::new(first.b.len(), first.mu.len(), params.len());
    let mut values = Vec::with_capacity(layout.len());
    for (m, c) in params.iter().enumerate() {
        if c.b.len() != layout.d
            || c.mu.len() != layout.q
            || c.cov.nrows() != layout.q
            || c.cov.ncols() != layout.q
        {
            return Err(MixregError::DimensionMismatch(format!(
                "component {m} does not match d = {}, q = {}",
                layout.d, layout.q
            )));
        }
        values.extend(c.b.iter());
        values.extend(c.mu.iter());
        for row in 0..layout.q {
            for col in 0..=row {
                values.push(c.cov[(row, col)]);
            }
        }
        values.push(c.sigma2);
    }
    TauVector::new(layout, DVector::from_vec(values))
}

/// Unpacks τ; Σ is rebuilt symmetric from its lower triangle.
pub fn unflatten(tau: &TauVector) -> Vec<ComponentParams> {
    let layout = tau.layout;
    let v = tau.values.as_slice();
    (0..layout.m)
        .map(|m| {
            let vech = &v[layout.cov_range(m)];
            let mut cov = DMatrix::zeros(layout.q, layout.q);
            for row in 0..layout.q {
                for col in 0..=row {
                    let e = vech[TauLayout::vech_offset(row, col)];
                    cov[(row, col)] = e;
                    cov[(col, row)] = e;
                }
            }
            ComponentParams {
                b: DVector::from_column_slice(&v[layout.coef_range(m)]),
                sigma2: v[layout.variance_index(m)],
                mu: DVector::from_column_slice(&v[layout.mean_range(m)]),
                cov,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_with_p(p: DMatrix<f64>) -> MixtureSample {
        let n = p.nrows();
        let y = DVector::from_fn(n, |j, _| j as f64);
        let x = DMatrix::from_fn(n, 1, |j, _| (j as f64) + 0.5);
        MixtureSample::new(y, x, p).unwrap()
    }

    #[test]
    fn valid_rows_have_no_violations() {
        let s = sample_with_p(DMatrix::from_row_slice(
            3,
            2,
            &[0.5, 0.5, 0.5, 0.5, 0.2, 0.8],
        ));
        assert!(s.validate().is_empty());
    }

    #[test]
    fn row_sum_violation() {
        let s = sample_with_p(DMatrix::from_row_slice(
            3,
            2,
            &[0.5, 0.5, 0.7, 0.7, 0.2, 0.8],
        ));
        let v = s.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].row, Some(1));
        assert!(matches!(v[0].rule, Rule::RowSum { .. }));
        assert!(v[0].to_string().contains("row sum"));
    }

    #[test]
    fn negative_probability_violation() {
        let s = sample_with_p(DMatrix::from_row_slice(
            3,
            2,
            &[0.5, 0.5, -0.1, 1.1, 0.2, 0.8],
        ));
        let v = s.validate();
        assert_eq!(v.len(), 2);
        assert!(v
            .iter()
            .all(|v| v.row == Some(1) && matches!(v.rule, Rule::ProbabilityOutOfRange { .. })));
        assert!(v[0].to_string().contains("out of [0,1]"));
    }

    #[test]
    fn latent_labels_are_checked() {
        let s = sample_with_p(DMatrix::from_row_slice(
            3,
            2,
            &[0.5, 0.5, 0.5, 0.5, 0.2, 0.8],
        ))
        .with_latent(vec![0, 1, 2])
        .unwrap();
        let v = s.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::LatentOutOfRange { label: 2 });
    }

    #[test]
    fn renormalization_fixes_rounding_drift() {
        let mut s = sample_with_p(DMatrix::from_row_slice(
            3,
            2,
            &[0.5, 0.5004, 0.5, 0.5, 0.7, 0.7],
        ));
        assert_eq!(s.renormalize_rows(1e-2), vec![0]);
        let v = s.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].row, Some(2));
    }

    #[test]
    fn intercept_is_detected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let s = MixtureSample::new(DVector::zeros(3), x, DMatrix::from_element(3, 1, 1.0)).unwrap();
        assert!(s.dims.intercept);
        assert_eq!(s.dims.density_dim(), 1);
        assert_eq!(s.dims.layout().len(), 2 + 1 + 1 + 1);
    }

    #[test]
    fn flatten_single_component() {
        let c = ComponentParams {
            b: DVector::from_vec(vec![2.0]),
            sigma2: 1.0,
            mu: DVector::from_vec(vec![0.0]),
            cov: DMatrix::from_element(1, 1, 1.0),
        };
        let tau = flatten(std::slice::from_ref(&c)).unwrap();
        assert_eq!(tau.values.as_slice(), &[2.0, 0.0, 1.0, 1.0]);
        assert_eq!(unflatten(&tau), vec![c]);
    }

    #[test]
    fn two_components_length() {
        assert_eq!(TauLayout::new(1, 1, 2).len(), 8);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(TauVector::new(TauLayout::new(1, 1, 1), DVector::zeros(5)).is_err());
    }

    #[test]
    fn mismatched_components_are_rejected() {
        let a = ComponentParams {
            b: DVector::zeros(2),
            sigma2: 1.0,
            mu: DVector::zeros(2),
            cov: DMatrix::identity(2, 2),
        };
        let mut b = a.clone();
        b.b = DVector::zeros(3);
        assert!(flatten(&[a, b]).is_err());
    }

    #[test]
    fn owner_map_is_total_and_injective() {
        for (d, q, m) in [(1, 1, 1), (2, 1, 2), (3, 3, 2), (2, 0, 3)] {
            let layout = TauLayout::new(d, q, m);
            let mut seen = std::collections::HashSet::new();
            for i in 0..layout.len() {
                let owner = layout.owner(i).unwrap();
                assert!(seen.insert(owner), "duplicate owner {owner:?}");
                let (comp, field) = owner;
                match field {
                    TauField::Coef(r) => assert_eq!(layout.coef_range(comp).start + r, i),
                    TauField::Mean(r) => assert_eq!(layout.mean_range(comp).start + r, i),
                    TauField::Cov(r, c) => assert_eq!(
                        layout.cov_range(comp).start + TauLayout::vech_offset(r, c),
                        i
                    ),
                    TauField::ErrorVariance => assert_eq!(layout.variance_index(comp), i),
                }
            }
            assert!(layout.owner(layout.len()).is_none());
        }
    }

    proptest! {
        #[test]
        fn flatten_unflatten_round_trip(
            d in 1usize..4, q in 0usize..4, m in 1usize..4,
            seed in prop::collection::vec(-10.0f64..10.0, 200),
        ) {
            let layout = TauLayout::new(d, q, m);
            let values = DVector::from_column_slice(&seed[..layout.len()]);
            let tau = TauVector::new(layout, values).unwrap();
            let back = flatten(&unflatten(&tau)).unwrap();
            prop_assert_eq!(back.values, tau.values);
        }
    }
}

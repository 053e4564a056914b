//! Small dense helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// Largest condition number accepted before a matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Ratio of largest to smallest absolute eigenvalue of a symmetric matrix.
///
/// Returns `f64::INFINITY` for an exactly singular (or empty) matrix.
pub fn sym_condition(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    let eig = a.clone().symmetric_eigenvalues();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for &v in eig.iter() {
        if !v.is_finite() {
            return f64::INFINITY;
        }
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Inverse of a symmetric matrix via its eigendecomposition.
///
/// `None` when the condition number exceeds `max_condition`.
pub fn sym_inverse(a: &DMatrix<f64>, max_condition: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 || !a.iter().all(|v| v.is_finite()) {
        return None;
    }
    let eig = symmetrize(a).symmetric_eigen();
    let hi = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let lo = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if lo == 0.0 || hi / lo > max_condition {
        return None;
    }
    let q = &eig.eigenvectors;
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let col = q.column(k);
        out += (col * col.transpose()) / lam;
    }
    Some(symmetrize(&out))
}

/// Solve a square system after a condition check.
///
/// The error carries the offending condition number.
pub fn solve_checked(
    a: &DMatrix<f64>,
    rhs: &DVector<f64>,
    max_condition: f64,
) -> Result<DVector<f64>, f64> {
    let cond = sym_condition(a);
    if !(cond <= max_condition) {
        return Err(cond);
    }
    a.clone().lu().solve(rhs).ok_or(f64::INFINITY)
}

/// (A + Aᵀ) / 2.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute entry of A − Aᵀ.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Stable log(Σ exp(v)); `-inf` when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

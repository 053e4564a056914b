//! Gram matrix of the concentration vectors and the minimax weights.
//!
//! The weights `a^k` for component `k` satisfy
//! `(1/n) Σ_j a_j^k p_j^m = δ_{km}`, so a weighted empirical mean with these
//! weights is unbiased for a component-`k` moment. They are row `k` of
//! `Γ_n⁻¹` applied to each concentration vector and may be negative.

use nalgebra::{DMatrix, DVector};

use crate::error::{MixregError, Result};
use crate::linalg::symmetrize;

/// det Γ_n at or below this value is treated as singular.
pub const GRAM_DET_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    /// M × M matrix `(1/n) Σ_j p_j p_jᵀ`.
    pub g: DMatrix<f64>,
    pub det: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    /// 0-based target component.
    pub k: usize,
    pub a: DVector<f64>,
}

pub fn gram_matrix(p: &DMatrix<f64>) -> GramMatrix {
    let n = p.nrows() as f64;
    let g = symmetrize(&((p.transpose() * p) / n));
    let det = g.determinant();
    GramMatrix { g, det }
}

fn gram_inverse(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = gram_matrix(p);
    if !(gram.det > GRAM_DET_THRESHOLD) {
        return Err(MixregError::SingularGram { det: gram.det });
    }
    let m = gram.g.nrows();
    let inv = gram
        .g
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| gram.g.clone().try_inverse())
        .ok_or(MixregError::SingularGram { det: gram.det })?;
    debug_assert_eq!(inv.nrows(), m);
    Ok(inv)
}

/// Minimax weights for component `k` (0-based).
pub fn minimax_weights(p: &DMatrix<f64>, k: usize) -> Result<WeightVector> {
    if k >= p.ncols() {
        return Err(MixregError::DimensionMismatch(format!(
            "component {k} out of range for M = {}",
            p.ncols()
        )));
    }
    let inv = gram_inverse(p)?;
    Ok(weights_from_inverse(p, &inv, k))
}

/// Minimax weights for every component, sharing one Gram inversion.
pub fn all_minimax_weights(p: &DMatrix<f64>) -> Result<Vec<WeightVector>> {
    let inv = gram_inverse(p)?;
    Ok((0..p.ncols())
        .map(|k| weights_from_inverse(p, &inv, k))
        .collect())
}

fn weights_from_inverse(p: &DMatrix<f64>, inv: &DMatrix<f64>, k: usize) -> WeightVector {
    if p.ncols() == 1 {
        // Γ = [1] exactly for a single component.
        return WeightVector {
            k,
            a: DVector::from_element(p.nrows(), 1.0),
        };
    }
    let row = inv.row(k).transpose();
    WeightVector { k, a: p * row }
}

/// Clamps the eigenvalues of a symmetric matrix from below at `floor`.
///
/// Returns the repaired matrix and the number of clamped eigenvalues. When
/// nothing needs clamping the input is returned unchanged.
pub fn psd_repair(a: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, usize) {
    let eig = symmetrize(a).symmetric_eigen();
    let clamped = eig.eigenvalues.iter().filter(|&&v| !(v >= floor)).count();
    if clamped == 0 {
        return (a.clone(), 0);
    }
    let lambda = eig.eigenvalues.map(|v| if v >= floor { v } else { floor });
    let q = &eig.eigenvectors;
    let repaired = q * DMatrix::from_diagonal(&lambda) * q.transpose();
    (symmetrize(&repaired), clamped)
}

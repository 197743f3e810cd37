use std::sync::Arc;

use super::elliptic::EllipticOperator;
use crate::error::{invalid, KinError, Result};
use crate::grid::{ScalarField, SpatialGrid};

/// Largest number of unknowns accepted by the dense eigensolver.
pub const DENSE_LIMIT: usize = 4096;

/// Lowest eigenpairs of an elliptic operator, orthonormal in the
/// cell-volume inner product.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub values: Vec<f64>,
    pub vectors: Vec<ScalarField>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `a_i = ⟨u, e_i⟩`.
    pub fn coefficients(&self, u: &ScalarField) -> Vec<f64> {
        self.vectors.iter().map(|e| u.inner(e)).collect()
    }

    /// `Σ a_i e_i`.
    pub fn synthesize(&self, grid: &Arc<SpatialGrid>, coeffs: &[f64]) -> ScalarField {
        let mut out = ScalarField::zeros(grid);
        for (c, e) in coeffs.iter().zip(&self.vectors) {
            if *c != 0.0 {
                out.axpy(*c, e);
            }
        }
        out
    }

    /// Exact-in-time heat propagation `Σ e^{-μ_i t} a_i e_i`; requires a
    /// complete basis.
    pub fn propagate(&self, u: &ScalarField, t: f64) -> Result<ScalarField> {
        if self.len() != u.grid().n_nodes() {
            return invalid("exact propagation needs the complete eigenbasis");
        }
        let c: Vec<f64> = self
            .coefficients(u)
            .iter()
            .zip(&self.values)
            .map(|(a, mu)| a * (-mu * t).exp())
            .collect();
        Ok(self.synthesize(u.grid(), &c))
    }
}

/// Lowest `count` eigenpairs by a dense symmetric eigensolve.
pub fn eigendecompose(op: &EllipticOperator, count: usize) -> Result<EigenBasis> {
    let n = op.n();
    if n > DENSE_LIMIT {
        return Err(KinError::TooLarge(format!(
            "{n} unknowns exceed the dense eigensolver limit of {DENSE_LIMIT}"
        )));
    }
    if count == 0 || count > n {
        return invalid(format!("requested {count} eigenpairs of a {n}-dimensional operator"));
    }
    let m = op.dense()?;
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let scale = 1.0 / op.grid().cell_volume().sqrt();
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for &idx in order.iter().take(count) {
        values.push(eig.eigenvalues[idx]);
        let col = eig.eigenvectors.column(idx);
        // Fix the sign so the largest-magnitude entry is positive.
        let (mut big, mut sign) = (0.0, 1.0);
        for v in col.iter() {
            if v.abs() > big {
                big = v.abs();
                sign = v.signum();
            }
        }
        let vals: Vec<f64> = col.iter().map(|v| sign * scale * v).collect();
        vectors.push(ScalarField::from_values(op.grid(), vals)?);
    }
    Ok(EigenBasis { values, vectors })
}

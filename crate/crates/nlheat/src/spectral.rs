//! Dirichlet eigenbasis of the discrete operator.
//!
//! The zero-exterior operator block `A` is symmetric positive definite, so
//! the generalized problem `A e = alpha M e` with the lumped mass
//! `M = h^n I` reduces to the symmetric eigenproblem for `A / h^n`.
//! Eigenpairs are returned sorted by increasing frequency, normalized in
//! the lattice L2 inner product (`h^n e' e = 1`), with a deterministic sign
//! convention (first nonvanishing component positive) and re-orthogonalized
//! inside near-degenerate clusters so repeated runs and perturbed meshes
//! produce reproducible bases.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::op::OperatorMatrix;

/// The leading eigenpairs of the zero-exterior operator.
pub struct SpectralBasis {
    grid: Arc<Grid>,
    alphas: Vec<f64>,
    /// Columns are eigenvectors, lattice-L2 normalized.
    vectors: DMatrix<f64>,
}

/// Symmetric eigendecomposition returning the `k` smallest pairs of `w`,
/// sorted ascending with index tie-break, columns orthonormal in the plain
/// dot product. Split out of the public entry point so it can be checked
/// against closed-form oracles directly.
pub(crate) fn symmetric_eigs(w: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = w.nrows();
    let eig = w.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::SpectralFailure(
            "eigensolver returned non-finite eigenvalues".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut values = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(n, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        values.push(eig.eigenvalues[idx]);
        vectors.set_column(col, &eig.eigenvectors.column(idx));
    }

    // Re-orthogonalize inside clusters of nearly equal eigenvalues: the
    // solver's choice of basis there is arbitrary, and modified
    // Gram-Schmidt pins it down without touching well-separated pairs.
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        let scale = values[start].abs().max(1.0);
        while end < k && (values[end] - values[start]).abs() <= 1e-9 * scale {
            end += 1;
        }
        if end - start > 1 {
            for c in start..end {
                let mut col = vectors.column(c).into_owned();
                for prev in start..c {
                    let proj = vectors.column(prev).dot(&col);
                    col -= proj * vectors.column(prev).into_owned();
                }
                let norm = col.norm();
                if norm == 0.0 {
                    return Err(Error::SpectralFailure(
                        "degenerate cluster collapsed during re-orthogonalization".into(),
                    ));
                }
                col /= norm;
                vectors.set_column(c, &col);
            }
        }
        start = end;
    }
    Ok((values, vectors))
}

/// Compute the `k` lowest eigenpairs of the operator's zero-exterior block.
pub fn solve_eigenproblem(op: &OperatorMatrix, k: usize) -> Result<Arc<SpectralBasis>> {
    let grid = op.grid().clone();
    let n = grid.n_interior();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "requested {k} eigenpairs from a grid with {n} interior nodes"
        )));
    }
    let hn = grid.cell_measure();
    let w = op.matrix_a() / hn;
    let (alphas, mut vectors) = symmetric_eigs(&w, k)?;
    if alphas[0] <= 0.0 {
        return Err(Error::SpectralFailure(format!(
            "lowest frequency {} is not positive; the operator block is not coercive",
            alphas[0]
        )));
    }

    // Lattice-L2 normalization and deterministic sign.
    let scale = hn.sqrt().recip();
    for c in 0..k {
        let mut col = vectors.column(c).into_owned();
        col *= scale;
        let lead = col.iter().find(|v| v.abs() > 1e-12);
        if let Some(&lead) = lead {
            if lead < 0.0 {
                col = -col;
            }
        }
        vectors.set_column(c, &col);
    }

    // Verify lattice orthonormality before handing the basis out.
    for i in 0..k {
        for j in i..k {
            let dot = hn * vectors.column(i).dot(&vectors.column(j));
            let expected = if i == j { 1.0 } else { 0.0 };
            if (dot - expected).abs() > 1e-8 {
                return Err(Error::SpectralFailure(format!(
                    "basis vectors {i} and {j} fail lattice orthonormality: <e_i, e_j> = {dot}"
                )));
            }
        }
    }
    Ok(Arc::new(SpectralBasis {
        grid,
        alphas,
        vectors,
    }))
}

impl SpectralBasis {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Number of stored eigenpairs.
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Frequencies in increasing order.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas[i]
    }

    /// Eigenvector matrix (columns, lattice-L2 normalized).
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// Modal coefficients of an interior vector: `c_i = h^n e_i' v`.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.grid.n_interior() {
            return Err(Error::IncompatibleFields(format!(
                "vector has {} entries, grid has {} interior nodes",
                v.len(),
                self.grid.n_interior()
            )));
        }
        Ok(self.grid.cell_measure() * (self.vectors.transpose() * v))
    }

    /// Reconstruct an interior vector from modal coefficients.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        if coeffs.len() != self.len() {
            return Err(Error::IncompatibleFields(format!(
                "got {} coefficients for a basis of size {}",
                coeffs.len(),
                self.len()
            )));
        }
        Ok(&self.vectors * coeffs)
    }
}

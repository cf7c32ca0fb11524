//! Dense brute-force diagonalization of 2D finite-difference Hamiltonians.
//!
//! This is the independent oracle for separability: the assembled 2D operator
//! knows nothing about products of 1D solves, yet on the 3-point stencil a
//! separable potential must reproduce the sorted tensor-sum spectrum to
//! machine precision. Backed by LAPACK via `ndarray-linalg`; the size cap
//! keeps the O(n^6) cost honest.

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};

use crate::eigen1d::KineticConvention;
use crate::error::{Error, Result};
use crate::grid::Grid1D;

/// Default cap on total grid points `n_x * n_y`.
pub const DENSE_CAP: usize = 4096;

/// Full spectrum (and optionally eigenvectors) of the dense 2D Hamiltonian.
///
/// Eigenvector column `k` is stored flattened with `x` as the slow index
/// (`row = ix * n_y + iy`), unit Euclidean norm.
#[derive(Debug, Clone)]
pub struct Dense2dSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<Array2<f64>>,
}

/// Assemble and diagonalize `-c (d2/dx2 + d2/dy2) + V(x,y)` with Dirichlet
/// walls on the product grid. `potential[(ix, iy)]` is sampled on nodes.
pub fn dense_diagonalize_2d(
    potential: &Array2<f64>,
    grid_x: &Grid1D,
    grid_y: &Grid1D,
    convention: KineticConvention,
    want_vectors: bool,
) -> Result<Dense2dSpectrum> {
    dense_diagonalize_2d_capped(potential, grid_x, grid_y, convention, want_vectors, DENSE_CAP)
}

pub fn dense_diagonalize_2d_capped(
    potential: &Array2<f64>,
    grid_x: &Grid1D,
    grid_y: &Grid1D,
    convention: KineticConvention,
    want_vectors: bool,
    cap: usize,
) -> Result<Dense2dSpectrum> {
    let (nx, ny) = (grid_x.len(), grid_y.len());
    if potential.shape() != [nx, ny] {
        return Err(Error::GridMismatch(format!(
            "potential shape {:?} does not match grids {}x{}",
            potential.shape(),
            nx,
            ny
        )));
    }
    let total = nx * ny;
    if total > cap {
        return Err(Error::SizeCapExceeded { points: total, cap });
    }

    let c = convention.kinetic_coefficient();
    let cx = c / (grid_x.spacing() * grid_x.spacing());
    let cy = c / (grid_y.spacing() * grid_y.spacing());

    let mut h = Array2::<f64>::zeros((total, total));
    for ix in 0..nx {
        for iy in 0..ny {
            let row = ix * ny + iy;
            h[(row, row)] = 2.0 * cx + 2.0 * cy + potential[(ix, iy)];
            if iy + 1 < ny {
                h[(row, row + 1)] = -cy;
                h[(row + 1, row)] = -cy;
            }
            if ix + 1 < nx {
                let col = (ix + 1) * ny + iy;
                h[(row, col)] = -cx;
                h[(col, row)] = -cx;
            }
        }
    }

    let (values, vectors) = h
        .eigh(UPLO::Lower)
        .map_err(|e| Error::CalibrationFailed(format!("dense eigensolve failed: {e}")))?;
    Ok(Dense2dSpectrum {
        eigenvalues: values.to_vec(),
        eigenvectors: want_vectors.then_some(vectors),
    })
}

/// Sorted tensor-sum of two 1D spectra: every pairwise sum, ascending.
pub fn tensor_sum_sorted(ex: &[f64], ey: &[f64]) -> Vec<f64> {
    let mut sums: Vec<f64> = ex
        .iter()
        .flat_map(|a| ey.iter().map(move |b| a + b))
        .collect();
    sums.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sums
}

//! Dense symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Used on small Gram matrices (tens of rows), where Jacobi's quadratic
//! per-sweep cost is irrelevant and its accuracy is excellent: off-diagonal
//! mass is annihilated below 1e-14 of the Frobenius norm.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

const MAX_SWEEPS: usize = 64;
const OFF_DIAG_TOL: f64 = 1e-14;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
/// `vectors` is row-major: row `i` is the unit eigenvector of `values[i]`.
pub(crate) struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

/// Decomposes a row-major symmetric `n` x `n` matrix. The input is trusted
/// to be symmetric; only its upper triangle drives the rotations.
pub(crate) fn symmetric_eigen(matrix: &[f64], n: usize) -> EigenDecomposition {
    assert_eq!(matrix.len(), n * n, "matrix shape");
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = OFF_DIAG_TOL * frob.max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if (2.0 * off).sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for (row, &col) in order.iter().enumerate() {
        values.push(a[col * n + col]);
        for k in 0..n {
            vectors[row * n + k] = v[k * n + col];
        }
    }
    EigenDecomposition { values, vectors }
}

/// Modified Gram-Schmidt re-orthonormalization of `m` row vectors of
/// length `d`, in place. Rows are assumed independent (near-orthonormal
/// already); used to repair rounding from reduced-precision storage.
pub(crate) fn orthonormalize_rows(rows: &mut [f64], m: usize, d: usize) {
    assert_eq!(rows.len(), m * d, "basis shape");
    for i in 0..m {
        for j in 0..i {
            let mut dot = 0.0;
            for k in 0..d {
                dot += rows[i * d + k] * rows[j * d + k];
            }
            for k in 0..d {
                rows[i * d + k] -= dot * rows[j * d + k];
            }
        }
        let norm = (0..d)
            .map(|k| rows[i * d + k] * rows[i * d + k])
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        for k in 0..d {
            rows[i * d + k] /= norm;
        }
    }
}

//! Small dense symmetric linear algebra: cyclic Jacobi eigendecomposition
//! and helpers for PSD matrix square roots.
//!
//! Sizes here are tiny (feature dimension 64, corpus Gram matrices of a
//! few hundred), where Jacobi is accurate and dependency-free.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

/// Eigendecomposition of a symmetric matrix: `values` descending,
/// `vectors` row-major n×n with eigenvector `j` in column `j`.
#[derive(Debug, Clone)]
pub struct SymmetricEig {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric `n x n` matrix.
///
/// The input is read row-major; only its symmetric part matters. Runs
/// sweeps until the off-diagonal mass is negligible relative to the
/// matrix norm (or 64 sweeps, far beyond what these sizes need).
pub fn jacobi_eigh(matrix: &[f64], n: usize) -> SymmetricEig {
    assert_eq!(matrix.len(), n * n, "matrix must be n*n");
    let mut a = matrix.to_vec();
    // Symmetrize; callers pass nominally symmetric data.
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
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
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }
    SymmetricEig { values, vectors }
}

/// Dense row-major product of two `n x n` matrices.
pub fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues
/// are clipped to zero.
pub fn sqrtm_psd(matrix: &[f64], n: usize) -> Vec<f64> {
    let SymmetricEig { values, vectors } = jacobi_eigh(matrix, n);
    let mut out = vec![0.0; n * n];
    for (j, &lambda) in values.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        for r in 0..n {
            let vr = vectors[r * n + j] * s;
            if vr == 0.0 {
                continue;
            }
            for c in 0..n {
                out[r * n + c] += vr * vectors[c * n + j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn known_2x2() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let e = jacobi_eigh(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let n = 12;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let x = rng.gen_range(-1.0..1.0);
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        let e = jacobi_eigh(&a, n);
        let mut rebuilt = vec![0.0; n * n];
        for j in 0..n {
            for r in 0..n {
                for c in 0..n {
                    rebuilt[r * n + c] += e.vectors[r * n + j] * e.values[j] * e.vectors[c * n + j];
                }
            }
        }
        assert!(max_abs(&a, &rebuilt) < 1e-10);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|r| e.vectors[r * n + i] * e.vectors[r * n + j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sqrtm_squares_back() {
        // A = Bᵀ B is PSD; sqrtm(A)² reproduces A.
        let b = [1.0, 2.0, 0.5, -1.0, 0.25, 3.0, 2.0, 1.0, -0.5];
        let n = 3;
        let mut a = vec![0.0; 9];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    a[i * n + j] += b[k * n + i] * b[k * n + j];
                }
            }
        }
        let r = sqrtm_psd(&a, n);
        let rr = matmul(&r, &r, n);
        assert!(max_abs(&a, &rr) < 1e-10);
    }
}

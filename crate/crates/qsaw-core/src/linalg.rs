//! Dense linear algebra for small real matrices.
//!
//! The Hamiltonians and normal-equation systems in this crate are at most a
//! few hundred rows, so a cyclic Jacobi eigensolver and Gaussian elimination
//! with partial pivoting are both adequate and easy to audit. Jacobi in
//! particular keeps relative eigenvalue errors near n·eps, which the
//! block-structure checks rely on.

use alloc::vec;
use alloc::vec::Vec;
// Needed for f64 math in std-free builds; redundant (but harmless) whenever
// std is in the crate graph and its inherent methods win resolution.
#[allow(unused_imports)]
use num_traits::Float;

/// Symmetric real matrix in full row-major storage.
#[derive(Clone, Debug)]
pub struct SymMatrix {
    n: usize,
    a: Vec<f64>,
}

impl SymMatrix {
    /// Zero matrix of dimension `n`.
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, a: vec![0.0; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// Sets A[i][j] and A[j][i]; symmetry holds by construction.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
        self.a[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    /// Largest absolute asymmetry max|A[i][j] − A[j][i]|. Zero when built
    /// through `set_sym`; exposed so callers can assert Hermiticity.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Eigendecomposition of a symmetric matrix: `values` ascending,
/// `vectors[k]` the orthonormal eigenvector for `values[k]`.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi diagonalization.
///
/// Sweeps rotate away every off-diagonal pair until the off-diagonal
/// Frobenius norm drops below 1e-14 of the total, or 64 sweeps pass
/// (typical matrices here converge in < 12).
pub fn eigh(m: &SymMatrix) -> Eigh {
    let n = m.n;
    let mut a = m.a.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
            (2.0 * s).sqrt()
        };
        if off <= tol {
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
                let theta = 0.5 * (aqq - app) / apq;
                // smaller root of t² + 2θt − 1 = 0, for a stable rotation
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
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
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());

    let values = order.iter().map(|&k| a[k * n + k]).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i * n + k]).collect())
        .collect();
    Eigh { values, vectors }
}

/// Failure of a linear solve: the matrix is singular to working precision.
/// `null_direction` is a unit vector x with ‖Ax‖ ≈ 0, identifying the
/// underdetermined parameter combination.
#[derive(Clone, Debug, PartialEq)]
pub struct Singular {
    pub null_direction: Vec<f64>,
}

impl core::fmt::Display for Singular {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "singular linear system; null direction {:?}", self.null_direction)
    }
}

impl core::error::Error for Singular {}

/// Solves A·x = b for square row-major `a` by Gaussian elimination with
/// partial pivoting. On a zero pivot the null-space direction is recovered
/// from the eliminated triangle and returned in the error.
pub fn solve(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>, Singular> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut u = a.to_vec();
    let mut y = b.to_vec();

    let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let tiny = 1e-13 * scale;

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| u[i * n + col].abs().partial_cmp(&u[j * n + col].abs()).unwrap())
            .unwrap();
        if u[pivot_row * n + col].abs() <= tiny {
            return Err(Singular { null_direction: null_direction(&u, n, col) });
        }
        if pivot_row != col {
            for k in 0..n {
                u.swap(col * n + k, pivot_row * n + k);
            }
            y.swap(col, pivot_row);
        }
        let inv_p = 1.0 / u[col * n + col];
        for row in (col + 1)..n {
            let f = u[row * n + col] * inv_p;
            if f == 0.0 {
                continue;
            }
            u[row * n + col] = 0.0;
            for k in (col + 1)..n {
                u[row * n + k] -= f * u[col * n + k];
            }
            y[row] -= f * y[col];
        }
    }

    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = y[row];
        for k in (row + 1)..n {
            acc -= u[row * n + k] * x[k];
        }
        x[row] = acc / u[row * n + row];
    }
    Ok(x)
}

/// Back-substitutes the partially eliminated triangle for a vector in the
/// (numerical) kernel: free variable 1 at the deficient column.
fn null_direction(u: &[f64], n: usize, col: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[col] = 1.0;
    for row in (0..col).rev() {
        let mut acc = 0.0;
        for k in (row + 1)..=col {
            acc -= u[row * n + k] * x[k];
        }
        let d = u[row * n + row];
        x[row] = if d.abs() > 0.0 { acc / d } else { 0.0 };
    }
    let norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm > 0.0 {
        for t in &mut x {
            *t /= norm;
        }
    }
    x
}

/// Inverse of a symmetric positive-semidefinite matrix by column solves,
/// symmetrized on return so round trips stay symmetric to rounding.
pub fn invert_sym(a: &[f64], n: usize) -> Result<Vec<f64>, Singular> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve(a, &e, n)?;
        for row in 0..n {
            inv[row * n + col] = x[row];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    Ok(inv)
}

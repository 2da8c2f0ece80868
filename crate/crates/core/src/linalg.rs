//! Sparse symmetric positive definite solves.

use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::na::DMatrix;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};

/// Triplet accumulator for a square matrix.
pub struct Triplets {
    n: usize,
    coo: CooMatrix<f64>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Triplets { n, coo: CooMatrix::new(n, n) }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        self.coo.push(i, j, v);
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Factor the assembled matrix; duplicates are summed.
    pub fn factor(&self) -> Result<SpdFactor> {
        let csc = CscMatrix::from(&self.coo);
        let chol = CscCholesky::factor(&csc)
            .map_err(|e| Error::NotConverged(format!("cholesky factorisation failed: {e:?}")))?;
        Ok(SpdFactor { chol })
    }
}

pub struct SpdFactor {
    chol: CscCholesky<f64>,
}

impl SpdFactor {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = DMatrix::from_column_slice(b.len(), 1, b);
        self.chol.solve(&rhs).as_slice().to_vec()
    }
}

/// Outcome of a conjugate gradient run.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for `A x = b`.
///
/// `apply(x, y)` must write `A x` into `y`. `x` holds the initial guess
/// on entry and the approximate solution on exit.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = b.len();
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut it = 0;
    let mut rel = norm(&r) / bnorm;
    while rel > tol && it < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        rel = norm(&r) / bnorm;
    }
    CgOutcome { iterations: it, relative_residual: rel }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> Triplets {
        let mut t = Triplets::new(n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
            }
        }
        t
    }

    #[test]
    fn cholesky_and_cg_agree() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let direct = laplace_1d(n).factor().unwrap().solve(&b);
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        };
        let mut x = vec![0.0; n];
        let out = pcg(apply, &vec![2.0; n], &b, &mut x, 1e-13, 1000);
        assert!(out.relative_residual < 1e-12);
        for (a, c) in direct.iter().zip(&x) {
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn indefinite_matrix_fails_to_factor() {
        let mut t = Triplets::new(2);
        t.push(0, 0, 1.0);
        t.push(1, 1, -1.0);
        assert!(t.factor().is_err());
    }
}

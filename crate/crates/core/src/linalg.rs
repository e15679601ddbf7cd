//! Linear solves over the free unknowns.
//!
//! SPD systems up to [`DIRECT_LIMIT`] unknowns go through a sparse Cholesky
//! factorization, larger ones through Jacobi-preconditioned conjugate
//! gradients. Nonsymmetric systems always use sparse LU.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::sparse::{norm2, CsrMatrix};
use crate::{Error, Result};

pub const DIRECT_LIMIT: usize = 200_000;
pub const RELATIVE_TOLERANCE: f64 = 1e-10;

fn to_faer(a: &CsrMatrix, lower_only: bool) -> Result<SparseColMat<usize, f64>> {
    let t: Vec<Triplet<usize, usize, f64>> = a
        .triplets()
        .filter(|&(r, c, _)| !lower_only || r >= c)
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    SparseColMat::try_new_from_triplets(a.n_rows(), a.n_cols(), &t)
        .map_err(|e| Error::LinearSolver(format!("matrix conversion: {e:?}")))
}

fn column(b: &[f64]) -> Mat<f64> {
    Mat::from_fn(b.len(), 1, |i, _| b[i])
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.matvec(x).iter().zip(b).map(|(ax, b)| b - ax).collect()
}

/// Refine `x` with the given correction solver until the residual meets the
/// relative tolerance.
fn refine<F: Fn(&[f64]) -> Vec<f64>>(a: &CsrMatrix, b: &[f64], mut x: Vec<f64>, correct: F) -> Result<Vec<f64>> {
    let bnorm = norm2(b);
    for _ in 0..4 {
        let r = residual(a, &x, b);
        let rnorm = norm2(&r);
        if rnorm <= RELATIVE_TOLERANCE * bnorm || !rnorm.is_finite() {
            break;
        }
        let d = correct(&r);
        x.iter_mut().zip(&d).for_each(|(x, d)| *x += d);
    }
    let rnorm = norm2(&residual(a, &x, b));
    if !rnorm.is_finite() {
        return Err(Error::LinearSolver("solution is not finite".into()));
    }
    if rnorm > RELATIVE_TOLERANCE * bnorm {
        log::warn!(
            "direct solve residual {:.3e} exceeds tolerance (|b| = {:.3e})",
            rnorm,
            bnorm
        );
    }
    Ok(x)
}

/// Solve a symmetric positive definite system.
pub fn solve_spd(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n_rows();
    assert_eq!(b.len(), n);
    if n == 0 {
        return Ok(Vec::new());
    }
    if norm2(b) == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if n > DIRECT_LIMIT {
        return pcg(a, b, None, RELATIVE_TOLERANCE, 20 * n);
    }
    let llt = to_faer(a, true)?
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::LinearSolver(format!("Cholesky breakdown: {e:?}")))?;
    let solve = |rhs: &[f64]| {
        let x = llt.solve(&column(rhs));
        (0..rhs.len()).map(|i| x[(i, 0)]).collect::<Vec<f64>>()
    };
    let x = solve(b);
    refine(a, b, x, solve)
}

/// Solve a general square system by sparse LU.
pub fn solve_general(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n_rows();
    assert_eq!(b.len(), n);
    if n == 0 {
        return Ok(Vec::new());
    }
    if norm2(b) == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let lu = to_faer(a, false)?
        .sp_lu()
        .map_err(|e| Error::LinearSolver(format!("LU factorization failed: {e:?}")))?;
    let solve = |rhs: &[f64]| {
        let x = lu.solve(&column(rhs));
        (0..rhs.len()).map(|i| x[(i, 0)]).collect::<Vec<f64>>()
    };
    let x = solve(b);
    refine(a, b, x, solve)
}

/// Jacobi-preconditioned conjugate gradients.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::LinearSolver(format!(
            "non-positive diagonal entry at row {i}"
        )));
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = residual(a, &x, b);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(r, z)| r * z).sum();
    for it in 0..max_iter {
        if norm2(&r) <= rel_tol * bnorm {
            log::debug!("pcg converged in {it} iterations");
            return Ok(x);
        }
        let ap = a.matvec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(p, q)| p * q).sum();
        if !(pap > 0.0) {
            return Err(Error::LinearSolver(format!(
                "conjugate gradient breakdown at iteration {it} (pᵀAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(r, z)| r * z).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm2(&r) / bnorm;
    if res <= rel_tol {
        Ok(x)
    } else {
        Err(Error::CgNotConverged {
            iterations: max_iter,
            residual: res,
        })
    }
}

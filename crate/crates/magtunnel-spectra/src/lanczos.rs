//! Hermitian Krylov-Schur iteration with full reorthogonalization.
//!
//! The iteration targets the largest eigenvalues of a Hermitian positive
//! operator (here `(H - sigma)^{-1}`). Each cycle builds an orthonormal
//! Krylov basis with two passes of classical Gram-Schmidt, takes Ritz pairs
//! from the projected matrix, and restarts from the leading Ritz vectors plus
//! the current residual direction, so converged vectors stay in the basis.

use crate::error::{Result, SpectraError};
use faer::{Mat, Side};
use magtunnel::C64;

#[inline]
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale(a: &mut [C64], s: f64) {
    for x in a.iter_mut() {
        *x *= s;
    }
}

/// Orthogonalizes `w` against `basis` twice; returns the coefficients.
fn orthogonalize(basis: &[Vec<C64>], w: &mut [C64]) -> Vec<C64> {
    let mut coef = vec![C64::new(0.0, 0.0); basis.len()];
    for _ in 0..2 {
        for (c, v) in coef.iter_mut().zip(basis) {
            let p = dot(v, w);
            axpy(-p, v, w);
            *c += p;
        }
    }
    coef
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    /// Wanted eigenpairs.
    pub nev: usize,
    /// Basis size per cycle.
    pub ncv: usize,
    pub max_restarts: usize,
}

/// Converged pairs, largest operator eigenvalue first.
#[derive(Debug, Clone)]
pub struct KrylovResult {
    pub theta: Vec<f64>,
    pub vectors: Vec<Vec<C64>>,
    /// Whatever the acceptance callback returned for each pair.
    pub accepted: Vec<(f64, f64)>,
    pub restarts: usize,
    pub applications: usize,
}

/// Runs the iteration.
///
/// `apply(x, y)` computes `y = T x` for the Hermitian positive operator `T`.
/// `accept(theta, x)` returns `(value, residual)` for a unit Ritz vector; a pair
/// is converged when `residual <= tol`.
pub fn krylov_schur<A, F>(
    n: usize,
    mut apply: A,
    start: Vec<C64>,
    opts: KrylovOptions,
    tol: f64,
    mut accept: F,
    mut fresh: impl FnMut() -> Vec<C64>,
) -> Result<KrylovResult>
where
    A: FnMut(&[C64], &mut [C64]),
    F: FnMut(f64, &[C64]) -> (f64, f64),
{
    let KrylovOptions { nev, ncv, max_restarts } = opts;
    let m = ncv.min(n);
    if nev == 0 || m < nev + 2 {
        return Err(SpectraError::Grid(format!("need 0 < nev and nev + 2 <= ncv <= n, got nev = {nev}, ncv = {ncv}, n = {n}")));
    }
    let keep = (nev + (m - nev) / 2).min(m - 1);
    let mut v0 = start;
    let s = norm(&v0);
    scale(&mut v0, 1.0 / s);
    let mut basis = vec![v0];
    // Arnoldi matrix, row-major (m + 1) x m.
    let mut hm = vec![C64::new(0.0, 0.0); (m + 1) * m];
    let mut j0 = 0;
    let mut applications = 0;
    let mut last = (Vec::new(), Vec::new());
    for cycle in 0..=max_restarts {
        for j in j0..m {
            let mut w = vec![C64::new(0.0, 0.0); n];
            apply(&basis[j], &mut w);
            applications += 1;
            let coef = orthogonalize(&basis, &mut w);
            for (i, c) in coef.into_iter().enumerate() {
                hm[i * m + j] += c;
            }
            let mut beta = norm(&w);
            if beta <= 1e-13 * hm[j * m + j].norm() {
                // Invariant subspace: continue with a fresh orthogonal direction.
                w = fresh();
                orthogonalize(&basis, &mut w);
                let b = norm(&w);
                scale(&mut w, 1.0 / b);
                beta = 0.0;
            } else {
                scale(&mut w, 1.0 / beta);
            }
            hm[(j + 1) * m + j] = C64::new(beta, 0.0);
            basis.push(w);
        }
        let s = Mat::<C64>::from_fn(m, m, |r, c| (hm[r * m + c] + hm[c * m + r].conj()) * 0.5);
        let eig = s
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| SpectraError::Factorization(format!("projected eigenproblem: {e:?}")))?;
        let u = eig.U();
        let vals = eig.S();
        // Largest first.
        let order: Vec<usize> = (0..m).rev().collect();
        let beta = hm[m * m + (m - 1)];
        let ritz = |k: usize| -> Vec<C64> {
            let col = order[k];
            let mut x = vec![C64::new(0.0, 0.0); n];
            for (jj, b) in basis.iter().take(m).enumerate() {
                axpy(u[(jj, col)], b, &mut x);
            }
            let s = norm(&x);
            scale(&mut x, 1.0 / s);
            x
        };
        let theta: Vec<f64> = order.iter().map(|&c| vals[c].re).collect();
        let xs: Vec<Vec<C64>> = (0..keep).map(ritz).collect();
        let acc: Vec<(f64, f64)> = (0..nev).map(|k| accept(theta[k], &xs[k])).collect();
        if acc.iter().all(|a| a.1 <= tol) {
            return Ok(KrylovResult {
                theta: theta[..nev].to_vec(),
                vectors: xs[..nev].to_vec(),
                accepted: acc,
                restarts: cycle,
                applications,
            });
        }
        last = (acc.iter().map(|a| a.0).collect(), acc.iter().map(|a| a.1).collect());
        // Thick restart on the leading Ritz vectors and the residual direction.
        let resid = basis.swap_remove(m);
        let mut new_hm = vec![C64::new(0.0, 0.0); (m + 1) * m];
        for k in 0..keep {
            new_hm[k * m + k] = C64::new(theta[k], 0.0);
            new_hm[keep * m + k] = beta * u[(m - 1, order[k])];
        }
        basis = xs;
        basis.push(resid);
        hm = new_hm;
        j0 = keep;
    }
    Err(SpectraError::NoConvergence {
        cycles: max_restarts,
        ritz: last.0,
        residuals: last.1,
    })
}

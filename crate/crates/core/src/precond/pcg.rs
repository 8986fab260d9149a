use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::dense::{symmetric_eigenvalues, tridiagonal_eigenvalues};
use crate::fem::{CsrMatrix, DenseMatrix};
use crate::scalar::{axpy, dot, norm2, Scalar};

use super::Preconditioner;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcgOptions {
    /// Stop once `‖r‖ / ‖b‖ ≤ tol`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// `λ_max / λ_min` of the Lanczos matrix; `None` without iterations.
    pub cond_estimate: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    /// Relative residual norms, starting with the initial one.
    pub residuals: Vec<f64>,
    pub wall_ms: f64,
}

/// Preconditioned conjugate gradients from `x₀ = 0`.
pub fn pcg<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    m: &dyn Preconditioner<T>,
    options: &PcgOptions,
) -> Result<(Vec<T>, SolveReport)> {
    let start = Instant::now();
    let n = a.nrows();
    if b.len() != n || m.dim() != n {
        return Err(Error::Dimension(format!(
            "operator {n}, right-hand side {}, preconditioner {}",
            b.len(),
            m.dim()
        )));
    }
    let mut x = vec![T::zero(); n];
    let bnorm = norm2(b).to64();
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                converged: true,
                cond_estimate: None,
                lambda_min: None,
                lambda_max: None,
                residuals: vec![0.0],
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            },
        ));
    }
    let mut r = b.to_vec();
    let mut z = m.apply(&r)?;
    let mut rz = dot(&r, &z);
    if rz <= T::zero() {
        return Err(Error::Indefinite {
            operator: "preconditioner",
            iteration: 0,
            value: rz.to64(),
        });
    }
    let mut p = z.clone();
    let mut residuals = vec![1.0];
    let mut alphas: Vec<T> = Vec::new();
    let mut betas: Vec<T> = Vec::new();
    let mut converged = false;
    let mut q = vec![T::zero(); n];
    for k in 0..options.max_iterations {
        a.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= T::zero() {
            return Err(Error::Indefinite {
                operator: "operator A",
                iteration: k,
                value: pq.to64(),
            });
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        alphas.push(alpha);
        let rel = norm2(&r).to64() / bnorm;
        residuals.push(rel);
        if rel <= options.tol {
            converged = true;
            break;
        }
        if k + 1 == options.max_iterations {
            break;
        }
        z = m.apply(&r)?;
        let rz_new = dot(&r, &z);
        if rz_new <= T::zero() {
            return Err(Error::Indefinite {
                operator: "preconditioner",
                iteration: k + 1,
                value: rz_new.to64(),
            });
        }
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let (lambda_min, lambda_max) = lanczos_extremes(&alphas, &betas);
    Ok((
        x,
        SolveReport {
            iterations: alphas.len(),
            converged,
            cond_estimate: lambda_min.zip(lambda_max).map(|(lo, hi)| hi / lo),
            lambda_min,
            lambda_max,
            residuals,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    ))
}

/// Extreme eigenvalues of the CG Lanczos tridiagonal.
fn lanczos_extremes<T: Scalar>(alphas: &[T], betas: &[T]) -> (Option<f64>, Option<f64>) {
    let k = alphas.len();
    if k == 0 {
        return (None, None);
    }
    let alphas: Vec<f64> = alphas.iter().map(|a| a.to64()).collect();
    let betas: Vec<f64> = betas.iter().map(|b| b.to64()).collect();
    let mut diag = Vec::with_capacity(k);
    let mut off = Vec::with_capacity(k.saturating_sub(1));
    diag.push(1.0 / alphas[0]);
    for j in 1..k {
        diag.push(1.0 / alphas[j] + betas[j - 1] / alphas[j - 1]);
        off.push(betas[j - 1].sqrt() / alphas[j - 1]);
    }
    let ev = tridiagonal_eigenvalues(&diag, &off);
    (ev.first().copied(), ev.last().copied())
}

/// Largest dimension accepted by [`dense_cond_oracle`].
pub const ORACLE_LIMIT: usize = 2500;

/// κ(M⁻¹A) from the dense symmetric matrix `Lᵀ M⁻¹ L`, `A = L Lᵀ`.
pub fn dense_cond_oracle<T: Scalar>(a: &CsrMatrix<T>, m: &dyn Preconditioner<T>) -> Result<f64> {
    let n = a.nrows();
    if n > ORACLE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "dense oracle limited to {ORACLE_LIMIT} unknowns, got {n}"
        )));
    }
    let chol = a.to_dense().cholesky()?;
    let l = chol.factor();
    let w: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|j| m.apply(l.col(j)))
        .collect::<Result<_>>()?;
    let w = DenseMatrix::from_columns(n, &w);
    let mut c = l.tr_matmul(&w);
    c.symmetrize();
    let ev = symmetric_eigenvalues(&c);
    let lo = ev[0].to64();
    let hi = ev[n - 1].to64();
    if lo <= 0.0 {
        return Err(Error::Indefinite {
            operator: "preconditioner",
            iteration: 0,
            value: lo,
        });
    }
    Ok(hi / lo)
}

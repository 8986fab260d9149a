//! Generalized symmetric eigenproblems `A ψ = λ B ψ` with `A` semidefinite and
//! `B` definite.
//!
//! Small problems are reduced to standard form by a Cholesky congruence and
//! solved densely. Larger sparse problems use shift-invert subspace iteration
//! with a Rayleigh–Ritz step, which only needs a sparse factorization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Scalar};

use super::dense::{symmetric_eigen, DenseMatrix};
use super::factor::{Factorization, Geometry, Kernel};
use super::sparse::CsrMatrix;

/// Largest dimension solved with the dense congruence method.
pub const DENSE_EIG_LIMIT: usize = 500;
const REGULARIZATION: f64 = 1e-12;
const SUBSPACE_TOL: f64 = 1e-10;
const SUBSPACE_MAXIT: usize = 300;

/// Lowest eigenpairs, eigenvalues ascending, eigenvectors `B`-orthonormal.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPairs<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
}

impl<T: Scalar> EigenPairs<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Adds a tiny multiple of the mean positive diagonal to zero diagonal entries of `b`.
pub fn regularize_mass<T: Scalar>(b: &CsrMatrix<T>) -> Result<CsrMatrix<T>> {
    let diag = b.diagonal();
    let positive: Vec<T> = diag.iter().copied().filter(|d| *d > T::zero()).collect();
    if positive.is_empty() {
        return Err(Error::SingularMass("mass matrix has no positive diagonal".into()));
    }
    if positive.len() == diag.len() {
        return Ok(b.clone());
    }
    let mean = positive.iter().copied().sum::<T>() / T::of(positive.len() as f64);
    let shift = mean * T::of(REGULARIZATION);
    let mut t = Vec::with_capacity(b.nnz() + diag.len());
    for i in 0..b.nrows() {
        let (cols, vals) = b.row(i);
        t.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
        if !(diag[i] > T::zero()) {
            t.push((i, i, shift));
        }
    }
    Ok(CsrMatrix::from_triplets(b.nrows(), b.ncols(), t))
}

/// Lowest `count` eigenpairs of the dense pencil `(a, b)`.
pub fn dense_pencil_eig<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    count: usize,
) -> Result<EigenPairs<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::Dimension("eigenproblem matrices must be square and equal".into()));
    }
    let chol = b
        .cholesky()
        .map_err(|e| Error::SingularMass(format!("Cholesky of mass matrix failed: {e}")))?;
    // C = L⁻¹ A L⁻ᵀ
    let mut x = a.clone();
    for j in 0..n {
        chol.forward(x.col_mut(j));
    }
    let mut c = x.transpose();
    for j in 0..n {
        chol.forward(c.col_mut(j));
    }
    c.symmetrize();
    let (vals, vecs) = symmetric_eigen(&c);
    let count = count.min(n);
    let mut vectors = Vec::with_capacity(count);
    for k in 0..count {
        let mut v = vecs.col(k).to_vec();
        chol.backward(&mut v);
        vectors.push(v);
    }
    Ok(EigenPairs {
        values: vals[..count].to_vec(),
        vectors,
    })
}

/// Lowest `count` eigenpairs of the sparse pencil `(a, b)` by dense reduction.
pub fn dense_generalized_eig<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &CsrMatrix<T>,
    count: usize,
) -> Result<EigenPairs<T>> {
    check_pencil(a, b)?;
    let b = regularize_mass(b)?;
    dense_pencil_eig(&a.to_dense(), &b.to_dense(), count)
}

/// Lowest `count` eigenpairs, choosing the dense or the shift-invert path by size.
pub fn lowest_eigenpairs<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &CsrMatrix<T>,
    geometry: Option<&Geometry>,
    count: usize,
) -> Result<EigenPairs<T>> {
    check_pencil(a, b)?;
    let n = a.nrows();
    let count = count.min(n);
    if n <= DENSE_EIG_LIMIT || 3 * count >= n {
        return dense_generalized_eig(a, b, count);
    }
    let b = regularize_mass(b)?;
    subspace_iteration(a, &b, geometry, count)
}

fn check_pencil<T: Scalar>(a: &CsrMatrix<T>, b: &CsrMatrix<T>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::Dimension(format!(
            "pencil shapes {}×{} and {}×{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

fn subspace_iteration<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &CsrMatrix<T>,
    geometry: Option<&Geometry>,
    count: usize,
) -> Result<EigenPairs<T>> {
    let n = a.nrows();
    if count == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: vec![],
        });
    }
    let tra: T = a.diagonal().into_iter().sum();
    let trb: T = b.diagonal().into_iter().sum();
    let shift = if tra > T::zero() {
        T::of(1e-6) * tra / trb
    } else {
        T::one()
    };
    let mut t = Vec::with_capacity(a.nnz() + b.nnz());
    for i in 0..n {
        let (cols, vals) = a.row(i);
        t.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
        let (cols, vals) = b.row(i);
        t.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, shift * v)));
    }
    let shifted = CsrMatrix::from_triplets(n, n, t);
    let fact = Factorization::new(&shifted, geometry, Kernel::None, false)?;

    let p = (count + count.max(6)).min(n);
    let anorm = a.frobenius_norm();
    let bnorm = b.frobenius_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<Vec<T>> = (0..p)
        .map(|_| (0..n).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect())
        .collect();
    let mut bx = vec![T::zero(); n];
    let mut ax = vec![T::zero(); n];
    for _ in 0..SUBSPACE_MAXIT {
        let mut y = Vec::with_capacity(p);
        for xi in &x {
            b.matvec(xi, &mut bx);
            y.push(fact.solve(&bx)?);
        }
        orthonormalize(&mut y);
        let ay: Vec<Vec<T>> = y.iter().map(|v| a.mul(v)).collect();
        let by: Vec<Vec<T>> = y.iter().map(|v| b.mul(v)).collect();
        let m = y.len();
        let mut ap = DenseMatrix::from_fn(m, m, |i, j| dot(&y[i], &ay[j]));
        let mut bp = DenseMatrix::from_fn(m, m, |i, j| dot(&y[i], &by[j]));
        ap.symmetrize();
        bp.symmetrize();
        let ritz = dense_pencil_eig(&ap, &bp, m)?;
        x = ritz
            .vectors
            .iter()
            .map(|c| {
                let mut v = vec![T::zero(); n];
                for (k, &ck) in c.iter().enumerate() {
                    crate::scalar::axpy(ck, &y[k], &mut v);
                }
                v
            })
            .collect();
        let mut converged = true;
        for k in 0..count.min(m) {
            a.matvec(&x[k], &mut ax);
            b.matvec(&x[k], &mut bx);
            let lam = ritz.values[k];
            let r: Vec<T> = ax.iter().zip(&bx).map(|(&p, &q)| p - lam * q).collect();
            if norm2(&r) > T::of(SUBSPACE_TOL) * (anorm + lam.abs() * bnorm) {
                converged = false;
                break;
            }
        }
        if converged {
            x.truncate(count);
            return Ok(EigenPairs {
                values: ritz.values[..count].to_vec(),
                vectors: x,
            });
        }
    }
    Err(Error::EigenNotConverged(format!(
        "subspace iteration for {count} eigenpairs of a dimension-{n} pencil"
    )))
}

/// Modified Gram–Schmidt (two passes), dropping numerically dependent vectors.
pub(crate) fn orthonormalize<T: Scalar>(vs: &mut Vec<Vec<T>>) {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(vs.len());
    for mut v in vs.drain(..) {
        let before = norm2(&v);
        if before == T::zero() {
            continue;
        }
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &v);
                crate::scalar::axpy(-c, q, &mut v);
            }
        }
        let after = norm2(&v);
        if after > T::of(1e-10) * before {
            for x in &mut v {
                *x /= after;
            }
            out.push(v);
        }
    }
    *vs = out;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> CsrMatrix<f64> {
        CsrMatrix::from_triplets(v.len(), v.len(), v.iter().enumerate().map(|(i, &x)| (i, i, x)).collect())
    }

    #[test]
    fn diagonal_pencil() {
        let e = dense_generalized_eig(&diag(&[2.0, 1.0]), &CsrMatrix::identity(2), 2).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_mass_rows_are_regularized() {
        let b = diag(&[1.0, 0.0]);
        let r = regularize_mass(&b).unwrap();
        assert!(r.get(1, 1) > 0.0 && r.get(1, 1) < 1e-11);
        assert!(regularize_mass(&diag(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn subspace_matches_dense() {
        // 1D Laplacian pencil with lumped mass, large enough for the iterative path
        let n = 600;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let b = diag(&vec![1.0; n]);
        let it = lowest_eigenpairs(&a, &b, None, 4).unwrap();
        let de = dense_generalized_eig(&a, &b, 4).unwrap();
        for k in 0..4 {
            assert!((it.values[k] - de.values[k]).abs() < 1e-10 * de.values[3]);
        }
    }
}

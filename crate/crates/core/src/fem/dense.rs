//! Small dense kernels: column-major matrices, Cholesky, and the symmetric
//! eigensolver (Householder tridiagonalization followed by implicit QL).

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Column-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    nrows: usize,
    ncols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![T::zero(); nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(nrows: usize, cols: &[Vec<T>]) -> Self {
        let mut data = Vec::with_capacity(nrows * cols.len());
        for c in cols {
            assert_eq!(c.len(), nrows);
            data.extend_from_slice(c);
        }
        Self {
            nrows,
            ncols: cols.len(),
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn columns(&self) -> Vec<Vec<T>> {
        (0..self.ncols).map(|j| self.col(j).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![T::zero(); self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != T::zero() {
                for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                    *yi += a * xj;
                }
            }
        }
        y
    }

    pub fn matmul(&self, b: &Self) -> Self {
        assert_eq!(self.ncols, b.nrows);
        let mut c = Self::zeros(self.nrows, b.ncols);
        for j in 0..b.ncols {
            for k in 0..self.ncols {
                let bkj = b[(k, j)];
                if bkj == T::zero() {
                    continue;
                }
                let (src, dst) = (k * self.nrows, j * c.nrows);
                for i in 0..self.nrows {
                    let v = self.data[src + i] * bkj;
                    c.data[dst + i] += v;
                }
            }
        }
        c
    }

    /// `selfᵀ · b`
    pub fn tr_matmul(&self, b: &Self) -> Self {
        assert_eq!(self.nrows, b.nrows);
        Self::from_fn(self.ncols, b.ncols, |i, j| {
            crate::scalar::dot(self.col(i), b.col(j))
        })
    }

    /// Replaces the matrix by `(A + Aᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.nrows, self.ncols);
        let half = T::of(0.5);
        for j in 0..self.ncols {
            for i in (j + 1)..self.nrows {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Lower Cholesky factor `L` with `A = L Lᵀ`.
    pub fn cholesky(&self) -> Result<Cholesky<T>> {
        assert_eq!(self.nrows, self.ncols);
        let n = self.nrows;
        let mut l = self.clone();
        for j in 0..n {
            for k in 0..j {
                let ljk = l[(j, k)];
                if ljk == T::zero() {
                    continue;
                }
                for i in j..n {
                    let v = l[(i, k)] * ljk;
                    l[(i, j)] -= v;
                }
            }
            let d = l[(j, j)];
            if !(d > T::zero()) {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: d.to64(),
                });
            }
            let s = d.sqrt();
            for i in j..n {
                l[(i, j)] /= s;
            }
            for i in 0..j {
                l[(i, j)] = T::zero();
            }
        }
        Ok(Cholesky { l })
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.nrows + i]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.nrows + i]
    }
}

#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: DenseMatrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(&self) -> &DenseMatrix<T> {
        &self.l
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [T]) {
        let n = self.l.nrows;
        for j in 0..n {
            b[j] /= self.l[(j, j)];
            let bj = b[j];
            if bj != T::zero() {
                let col = self.l.col(j);
                for i in (j + 1)..n {
                    b[i] -= col[i] * bj;
                }
            }
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward(&self, b: &mut [T]) {
        let n = self.l.nrows;
        for j in (0..n).rev() {
            let col = self.l.col(j);
            let mut acc = b[j];
            for i in (j + 1)..n {
                acc -= col[i] * b[i];
            }
            b[j] = acc / col[j];
        }
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        self.forward(b);
        self.backward(b);
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn symmetric_eigen<T: Scalar>(a: &DenseMatrix<T>) -> (Vec<T>, DenseMatrix<T>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if n == 0 {
        return (vec![], DenseMatrix::zeros(0, 0));
    }
    // JAMA layout: v[i][j] row-major
    let mut v: Vec<T> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(n, &mut v, &mut d, &mut e);
    // transpose so that each eigenvector is a contiguous row during the QL sweeps
    let mut w = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            w[j * n + i] = v[i * n + j];
        }
    }
    tql2(n, &mut d, &mut e, Some(&mut w));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| d[p].partial_cmp(&d[q]).unwrap());
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vecs.col_mut(col).copy_from_slice(&w[k * n..(k + 1) * n]);
    }
    (values, vecs)
}

/// Eigenvalues (ascending) of a symmetric matrix.
pub fn symmetric_eigenvalues<T: Scalar>(a: &DenseMatrix<T>) -> Vec<T> {
    let n = a.nrows();
    if n == 0 {
        return vec![];
    }
    let mut v: Vec<T> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut d, &mut e, None);
    d.sort_by(|p, q| p.partial_cmp(q).unwrap());
    d
}

/// Eigenvalues (ascending) of the symmetric tridiagonal matrix with the given
/// diagonal and off-diagonal (`off.len() == diag.len() - 1`).
pub fn tridiagonal_eigenvalues<T: Scalar>(diag: &[T], off: &[T]) -> Vec<T> {
    let n = diag.len();
    if n == 0 {
        return vec![];
    }
    assert_eq!(off.len() + 1, n);
    let mut d = diag.to_vec();
    // tql2 expects e[i] to hold the subdiagonal entry (i, i-1)
    let mut e = vec![T::zero(); n];
    e[1..n].copy_from_slice(off);
    tql2(n, &mut d, &mut e, None);
    d.sort_by(|p, q| p.partial_cmp(q).unwrap());
    d
}

/// Householder reduction to tridiagonal form, accumulating the transform in `v`.
fn tred2<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
                v[idx(j, i)] = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = T::zero();
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// Implicit QL on the tridiagonal (d, e). When `w` is given, its rows are the
/// accumulated eigenvectors (row k pairs with d[k]).
fn tql2<T: Scalar>(n: usize, d: &mut [T], e: &mut [T], mut w: Option<&mut [T]>) {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    let two = T::of(2.0);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(w) = w.as_deref_mut() {
                        let (lo, hi) = w.split_at_mut((i + 1) * n);
                        let wi = &mut lo[i * n..];
                        let wi1 = &mut hi[..n];
                        for k in 0..n {
                            let hk = wi1[k];
                            wi1[k] = s * wi[k] + c * hk;
                            wi[k] = c * wi[k] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if !(e[l].abs() > eps * tst1) || iter > 60 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
}

//! Sparse symmetric LDLᵀ factorization.
//!
//! Variables carry a geometric footprint on the fine node lattice; the
//! elimination order is a geometric nested dissection and the numeric phase is
//! multifrontal with dense fronts. Without geometry, or for small systems, a
//! single dense front is used.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::sparse::CsrMatrix;

/// Below this dimension the factorization is a single dense front.
pub const DENSE_LIMIT: usize = 400;
const LEAF_SIZE: usize = 64;

/// Location of a variable on the fine node lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Footprint {
    /// A nodal unknown at node coordinates `(x, y)`.
    Point { x: u32, y: u32 },
    /// An unknown coupled to every node of the closed box (a constraint multiplier).
    Cell { x0: u32, x1: u32, y0: u32, y1: u32 },
}

impl Footprint {
    fn span(&self, axis: usize) -> (u32, u32) {
        match (*self, axis) {
            (Footprint::Point { x, .. }, 0) => (x, x),
            (Footprint::Point { y, .. }, _) => (y, y),
            (Footprint::Cell { x0, x1, .. }, 0) => (x0, x1),
            (Footprint::Cell { y0, y1, .. }, _) => (y0, y1),
        }
    }
}

/// Footprints of all variables plus a preferred separator spacing.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub footprints: Vec<Footprint>,
    /// Separator lines are preferably placed on multiples of this value, so
    /// that box footprints aligned to it never straddle a separator.
    pub stride: u32,
}

/// Null space of a singular operator that the solver should account for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    None,
    /// Constant vectors (pure Neumann problem on a floating region).
    Constants,
}

#[derive(Clone, Debug)]
struct Front<T> {
    start: usize,
    size: usize,
    boundary: Vec<usize>,
    /// Unit lower panel, `(size + boundary.len()) × size`, column-major.
    panel: Vec<T>,
    diag: Vec<T>,
}

#[derive(Clone, Debug)]
struct TreeNode {
    start: usize,
    end: usize,
    children: Vec<usize>,
}

/// LDLᵀ factors of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct Factorization<T> {
    n: usize,
    /// `perm[position] = variable`
    perm: Vec<usize>,
    fronts: Vec<Front<T>>,
    grounded: bool,
}

impl<T: Scalar> Factorization<T> {
    /// Factors `a` (full symmetric storage). `quasi_definite` allows negative
    /// pivots; otherwise every pivot must be positive.
    pub fn new(
        a: &CsrMatrix<T>,
        geometry: Option<&Geometry>,
        kernel: Kernel,
        quasi_definite: bool,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "cannot factor a {}×{} matrix",
                n,
                a.ncols()
            )));
        }
        if let Some(g) = geometry {
            if g.footprints.len() != n {
                return Err(Error::Dimension(format!(
                    "{} footprints for {} variables",
                    g.footprints.len(),
                    n
                )));
            }
        }
        if kernel == Kernel::Constants && n > 0 {
            let keep: Vec<usize> = (0..n - 1).collect();
            let sub = a.principal_submatrix(&keep);
            let geo = geometry.map(|g| Geometry {
                footprints: g.footprints[..n - 1].to_vec(),
                stride: g.stride,
            });
            let mut f = Self::new(&sub, geo.as_ref(), Kernel::None, quasi_definite)?;
            f.n = n;
            f.grounded = true;
            return Ok(f);
        }
        let (perm, tree) = match geometry {
            Some(g) if n >= DENSE_LIMIT => Dissection::run(g, LEAF_SIZE),
            _ => (
                (0..n).collect(),
                vec![TreeNode {
                    start: 0,
                    end: n,
                    children: vec![],
                }],
            ),
        };
        let fronts = numeric(a, &perm, &tree, quasi_definite)?;
        Ok(Self {
            n,
            perm,
            fronts,
            grounded: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored factor entries (panel plus diagonal).
    pub fn stored_entries(&self) -> usize {
        self.fronts.iter().map(|f| f.panel.len() + f.diag.len()).sum()
    }

    /// Number of negative pivots (inertia of the factored matrix).
    pub fn negative_pivots(&self) -> usize {
        self.fronts
            .iter()
            .flat_map(|f| f.diag.iter())
            .filter(|d| **d < T::zero())
            .count()
    }

    /// Solves `A x = b` in place. For a constant kernel the right-hand side
    /// must sum to zero and the returned solution has zero mean.
    pub fn solve_in_place(&self, b: &mut [T]) -> Result<()> {
        assert_eq!(b.len(), self.n);
        if self.grounded {
            let sum: T = b.iter().copied().sum();
            let abs: T = b.iter().map(|v| v.abs()).sum();
            let tol = T::of(1e-10).max(T::epsilon() * T::of(100.0));
            if sum.abs() > tol * abs {
                return Err(Error::IncompatibleRhs((sum / abs).to64()));
            }
        }
        self.solve_unchecked(b);
        Ok(())
    }

    fn solve_unchecked(&self, b: &mut [T]) {
        let m = if self.grounded { self.n - 1 } else { self.n };
        let mut y: Vec<T> = self.perm.iter().map(|&v| b[v]).collect();
        for f in &self.fronts {
            let nf = f.size + f.boundary.len();
            for k in 0..f.size {
                let yk = y[f.start + k];
                if yk == T::zero() {
                    continue;
                }
                let col = &f.panel[k * nf..(k + 1) * nf];
                for i in (k + 1)..f.size {
                    y[f.start + i] -= col[i] * yk;
                }
                for (bi, &q) in f.boundary.iter().enumerate() {
                    y[q] -= col[f.size + bi] * yk;
                }
            }
        }
        for f in &self.fronts {
            for k in 0..f.size {
                y[f.start + k] /= f.diag[k];
            }
        }
        for f in self.fronts.iter().rev() {
            let nf = f.size + f.boundary.len();
            for k in (0..f.size).rev() {
                let col = &f.panel[k * nf..(k + 1) * nf];
                let mut acc = y[f.start + k];
                for i in (k + 1)..f.size {
                    acc -= col[i] * y[f.start + i];
                }
                for (bi, &q) in f.boundary.iter().enumerate() {
                    acc -= col[f.size + bi] * y[q];
                }
                y[f.start + k] = acc;
            }
        }
        for (p, &v) in self.perm.iter().enumerate() {
            b[v] = y[p];
        }
        debug_assert_eq!(m, self.perm.len());
        if self.grounded {
            b[m] = T::zero();
            let mean = b.iter().copied().sum::<T>() / T::of(self.n as f64);
            for v in b.iter_mut() {
                *v -= mean;
            }
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    /// Solve followed by up to two steps of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &CsrMatrix<T>, b: &[T]) -> Result<Vec<T>> {
        let mut x = self.solve(b)?;
        let bnorm = crate::scalar::norm2(b);
        let mut r = vec![T::zero(); b.len()];
        for _ in 0..2 {
            a.matvec(&x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = *bi - *ri;
            }
            if crate::scalar::norm2(&r) <= T::epsilon() * T::of(10.0) * bnorm {
                break;
            }
            if self.grounded {
                let mean = r.iter().copied().sum::<T>() / T::of(r.len() as f64);
                for v in r.iter_mut() {
                    *v -= mean;
                }
            }
            self.solve_unchecked(&mut r);
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += *ri;
            }
        }
        Ok(x)
    }
}

struct Dissection<'a> {
    geo: &'a Geometry,
    leaf: usize,
    perm: Vec<usize>,
    tree: Vec<TreeNode>,
}

impl<'a> Dissection<'a> {
    fn run(geo: &'a Geometry, leaf: usize) -> (Vec<usize>, Vec<TreeNode>) {
        let mut d = Dissection {
            geo,
            leaf,
            perm: Vec::with_capacity(geo.footprints.len()),
            tree: Vec::new(),
        };
        let all: Vec<usize> = (0..geo.footprints.len()).collect();
        d.dissect(all);
        (d.perm, d.tree)
    }

    fn push(&mut self, vars: Vec<usize>, children: Vec<usize>) -> usize {
        let start = self.perm.len();
        self.perm.extend(vars);
        self.tree.push(TreeNode {
            start,
            end: self.perm.len(),
            children,
        });
        self.tree.len() - 1
    }

    fn dissect(&mut self, vars: Vec<usize>) -> usize {
        if vars.len() <= self.leaf {
            return self.push(vars, vec![]);
        }
        match self.split(&vars) {
            Some((left, sep, right)) => {
                let a = self.dissect(left);
                let b = self.dissect(right);
                self.push(sep, vec![a, b])
            }
            None => self.push(vars, vec![]),
        }
    }

    fn extent(&self, vars: &[usize], axis: usize) -> (u32, u32) {
        vars.iter().fold((u32::MAX, 0), |(lo, hi), &v| {
            let (a, b) = self.geo.footprints[v].span(axis);
            (lo.min(a), hi.max(b))
        })
    }

    fn cut_line(&self, lo: u32, hi: u32) -> Option<u32> {
        if hi < lo + 2 {
            return None;
        }
        let mid = (lo + hi) / 2;
        let s = self.geo.stride.max(1);
        if s > 1 {
            let quarter = (hi - lo) / 4;
            let (wlo, whi) = (lo + quarter, hi - quarter);
            let m = ((mid + s / 2) / s) * s;
            for c in [m, m.saturating_sub(s), m + s] {
                if c > lo && c < hi && c >= wlo && c <= whi {
                    return Some(c);
                }
            }
        }
        Some(mid)
    }

    #[allow(clippy::type_complexity)]
    fn split(&self, vars: &[usize]) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let ex = self.extent(vars, 0);
        let ey = self.extent(vars, 1);
        let axes = if ex.1 - ex.0 >= ey.1 - ey.0 {
            [(0, ex), (1, ey)]
        } else {
            [(1, ey), (0, ex)]
        };
        for (axis, (lo, hi)) in axes {
            let Some(c) = self.cut_line(lo, hi) else {
                continue;
            };
            let (mut left, mut sep, mut right) = (Vec::new(), Vec::new(), Vec::new());
            for &v in vars {
                let fp = &self.geo.footprints[v];
                let (a, b) = fp.span(axis);
                let is_point = matches!(fp, Footprint::Point { .. });
                if b < c || (!is_point && b == c) {
                    left.push(v);
                } else if a > c || (!is_point && a == c) {
                    right.push(v);
                } else {
                    sep.push(v);
                }
            }
            if !left.is_empty() && !right.is_empty() {
                return Some((left, sep, right));
            }
        }
        None
    }
}

fn numeric<T: Scalar>(
    a: &CsrMatrix<T>,
    perm: &[usize],
    tree: &[TreeNode],
    quasi_definite: bool,
) -> Result<Vec<Front<T>>> {
    let n = perm.len();
    let mut pos = vec![0usize; n];
    for (p, &v) in perm.iter().enumerate() {
        pos[v] = p;
    }
    let mut mark = vec![usize::MAX; n];
    let mut loc = vec![0usize; n];
    let mut updates: Vec<Option<Vec<T>>> = vec![None; tree.len()];
    let mut boundaries: Vec<Vec<usize>> = vec![Vec::new(); tree.len()];
    let mut fronts = Vec::with_capacity(tree.len());

    for (t, node) in tree.iter().enumerate() {
        let (start, end) = (node.start, node.end);
        let s = end - start;
        let mut bnd = Vec::new();
        for p in start..end {
            let (cols, _) = a.row(perm[p]);
            for &u in cols {
                let q = pos[u];
                if q >= end && mark[q] != t {
                    mark[q] = t;
                    bnd.push(q);
                }
            }
        }
        for &c in &node.children {
            for &q in &boundaries[c] {
                if q < start {
                    return Err(Error::Dimension(
                        "nested dissection separator does not decouple subdomains".into(),
                    ));
                }
                if q >= end && mark[q] != t {
                    mark[q] = t;
                    bnd.push(q);
                }
            }
        }
        bnd.sort_unstable();
        let nf = s + bnd.len();
        for p in start..end {
            loc[p] = p - start;
        }
        for (k, &q) in bnd.iter().enumerate() {
            loc[q] = s + k;
        }

        let mut f = vec![T::zero(); nf * nf];
        for p in start..end {
            let j = p - start;
            let (cols, vals) = a.row(perm[p]);
            for (&u, &val) in cols.iter().zip(vals) {
                let q = pos[u];
                if q >= p {
                    f[j * nf + loc[q]] += val;
                }
            }
        }
        for &c in &node.children {
            let u = updates[c].take().expect("child update present");
            let cb = &boundaries[c];
            let bc = cb.len();
            let map: Vec<usize> = cb.iter().map(|&q| loc[q]).collect();
            for jj in 0..bc {
                let dst = map[jj] * nf;
                let src = &u[jj * bc..(jj + 1) * bc];
                for ii in jj..bc {
                    f[dst + map[ii]] += src[ii];
                }
            }
        }

        let diag = partial_ldlt(&mut f, nf, s, start, perm, quasi_definite)?;

        let b = nf - s;
        if b > 0 {
            let mut u = vec![T::zero(); b * b];
            for jj in 0..b {
                let src = (s + jj) * nf + s;
                u[jj * b + jj..(jj + 1) * b].copy_from_slice(&f[src + jj..src + b]);
            }
            updates[t] = Some(u);
        }
        f.truncate(nf * s);
        f.shrink_to_fit();
        boundaries[t] = bnd.clone();
        fronts.push(Front {
            start,
            size: s,
            boundary: bnd,
            panel: f,
            diag,
        });
    }
    Ok(fronts)
}

/// Eliminates the first `s` columns of the dense front `f` (lower triangle,
/// column-major `nf × nf`), leaving the Schur complement in the trailing block.
fn partial_ldlt<T: Scalar>(
    f: &mut [T],
    nf: usize,
    s: usize,
    start: usize,
    perm: &[usize],
    quasi_definite: bool,
) -> Result<Vec<T>> {
    let mut diag = Vec::with_capacity(s);
    for k in 0..s {
        let d = f[k * nf + k];
        let ok = if quasi_definite {
            d != T::zero() && d.is_finite()
        } else {
            d > T::zero() && d.is_finite()
        };
        if !ok {
            return Err(Error::NotPositiveDefinite {
                pivot: perm[start + k],
                value: d.to64(),
            });
        }
        diag.push(d);
        let (head, tail) = f.split_at_mut((k + 1) * nf);
        let colk = &head[k * nf..];
        for j in (k + 1)..s {
            let c = colk[j] / d;
            if c == T::zero() {
                continue;
            }
            let dst = &mut tail[(j - k - 1) * nf + j..(j - k) * nf];
            for (x, &l) in dst.iter_mut().zip(&colk[j..nf]) {
                *x -= c * l;
            }
        }
    }
    // trailing Schur update, four panel columns at a time
    let (head, tail) = f.split_at_mut(s * nf);
    for j in s..nf {
        let dst = &mut tail[(j - s) * nf + j..(j - s + 1) * nf];
        let mut k = 0;
        while k + 4 <= s {
            let c0 = head[k * nf + j] / diag[k];
            let c1 = head[(k + 1) * nf + j] / diag[k + 1];
            let c2 = head[(k + 2) * nf + j] / diag[k + 2];
            let c3 = head[(k + 3) * nf + j] / diag[k + 3];
            let l0 = &head[k * nf + j..(k + 1) * nf];
            let l1 = &head[(k + 1) * nf + j..(k + 2) * nf];
            let l2 = &head[(k + 2) * nf + j..(k + 3) * nf];
            let l3 = &head[(k + 3) * nf + j..(k + 4) * nf];
            for i in 0..dst.len() {
                dst[i] -= c0 * l0[i] + c1 * l1[i] + c2 * l2[i] + c3 * l3[i];
            }
            k += 4;
        }
        while k < s {
            let c = head[k * nf + j] / diag[k];
            let l = &head[k * nf + j..(k + 1) * nf];
            for (x, &lv) in dst.iter_mut().zip(l) {
                *x -= c * lv;
            }
            k += 1;
        }
    }
    for k in 0..s {
        let d = diag[k];
        for x in &mut head[k * nf + k + 1..(k + 1) * nf] {
            *x /= d;
        }
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_5pt(m: usize) -> (CsrMatrix<f64>, Geometry) {
        let idx = |i: usize, j: usize| j * m + i;
        let mut t = Vec::new();
        let mut fps = Vec::new();
        for j in 0..m {
            for i in 0..m {
                fps.push(Footprint::Point {
                    x: i as u32,
                    y: j as u32,
                });
                t.push((idx(i, j), idx(i, j), 4.0));
                if i > 0 {
                    t.push((idx(i, j), idx(i - 1, j), -1.0));
                }
                if i + 1 < m {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                }
                if j > 0 {
                    t.push((idx(i, j), idx(i, j - 1), -1.0));
                }
                if j + 1 < m {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                }
            }
        }
        (
            CsrMatrix::from_triplets(m * m, m * m, t),
            Geometry {
                footprints: fps,
                stride: 1,
            },
        )
    }

    fn residual(a: &CsrMatrix<f64>, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul(x);
        let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        r.sqrt() / b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_and_hand_solve() {
        let i = CsrMatrix::<f64>::identity(3);
        let f = Factorization::new(&i, None, Kernel::None, false).unwrap();
        assert_eq!(f.solve(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let a = CsrMatrix::<f64>::from_triplets(
            2,
            2,
            vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)],
        );
        let x = Factorization::new(&a, None, Kernel::None, false)
            .unwrap()
            .solve(&[3.0, 3.0])
            .unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nested_dissection_matches_dense_front() {
        let (a, geo) = laplacian_5pt(45);
        let b: Vec<f64> = (0..a.nrows()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let nd = Factorization::new(&a, Some(&geo), Kernel::None, false).unwrap();
        assert!(nd.fronts.len() > 1);
        let dense = Factorization::new(&a, None, Kernel::None, false).unwrap();
        let x1 = nd.solve(&b).unwrap();
        let x2 = dense.solve(&b).unwrap();
        assert!(residual(&a, &x1, &b) < 1e-12);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-10);
        }
        assert!(nd.stored_entries() < dense.stored_entries());
    }

    #[test]
    fn rejects_indefinite_unless_allowed() {
        let a = CsrMatrix::<f64>::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)],
        );
        assert!(Factorization::new(&a, None, Kernel::None, false).is_err());
        let f = Factorization::new(&a, None, Kernel::None, true).unwrap();
        assert_eq!(f.negative_pivots(), 1);
        let x = f.solve(&[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_kernel_grounding() {
        // path graph Laplacian
        let n = 5;
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.extend([(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0), (i + 1, i, -1.0)]);
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let f = Factorization::new(&a, None, Kernel::Constants, false).unwrap();
        let b = vec![1.0, 0.0, 0.0, 0.0, -1.0];
        let x = f.solve_refined(&a, &b).unwrap();
        assert!(residual(&a, &x, &b) < 1e-12);
        assert!(x.iter().sum::<f64>().abs() < 1e-13);
        assert!(matches!(
            f.solve(&[1.0; 5]),
            Err(Error::IncompatibleRhs(_))
        ));
    }
}

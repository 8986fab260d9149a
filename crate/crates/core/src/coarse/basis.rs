//! Coarse bases stored as sparse columns over the global free dofs.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{CsrMatrix, DenseMatrix};
use crate::scalar::Scalar;

/// One basis vector: sorted dof indices and values.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseColumn<T> {
    pub dofs: Vec<u32>,
    pub values: Vec<T>,
}

impl<T: Scalar> SparseColumn<T> {
    /// Builds a column from `(dof, value)` pairs, dropping exact zeros.
    pub fn from_pairs(mut pairs: Vec<(usize, T)>) -> Self {
        pairs.sort_unstable_by_key(|p| p.0);
        let mut dofs = Vec::with_capacity(pairs.len());
        let mut values = Vec::with_capacity(pairs.len());
        for (d, v) in pairs {
            if v != T::zero() {
                dofs.push(d as u32);
                values.push(v);
            }
        }
        Self { dofs, values }
    }

    pub fn nnz(&self) -> usize {
        self.dofs.len()
    }

    pub fn dot(&self, x: &[T]) -> T {
        self.dofs
            .iter()
            .zip(&self.values)
            .map(|(&d, &v)| v * x[d as usize])
            .sum()
    }

    pub fn axpy_into(&self, alpha: T, y: &mut [T]) {
        for (&d, &v) in self.dofs.iter().zip(&self.values) {
            y[d as usize] += alpha * v;
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n];
        self.axpy_into(T::one(), &mut out);
        out
    }
}

/// Prolongation `R` (dofs × coarse dimension) with sparse columns.
#[derive(Clone, Debug)]
pub struct CoarseBasis<T> {
    n_dofs: usize,
    columns: Vec<SparseColumn<T>>,
}

impl<T: Scalar> CoarseBasis<T> {
    pub fn new(n_dofs: usize, columns: Vec<SparseColumn<T>>) -> Result<Self> {
        for (j, c) in columns.iter().enumerate() {
            if c.dofs.last().is_some_and(|&d| d as usize >= n_dofs) {
                return Err(Error::Dimension(format!(
                    "basis column {j} references a dof beyond {n_dofs}"
                )));
            }
        }
        Ok(Self { n_dofs, columns })
    }

    pub fn empty(n_dofs: usize) -> Self {
        Self {
            n_dofs,
            columns: Vec::new(),
        }
    }

    /// Dense columns of the identity (the full fine space).
    pub fn identity(n_dofs: usize) -> Self {
        let columns = (0..n_dofs)
            .map(|d| SparseColumn {
                dofs: vec![d as u32],
                values: vec![T::one()],
            })
            .collect();
        Self { n_dofs, columns }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[SparseColumn<T>] {
        &self.columns
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(|c| c.nnz()).sum()
    }

    /// `Rᵀ r`
    pub fn restrict(&self, r: &[T]) -> Vec<T> {
        self.columns.iter().map(|c| c.dot(r)).collect()
    }

    /// `R c`
    pub fn extend(&self, c: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_dofs];
        for (col, &cj) in self.columns.iter().zip(c) {
            if cj != T::zero() {
                col.axpy_into(cj, &mut out);
            }
        }
        out
    }

    /// Galerkin product `Rᵀ A R`.
    pub fn galerkin(&self, a: &CsrMatrix<T>) -> DenseMatrix<T> {
        let m = self.dim();
        let n = self.n_dofs;
        // dof → (column, value) over columns touching the dof
        let mut counts = vec![0usize; n + 1];
        for c in &self.columns {
            for &d in &c.dofs {
                counts[d as usize + 1] += 1;
            }
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(0u32, T::zero()); counts[n]];
        for (j, c) in self.columns.iter().enumerate() {
            for (&d, &v) in c.dofs.iter().zip(&c.values) {
                entries[fill[d as usize]] = (j as u32, v);
                fill[d as usize] += 1;
            }
        }
        let mut g = DenseMatrix::zeros(m, m);
        let mut w = vec![T::zero(); n];
        let mut seen = vec![false; n];
        let mut touched = Vec::new();
        for (j, c) in self.columns.iter().enumerate() {
            for (&d, &v) in c.dofs.iter().zip(&c.values) {
                let (cols, vals) = a.row(d as usize);
                for (&u, &auv) in cols.iter().zip(vals) {
                    if !seen[u] {
                        seen[u] = true;
                        touched.push(u);
                    }
                    w[u] += auv * v;
                }
            }
            let gj = g.col_mut(j);
            for &u in &touched {
                let wu = w[u];
                for &(i, ri) in &entries[counts[u]..counts[u + 1]] {
                    if (i as usize) <= j {
                        gj[i as usize] += ri * wu;
                    }
                }
                w[u] = T::zero();
                seen[u] = false;
            }
            touched.clear();
        }
        for j in 0..m {
            for i in 0..j {
                let v = g[(i, j)];
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Dense column file: 16-byte header `{rows, cols}` (u64, little endian)
    /// followed by the column-major f64 entries.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(&(self.n_dofs as u64).to_le_bytes())?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        for c in &self.columns {
            for v in c.to_dense(self.n_dofs) {
                w.write_all(&v.to64().to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`CoarseBasis::write_binary`].
    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 16 {
            return Err(Error::Dimension("basis file shorter than its header".into()));
        }
        let rows = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() != 16 + 8 * rows * cols {
            return Err(Error::Dimension(format!(
                "basis file holds {} bytes, expected {} for {rows}×{cols}",
                bytes.len(),
                16 + 8 * rows * cols
            )));
        }
        let columns = (0..cols)
            .map(|j| {
                let pairs = (0..rows)
                    .map(|i| {
                        let o = 16 + 8 * (j * rows + i);
                        let v = f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
                        (i, T::of(v))
                    })
                    .collect();
                SparseColumn::from_pairs(pairs)
            })
            .collect();
        Self::new(rows, columns)
    }
}

/// Which construction produced a coarse space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceVariant {
    /// Coarse hats χ_i only.
    Hat,
    KappaMass,
    MsMass,
    Gmsfem,
    Cem,
}

/// Export metadata for a coarse space.
#[derive(Clone, Debug, Serialize)]
pub struct CoarseSpaceInfo {
    pub variant: SpaceVariant,
    pub rows: usize,
    pub dim: usize,
    /// Selected functions per region.
    pub counts: Vec<usize>,
    /// Computed eigenvalues per region (ascending).
    pub eigenvalues: Vec<Vec<f64>>,
    /// Smallest first excluded eigenvalue over all regions.
    pub lambda_min_excluded: Option<f64>,
}

impl CoarseSpaceInfo {
    /// Writes `<stem>.json` and `<stem>.bin` next to each other.
    pub fn export<T: Scalar>(
        &self,
        basis: &CoarseBasis<T>,
        dir: impl AsRef<Path>,
        stem: &str,
    ) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(format!("{stem}.json")), json)?;
        basis.write_binary(dir.join(format!("{stem}.bin")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn galerkin_matches_dense_product() {
        let a = CsrMatrix::<f64>::from_triplets(
            4,
            4,
            vec![
                (0, 0, 2.0),
                (1, 1, 3.0),
                (2, 2, 4.0),
                (3, 3, 5.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (2, 3, 0.5),
                (3, 2, 0.5),
            ],
        );
        let cols = vec![
            SparseColumn::from_pairs(vec![(0, 1.0), (1, 2.0)]),
            SparseColumn::from_pairs(vec![(1, -1.0), (2, 1.0), (3, 0.5)]),
        ];
        let basis = CoarseBasis::new(4, cols).unwrap();
        let g = basis.galerkin(&a);
        let r = DenseMatrix::from_columns(4, &basis.columns().iter().map(|c| c.to_dense(4)).collect::<Vec<_>>());
        let ad = a.to_dense();
        let expect = r.tr_matmul(&ad.matmul(&r));
        for i in 0..2 {
            for j in 0..2 {
                assert!((g[(i, j)] - expect[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn binary_round_trip() {
        let basis = CoarseBasis::new(
            3,
            vec![
                SparseColumn::from_pairs(vec![(0, 1.5), (2, -0.25)]),
                SparseColumn::from_pairs(vec![(1, 3.0)]),
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let info = CoarseSpaceInfo {
            variant: SpaceVariant::Hat,
            rows: 3,
            dim: 2,
            counts: vec![1, 1],
            eigenvalues: vec![],
            lambda_min_excluded: None,
        };
        info.export(&basis, dir.path(), "space").unwrap();
        let bytes = std::fs::read(dir.path().join("space.bin")).unwrap();
        assert_eq!(bytes.len(), 16 + 6 * 8);
        assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 3);
        let back = CoarseBasis::<f64>::read_binary(dir.path().join("space.bin")).unwrap();
        assert_eq!(back.columns(), basis.columns());
        assert!(dir.path().join("space.json").exists());
    }
}

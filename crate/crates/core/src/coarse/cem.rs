//! Constrained energy-minimizing coarse space.
//!
//! Each coarse block K carries an auxiliary space of low eigenvectors of the
//! κ̂-weighted local problem. The multiscale basis functions solve, on an
//! oversampled patch K⁺ with zero Dirichlet data, the penalized problem
//! `(A + Q Qᵀ) ψ = q_{K,j}`, where the columns of `Q` are `M̂_K' φ_j^{K'}` for
//! every block K' in K⁺ and `Qᵀ v` are the coefficients of π_D v. The system
//! is solved in the equivalent quasi-definite form `[[A, Q], [Qᵀ, −I]]`.

use rayon::prelude::*;

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::fem::{
    assemble_stiffness, build_weight, lowest_eigenpairs, CsrMatrix, Footprint, Geometry,
    SparseOperator, WeightField,
};
use crate::grid::{Anchor, BoundaryCondition, GridHierarchy, Region};
use crate::scalar::{norm2, Scalar};

use super::basis::{CoarseBasis, CoarseSpaceInfo, SparseColumn, SpaceVariant};
use super::pou::PartitionOfUnity;
use super::spectral::{check_field, local_pencil, Selection};

/// Auxiliary eigen data of one coarse block.
#[derive(Clone, Debug)]
pub struct AuxCell<T> {
    pub coarse_cell: usize,
    /// Free nodes of the block problem (block nodes off ∂D).
    pub nodes: Vec<usize>,
    /// Computed eigenvalues, ascending (one more than kept when available).
    pub eigenvalues: Vec<T>,
    /// Kept eigenvectors φ_j, κ̂-mass-orthonormal on the block.
    pub phi: Vec<Vec<T>>,
    /// `M̂_K φ_j` on the block nodes.
    pub q: Vec<Vec<T>>,
}

impl<T: Scalar> AuxCell<T> {
    pub fn count(&self) -> usize {
        self.phi.len()
    }
}

/// Auxiliary spaces of all coarse blocks plus the weight κ̂.
#[derive(Clone, Debug)]
pub struct CemAux<T> {
    pub cells: Vec<AuxCell<T>>,
    pub weight: WeightField<T>,
}

/// Field that is smooth inside each coarse block and may jump across blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BrokenField<T> {
    /// Values at each block's `nodes`.
    pub cells: Vec<Vec<T>>,
}

impl<T: Scalar> CemAux<T> {
    pub fn dim(&self) -> usize {
        self.cells.iter().map(|c| c.count()).sum()
    }

    /// Λ = min_K λ^K_{L_K+1}.
    pub fn lambda(&self) -> Option<f64> {
        self.cells
            .iter()
            .filter_map(|c| c.eigenvalues.get(c.count()).map(|v| v.to64()))
            .reduce(f64::min)
    }

    /// Coefficients `∫_K κ̂ v φ_j` of π_K v for a vector over the global dofs.
    pub fn coefficients(&self, g: &GridHierarchy, v: &[T]) -> Vec<Vec<T>> {
        self.cells
            .iter()
            .map(|c| {
                let vk: Vec<T> = c
                    .nodes
                    .iter()
                    .map(|&nd| g.dof_of_node(nd).map_or(T::zero(), |d| v[d]))
                    .collect();
                c.q.iter().map(|q| crate::scalar::dot(q, &vk)).collect()
            })
            .collect()
    }

    /// π_D v.
    pub fn project(&self, g: &GridHierarchy, v: &[T]) -> BrokenField<T> {
        let coef = self.coefficients(g, v);
        self.combine(&coef)
    }

    /// π_D applied to a broken field (blockwise).
    pub fn project_broken(&self, v: &BrokenField<T>) -> BrokenField<T> {
        let coef: Vec<Vec<T>> = self
            .cells
            .iter()
            .zip(&v.cells)
            .map(|(c, vk)| c.q.iter().map(|q| crate::scalar::dot(q, vk)).collect())
            .collect();
        self.combine(&coef)
    }

    fn combine(&self, coef: &[Vec<T>]) -> BrokenField<T> {
        let cells = self
            .cells
            .iter()
            .zip(coef)
            .map(|(c, ck)| {
                let mut out = vec![T::zero(); c.nodes.len()];
                for (phi, &a) in c.phi.iter().zip(ck) {
                    crate::scalar::axpy(a, phi, &mut out);
                }
                out
            })
            .collect();
        BrokenField { cells }
    }
}

/// Lowest eigenpairs of `∫_K κ∇u∇v = λ ∫_K κ̂ uv` on every coarse block.
pub fn build_cem_aux<T: Scalar>(
    g: &GridHierarchy,
    field: &CoefficientField<T>,
    pou: &PartitionOfUnity<T>,
    selection: Selection,
) -> Result<CemAux<T>> {
    check_field(g, field)?;
    let weight = build_weight(g, field, pou);
    let cells = (0..g.coarse_cell_count())
        .into_par_iter()
        .map(|k| {
            let region = g.coarse_block(k)?;
            let (a, b) = local_pencil(g, field, &weight, &region);
            let pairs = lowest_eigenpairs(a.matrix(), b.matrix(), a.geometry(), selection.requested())?;
            let values: Vec<f64> = pairs.values.iter().map(|v| v.to64()).collect();
            let count = selection.choose(&values, 1.0);
            let phi: Vec<Vec<T>> = pairs.vectors.into_iter().take(count).collect();
            let q = phi.iter().map(|p| b.apply(p)).collect();
            Ok(AuxCell {
                coarse_cell: k,
                nodes: a.nodes().to_vec(),
                eigenvalues: pairs.values,
                phi,
                q,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CemAux { cells, weight })
}

/// `A + Q Qᵀ` on the interior nodes of a coarse-aligned region.
#[derive(Debug)]
pub struct ConstrainedOperator<T> {
    /// Interior nodes of the region (the unknowns).
    pub nodes: Vec<usize>,
    /// Global dof of each unknown.
    pub dofs: Vec<usize>,
    stiffness: CsrMatrix<T>,
    /// Columns of `Q` as (local row, value) lists.
    q: Vec<Vec<(usize, T)>>,
    augmented: SparseOperator<T>,
}

impl<T: Scalar> ConstrainedOperator<T> {
    pub fn new(
        g: &GridHierarchy,
        field: &CoefficientField<T>,
        aux: &CemAux<T>,
        region: &Region,
    ) -> Result<Self> {
        let cbox = region.coarse_box.ok_or_else(|| {
            Error::InvalidArgument("constrained problems need a coarse-aligned region".into())
        })?;
        let a = assemble_stiffness(g, field, region, BoundaryCondition::DirichletEliminated);
        let nodes = a.nodes().to_vec();
        let n = nodes.len();
        let b = region.cell_box;
        let stride = b.width() + 1;
        let mut local = vec![usize::MAX; stride * (b.height() + 1)];
        for (k, &nd) in nodes.iter().enumerate() {
            let (i, j) = g.fine_node_ij(nd);
            local[(j - b.y0) * stride + (i - b.x0)] = k;
        }
        let mut q = Vec::new();
        let mut footprints = a.geometry().expect("region operators carry geometry").footprints.clone();
        let r = g.ratio() as u32;
        for k in cbox.cells(g) {
            let cell = &aux.cells[k];
            let (ci, cj) = g.coarse_cell_ij(k);
            for qk in &cell.q {
                let col: Vec<(usize, T)> = cell
                    .nodes
                    .iter()
                    .zip(qk)
                    .filter_map(|(&nd, &v)| {
                        let (i, j) = g.fine_node_ij(nd);
                        if !b.node_is_interior(i, j) {
                            return None;
                        }
                        Some((local[(j - b.y0) * stride + (i - b.x0)], v))
                    })
                    .filter(|&(l, v)| l != usize::MAX && v != T::zero())
                    .collect();
                q.push(col);
                footprints.push(Footprint::Cell {
                    x0: ci as u32 * r,
                    x1: (ci as u32 + 1) * r,
                    y0: cj as u32 * r,
                    y1: (cj as u32 + 1) * r,
                });
            }
        }
        let m = q.len();
        let mut t = Vec::with_capacity(a.matrix().nnz() + 2 * q.iter().map(|c| c.len()).sum::<usize>() + m);
        for i in 0..n {
            let (cols, vals) = a.matrix().row(i);
            t.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
        }
        for (c, col) in q.iter().enumerate() {
            for &(l, v) in col {
                t.push((l, n + c, v));
                t.push((n + c, l, v));
            }
            t.push((n + c, n + c, -T::one()));
        }
        let augmented = SparseOperator::new(CsrMatrix::from_triplets(n + m, n + m, t))
            .with_geometry(Geometry { footprints, stride: r })
            .quasi_definite();
        let dofs = nodes
            .iter()
            .map(|&nd| g.dof_of_node(nd).expect("interior nodes are dofs"))
            .collect();
        Ok(Self {
            nodes,
            dofs,
            stiffness: a.matrix().clone(),
            q,
            augmented,
        })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.q.len()
    }

    /// `(A + Q Qᵀ) x`
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = self.stiffness.mul(x);
        for col in &self.q {
            let c: T = col.iter().map(|&(l, v)| v * x[l]).sum();
            for &(l, v) in col {
                y[l] += c * v;
            }
        }
        y
    }

    /// The quasi-definite augmented operator.
    pub fn augmented(&self) -> &SparseOperator<T> {
        &self.augmented
    }

    /// Solves `(A + Q Qᵀ) x = rhs` with a fresh factorization.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let fact = self.augmented.factorize()?;
        self.solve_with(&fact, rhs)
    }

    /// Solves with a factorization of [`ConstrainedOperator::augmented`].
    pub fn solve_with(&self, fact: &crate::fem::Factorization<T>, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        let mut full = rhs.to_vec();
        full.resize(n + self.q.len(), T::zero());
        let mut x = fact.solve_refined(self.augmented.matrix(), &full)?;
        x.truncate(n);
        Ok(x)
    }
}

/// CEM coarse space: multiscale basis on K⁺ for every auxiliary function.
#[derive(Clone, Debug)]
pub struct CemCoarseSpace<T> {
    pub basis: CoarseBasis<T>,
    pub aux: CemAux<T>,
    pub layers: usize,
    /// Relative residual of the local variational problem per basis function.
    pub residuals: Vec<f64>,
}

impl<T: Scalar> CemCoarseSpace<T> {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn info(&self) -> CoarseSpaceInfo {
        CoarseSpaceInfo {
            variant: SpaceVariant::Cem,
            rows: self.basis.n_dofs(),
            dim: self.dim(),
            counts: self.aux.cells.iter().map(|c| c.count()).collect(),
            eigenvalues: self
                .aux
                .cells
                .iter()
                .map(|c| c.eigenvalues.iter().map(|v| v.to64()).collect())
                .collect(),
            lambda_min_excluded: self.aux.lambda(),
        }
    }
}

/// Right-hand side `q_{K,j}` restricted to the unknowns of `op`.
fn aux_rhs<T: Scalar>(op: &ConstrainedOperator<T>, cell: &AuxCell<T>, j: usize) -> Vec<T> {
    let mut pos = std::collections::HashMap::with_capacity(op.nodes.len());
    for (k, &nd) in op.nodes.iter().enumerate() {
        pos.insert(nd, k);
    }
    let mut rhs = vec![T::zero(); op.dim()];
    for (&nd, &v) in cell.nodes.iter().zip(&cell.q[j]) {
        if let Some(&k) = pos.get(&nd) {
            rhs[k] = v;
        }
    }
    rhs
}

/// Multiscale basis ψ_{j,ms}^K on K⁺ with `layers` oversampling layers.
pub fn build_cem_basis<T: Scalar>(
    g: &GridHierarchy,
    field: &CoefficientField<T>,
    aux: &CemAux<T>,
    layers: usize,
) -> Result<CemCoarseSpace<T>> {
    check_field(g, field)?;
    if layers == 0 {
        return Err(Error::InvalidArgument(
            "the multiscale basis needs at least one oversampling layer".into(),
        ));
    }
    let per_cell: Vec<(Vec<SparseColumn<T>>, Vec<f64>)> = aux
        .cells
        .par_iter()
        .map(|cell| {
            if cell.count() == 0 {
                return Ok((vec![], vec![]));
            }
            let base = g.coarse_block(cell.coarse_cell)?;
            let region = g.oversample(&base, layers)?;
            let op = ConstrainedOperator::new(g, field, aux, &region)?;
            let fact = op.augmented().factorize()?;
            let mut cols = Vec::with_capacity(cell.count());
            let mut res = Vec::with_capacity(cell.count());
            for j in 0..cell.count() {
                let rhs = aux_rhs(&op, cell, j);
                let psi = op.solve_with(&fact, &rhs)?;
                let r: Vec<T> = op.apply(&psi).iter().zip(&rhs).map(|(a, b)| *a - *b).collect();
                res.push((norm2(&r) / norm2(&rhs)).to64());
                cols.push(SparseColumn::from_pairs(
                    op.dofs.iter().copied().zip(psi).collect(),
                ));
            }
            Ok((cols, res))
        })
        .collect::<Result<_>>()?;
    let mut columns = Vec::new();
    let mut residuals = Vec::new();
    for (c, r) in per_cell {
        columns.extend(c);
        residuals.extend(r);
    }
    Ok(CemCoarseSpace {
        basis: CoarseBasis::new(g.dof_count(), columns)?,
        aux: aux.clone(),
        layers,
        residuals,
    })
}

/// Region of kind ω_i⁺ or K⁺ anchored at the given entity.
pub fn oversampled(g: &GridHierarchy, anchor: Anchor, layers: usize) -> Result<Region> {
    let base = match anchor {
        Anchor::CoarseCell(k) => g.coarse_block(k)?,
        Anchor::CoarseNode(i) => g.neighborhood(i)?,
        Anchor::Domain => return Ok(g.domain()),
    };
    g.oversample(&base, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::pou::build_pou;
    use crate::coeff::{generate, Pattern};
    use crate::fem::global_operator;

    fn setup(eta: f64) -> (GridHierarchy, CoefficientField<f64>, PartitionOfUnity<f64>) {
        let g = GridHierarchy::new(24, 4).unwrap();
        let field = generate(
            &g,
            &Pattern::InteriorInclusions {
                min_size: 2,
                max_size: 3,
            },
            eta,
            11,
        )
        .unwrap();
        (g.clone(), field, build_pou(&g))
    }

    #[test]
    fn aux_constant_mode_and_projection() {
        let g = GridHierarchy::new(12, 2).unwrap();
        let one = CoefficientField::constant(&g, 1.0);
        let pou = build_pou(&g);
        let aux = build_cem_aux(&g, &one, &pou, Selection::Fixed { count: 2 }).unwrap();
        // blocks touch ∂D here, so use a 4×4 mesh for the floating case
        assert_eq!(aux.dim(), 8);
        let g4 = GridHierarchy::new(16, 4).unwrap();
        let one4 = CoefficientField::constant(&g4, 1.0f64);
        let aux4 = build_cem_aux(&g4, &one4, &build_pou(&g4), Selection::Fixed { count: 3 }).unwrap();
        let centre = &aux4.cells[g4.coarse_cell(1, 1)];
        assert!(centre.eigenvalues[0].abs() < 1e-10);
        let phi = &centre.phi[0];
        assert!(phi.iter().all(|v| (v - phi[0]).abs() < 1e-10));
        assert!(aux4.lambda().unwrap() > 0.0);

        // π_D φ = φ, idempotence
        let mut field = BrokenField {
            cells: aux4.cells.iter().map(|c| vec![0.0; c.nodes.len()]).collect(),
        };
        field.cells[5] = aux4.cells[5].phi[1].clone();
        let p = aux4.project_broken(&field);
        for (a, b) in p.cells[5].iter().zip(&field.cells[5]) {
            assert!((a - b).abs() < 1e-12);
        }
        let v: Vec<f64> = (0..g4.dof_count()).map(|i| (i as f64 * 0.37).sin()).collect();
        let once = aux4.project(&g4, &v);
        let twice = aux4.project_broken(&once);
        for (a, b) in once.cells.iter().flatten().zip(twice.cells.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_grows_with_more_aux_functions() {
        let (g, field, pou) = setup(1e4);
        let l2 = build_cem_aux(&g, &field, &pou, Selection::Fixed { count: 2 }).unwrap();
        let l4 = build_cem_aux(&g, &field, &pou, Selection::Fixed { count: 4 }).unwrap();
        assert!(l4.lambda().unwrap() > l2.lambda().unwrap());
    }

    #[test]
    fn basis_residuals_and_localization() {
        let (g, field, pou) = setup(1e4);
        let aux = build_cem_aux(&g, &field, &pou, Selection::Fixed { count: 2 }).unwrap();
        let global = build_cem_basis(&g, &field, &aux, 4).unwrap();
        assert!(global.residuals.iter().all(|&r| r <= 1e-10));
        let a = global_operator(&g, &field);
        let mut errs = Vec::new();
        for l in 1..=3 {
            let local = build_cem_basis(&g, &field, &aux, l).unwrap();
            assert!(local.residuals.iter().all(|&r| r <= 1e-10));
            let mut worst: f64 = 0.0;
            for (c1, c2) in local.basis.columns().iter().zip(global.basis.columns()) {
                let mut d = c2.to_dense(g.dof_count());
                c1.axpy_into(-1.0, &mut d);
                let full = c2.to_dense(g.dof_count());
                let e = crate::scalar::dot(&d, &a.apply(&d)).sqrt();
                let n = crate::scalar::dot(&full, &a.apply(&full)).sqrt();
                worst = worst.max(e / n);
            }
            errs.push(worst);
        }
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    }

    #[test]
    fn zero_layers_rejected() {
        let (g, field, pou) = setup(10.0);
        let aux = build_cem_aux(&g, &field, &pou, Selection::Fixed { count: 1 }).unwrap();
        assert!(build_cem_basis(&g, &field, &aux, 0).is_err());
    }
}

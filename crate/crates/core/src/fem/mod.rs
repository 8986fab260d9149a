//! Q1 finite elements on the fine grid: assembly of stiffness, weighted mass
//! and load vectors over the whole domain or a region, plus the sparse
//! operator type carrying its (lazily computed) factorization.

pub mod dense;
pub mod eig;
pub mod factor;
pub mod sparse;

use std::sync::OnceLock;

use crate::coarse::pou::PartitionOfUnity;
use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, GridHierarchy, Region};
use crate::scalar::Scalar;

pub use dense::DenseMatrix;
pub use eig::{dense_generalized_eig, lowest_eigenpairs, EigenPairs};
pub use factor::{Factorization, Footprint, Geometry, Kernel};
pub use sparse::CsrMatrix;

/// Q1 element stiffness on a square (independent of the side length in 2D).
/// Local node order: (0,0), (1,0), (0,1), (1,1).
pub const Q1_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Q1 element mass on a square of side `h`.
pub fn q1_mass(h: f64) -> [[f64; 4]; 4] {
    let s = h * h / 36.0;
    [
        [4.0 * s, 2.0 * s, 2.0 * s, s],
        [2.0 * s, 4.0 * s, s, 2.0 * s],
        [2.0 * s, s, 4.0 * s, 2.0 * s],
        [s, 2.0 * s, 2.0 * s, 4.0 * s],
    ]
}

/// Per-fine-cell nonnegative weight for mass matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField<T> {
    values: Vec<T>,
}

impl<T: Scalar> WeightField<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= T::zero()) || !v.is_finite())
        {
            return Err(Error::InvalidCoefficient(format!(
                "weight of cell {i} is {v}, expected a finite nonnegative value"
            )));
        }
        Ok(Self { values })
    }

    pub fn constant(g: &GridHierarchy, value: T) -> Self {
        Self {
            values: vec![value; g.fine_cell_count()],
        }
    }

    /// The coefficient itself used as a mass weight.
    pub fn from_coefficient(field: &CoefficientField<T>) -> Self {
        Self {
            values: field.values().to_vec(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, cell: usize) -> T {
        self.values[cell]
    }
}

/// Symmetric sparse operator on a set of fine nodes.
#[derive(Debug)]
pub struct SparseOperator<T> {
    matrix: CsrMatrix<T>,
    nodes: Vec<usize>,
    geometry: Option<Geometry>,
    kernel: Kernel,
    quasi_definite: bool,
    factor: OnceLock<Factorization<T>>,
}

impl<T: Scalar> Clone for SparseOperator<T> {
    fn clone(&self) -> Self {
        Self {
            matrix: self.matrix.clone(),
            nodes: self.nodes.clone(),
            geometry: self.geometry.clone(),
            kernel: self.kernel,
            quasi_definite: self.quasi_definite,
            factor: OnceLock::new(),
        }
    }
}

impl<T: Scalar> SparseOperator<T> {
    /// An operator without node association (factored as a dense front when small).
    pub fn new(matrix: CsrMatrix<T>) -> Self {
        Self {
            matrix,
            nodes: Vec::new(),
            geometry: None,
            kernel: Kernel::None,
            quasi_definite: false,
            factor: OnceLock::new(),
        }
    }

    /// An operator whose rows are the given fine nodes.
    pub fn on_nodes(g: &GridHierarchy, matrix: CsrMatrix<T>, nodes: Vec<usize>) -> Self {
        let footprints = nodes
            .iter()
            .map(|&nd| {
                let (x, y) = g.fine_node_ij(nd);
                Footprint::Point {
                    x: x as u32,
                    y: y as u32,
                }
            })
            .collect();
        Self {
            matrix,
            nodes,
            geometry: Some(Geometry {
                footprints,
                stride: 1,
            }),
            kernel: Kernel::None,
            quasi_definite: false,
            factor: OnceLock::new(),
        }
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Self {
        self.geometry = Some(geometry);
        self
    }

    /// Allows negative pivots (symmetric quasi-definite saddle systems).
    pub fn quasi_definite(mut self) -> Self {
        self.quasi_definite = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    /// Global fine node of each row (empty for abstract operators).
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.matrix.mul(x)
    }

    /// Computes a fresh factorization (not cached).
    pub fn factorize(&self) -> Result<Factorization<T>> {
        Factorization::new(
            &self.matrix,
            self.geometry.as_ref(),
            self.kernel,
            self.quasi_definite,
        )
    }

    /// Cached factorization, computed on first use.
    pub fn factorization(&self) -> Result<&Factorization<T>> {
        if let Some(f) = self.factor.get() {
            return Ok(f);
        }
        let f = self.factorize()?;
        let _ = self.factor.set(f);
        Ok(self.factor.get().expect("factorization was just stored"))
    }

    /// Solves `A x = rhs` with iterative refinement.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        if rhs.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "right-hand side of length {} for an operator of dimension {}",
                rhs.len(),
                self.dim()
            )));
        }
        self.factorization()?.solve_refined(&self.matrix, rhs)
    }
}

/// Solves `A x = rhs`; for a constant kernel returns the zero-mean solution.
pub fn factor_solve<T: Scalar>(op: &SparseOperator<T>, rhs: &[T]) -> Result<Vec<T>> {
    op.solve(rhs)
}

/// Local numbering of the free nodes of a region, addressed by box position.
struct LocalNumbering {
    x0: usize,
    y0: usize,
    stride: usize,
    index: Vec<usize>,
}

impl LocalNumbering {
    fn new(g: &GridHierarchy, region: &Region, free: &[usize]) -> Self {
        let b = region.cell_box;
        let stride = b.width() + 1;
        let mut index = vec![usize::MAX; stride * (b.height() + 1)];
        for (k, &nd) in free.iter().enumerate() {
            let (i, j) = g.fine_node_ij(nd);
            index[(j - b.y0) * stride + (i - b.x0)] = k;
        }
        Self {
            x0: b.x0,
            y0: b.y0,
            stride,
            index,
        }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> usize {
        self.index[(j - self.y0) * self.stride + (i - self.x0)]
    }

    fn corners(&self, i: usize, j: usize) -> [usize; 4] {
        [
            self.get(i, j),
            self.get(i + 1, j),
            self.get(i, j + 1),
            self.get(i + 1, j + 1),
        ]
    }
}

fn assemble_cells<T: Scalar>(
    g: &GridHierarchy,
    region: &Region,
    bc: BoundaryCondition,
    weight: impl Fn(usize) -> T,
    element: &[[f64; 4]; 4],
) -> SparseOperator<T> {
    let free = region.free_nodes(bc).to_vec();
    let num = LocalNumbering::new(g, region, &free);
    let elem: Vec<T> = element.iter().flatten().map(|&v| T::of(v)).collect();
    let mut t = Vec::with_capacity(region.cells.len() * 16);
    for &cell in &region.cells {
        let w = weight(cell);
        if w == T::zero() {
            continue;
        }
        let (i, j) = g.fine_cell_ij(cell);
        let loc = num.corners(i, j);
        for a in 0..4 {
            if loc[a] == usize::MAX {
                continue;
            }
            for b in 0..4 {
                if loc[b] != usize::MAX {
                    t.push((loc[a], loc[b], w * elem[a * 4 + b]));
                }
            }
        }
    }
    let n = free.len();
    let matrix = CsrMatrix::from_triplets(n, n, t);
    let kernel = if bc == BoundaryCondition::Neumann && region.is_floating(g) {
        Kernel::Constants
    } else {
        Kernel::None
    };
    SparseOperator::on_nodes(g, matrix, free).with_kernel(kernel)
}

/// Stiffness matrix `Σ κ_cell K_e` on the free nodes of `region`.
pub fn assemble_stiffness<T: Scalar>(
    g: &GridHierarchy,
    field: &CoefficientField<T>,
    region: &Region,
    bc: BoundaryCondition,
) -> SparseOperator<T> {
    assemble_cells(g, region, bc, |c| field.get(c), &Q1_STIFFNESS)
}

/// Mass matrix `Σ w_cell M_e` on the free nodes of `region`.
pub fn assemble_weighted_mass<T: Scalar>(
    g: &GridHierarchy,
    w: &WeightField<T>,
    region: &Region,
    bc: BoundaryCondition,
) -> SparseOperator<T> {
    assemble_cells(g, region, bc, |c| w.get(c), &q1_mass(g.h()))
}

/// The global Dirichlet stiffness matrix on all interior fine nodes.
pub fn global_operator<T: Scalar>(g: &GridHierarchy, field: &CoefficientField<T>) -> SparseOperator<T> {
    assemble_stiffness(g, field, &g.domain(), BoundaryCondition::DirichletEliminated)
}

/// Weight `κ Σ_i |∇χ_i|²` per fine cell, gradients taken at cell midpoints.
pub fn build_weight<T: Scalar>(
    g: &GridHierarchy,
    field: &CoefficientField<T>,
    pou: &PartitionOfUnity<T>,
) -> WeightField<T> {
    let n = g.n_fine();
    let inv2h = T::of(0.5 / g.h());
    let mut sum = vec![T::zero(); g.fine_cell_count()];
    for chi in pou.functions() {
        let b = chi.region.cell_box;
        let stride = b.width() + 1;
        let at = |i: usize, j: usize| chi.values[(j - b.y0) * stride + (i - b.x0)];
        for j in b.y0..b.y1 {
            for i in b.x0..b.x1 {
                let (v00, v10, v01, v11) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
                let gx = ((v10 - v00) + (v11 - v01)) * inv2h;
                let gy = ((v01 - v00) + (v11 - v10)) * inv2h;
                sum[j * n + i] += gx * gx + gy * gy;
            }
        }
    }
    let values = sum
        .into_iter()
        .zip(field.values())
        .map(|(s, &k)| s * k)
        .collect();
    WeightField { values }
}

/// Right-hand side data for load assembly.
#[derive(Clone, Copy, Debug)]
pub enum Load<'a, T> {
    /// One value per fine cell.
    Cellwise(&'a [T]),
    /// One value per fine node (interpolated with Q1 functions).
    Nodal(&'a [T]),
}

/// Load vector on the free nodes of `region`.
pub fn assemble_load_on<T: Scalar>(
    g: &GridHierarchy,
    region: &Region,
    bc: BoundaryCondition,
    f: Load<'_, T>,
) -> Vec<T> {
    let free = region.free_nodes(bc);
    let num = LocalNumbering::new(g, region, free);
    let mut out = vec![T::zero(); free.len()];
    let quarter = T::of(g.h() * g.h() / 4.0);
    let mass = q1_mass(g.h());
    for &cell in &region.cells {
        let (i, j) = g.fine_cell_ij(cell);
        let loc = num.corners(i, j);
        match f {
            Load::Cellwise(vals) => {
                let v = vals[cell] * quarter;
                for &l in &loc {
                    if l != usize::MAX {
                        out[l] += v;
                    }
                }
            }
            Load::Nodal(vals) => {
                let nodal = [
                    vals[g.fine_node(i, j)],
                    vals[g.fine_node(i + 1, j)],
                    vals[g.fine_node(i, j + 1)],
                    vals[g.fine_node(i + 1, j + 1)],
                ];
                for a in 0..4 {
                    if loc[a] == usize::MAX {
                        continue;
                    }
                    for b in 0..4 {
                        out[loc[a]] += T::of(mass[a][b]) * nodal[b];
                    }
                }
            }
        }
    }
    out
}

/// Global load vector on the interior fine nodes.
pub fn assemble_load<T: Scalar>(g: &GridHierarchy, f: Load<'_, T>) -> Vec<T> {
    assemble_load_on(g, &g.domain(), BoundaryCondition::DirichletEliminated, f)
}

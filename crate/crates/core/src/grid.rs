//! Structured grid hierarchy on the unit square.
//!
//! The fine mesh has `n_fine × n_fine` square cells carrying bilinear (Q1)
//! elements; the coarse mesh has `n_coarse × n_coarse` cells, each made of
//! `ratio × ratio` fine cells. Every region used by the solvers (coarse
//! blocks, coarse-node neighborhoods, oversampled patches, overlapping
//! subdomains) is an axis-aligned rectangle of fine cells, so restriction and
//! extension are plain index gathers and scatters over sorted node lists.
//!
//! Index conventions: a fine node `(i, j)` has linear index `j * (n_fine + 1) + i`,
//! a fine cell `(i, j)` has index `j * n_fine + i`; coarse entities follow the same
//! row-major pattern with `n_coarse`. Free degrees of freedom of the global
//! problem are the interior fine nodes, numbered row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the boundary of a region is treated when a local operator is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Zero Dirichlet data on the whole region boundary; only interior nodes are unknowns.
    DirichletEliminated,
    /// Natural condition on the region boundary; nodes on the global boundary stay eliminated.
    Neumann,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridHierarchy {
    n_fine: usize,
    n_coarse: usize,
    ratio: usize,
}

impl GridHierarchy {
    pub fn new(n_fine: usize, n_coarse: usize) -> Result<Self> {
        if n_coarse < 2 {
            return Err(Error::InvalidGrid(format!(
                "n_coarse must be at least 2, got {n_coarse}"
            )));
        }
        if n_fine == 0 || !n_fine.is_multiple_of(n_coarse) {
            return Err(Error::InvalidGrid(format!(
                "n_coarse ({n_coarse}) must divide n_fine ({n_fine})"
            )));
        }
        Ok(Self {
            n_fine,
            n_coarse,
            ratio: n_fine / n_coarse,
        })
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    /// Fine cells per coarse cell side.
    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_fine as f64
    }

    #[allow(non_snake_case)]
    pub fn H(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }

    pub fn fine_node_count(&self) -> usize {
        (self.n_fine + 1) * (self.n_fine + 1)
    }

    pub fn fine_cell_count(&self) -> usize {
        self.n_fine * self.n_fine
    }

    pub fn coarse_node_count(&self) -> usize {
        (self.n_coarse + 1) * (self.n_coarse + 1)
    }

    pub fn coarse_cell_count(&self) -> usize {
        self.n_coarse * self.n_coarse
    }

    /// Number of free (interior) fine nodes of the global Dirichlet problem.
    pub fn dof_count(&self) -> usize {
        (self.n_fine - 1) * (self.n_fine - 1)
    }

    #[inline]
    pub fn fine_node(&self, i: usize, j: usize) -> usize {
        j * (self.n_fine + 1) + i
    }

    #[inline]
    pub fn fine_node_ij(&self, node: usize) -> (usize, usize) {
        (node % (self.n_fine + 1), node / (self.n_fine + 1))
    }

    #[inline]
    pub fn fine_cell(&self, i: usize, j: usize) -> usize {
        j * self.n_fine + i
    }

    #[inline]
    pub fn fine_cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.n_fine, cell / self.n_fine)
    }

    #[inline]
    pub fn coarse_node(&self, i: usize, j: usize) -> usize {
        j * (self.n_coarse + 1) + i
    }

    #[inline]
    pub fn coarse_node_ij(&self, node: usize) -> (usize, usize) {
        (node % (self.n_coarse + 1), node / (self.n_coarse + 1))
    }

    #[inline]
    pub fn coarse_cell(&self, i: usize, j: usize) -> usize {
        j * self.n_coarse + i
    }

    #[inline]
    pub fn coarse_cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.n_coarse, cell / self.n_coarse)
    }

    /// Coarse cell that contains a fine cell.
    pub fn coarse_cell_of(&self, fine_cell: usize) -> usize {
        let (i, j) = self.fine_cell_ij(fine_cell);
        self.coarse_cell(i / self.ratio, j / self.ratio)
    }

    /// Fine cells of a coarse cell, row-major.
    pub fn fine_cells_of(&self, coarse_cell: usize) -> Vec<usize> {
        self.coarse_cell_box(coarse_cell).cells(self)
    }

    /// Fine-cell rectangle covered by a coarse cell.
    pub fn coarse_cell_box(&self, coarse_cell: usize) -> CellBox {
        let (ci, cj) = self.coarse_cell_ij(coarse_cell);
        let r = self.ratio;
        CellBox::new(ci * r, (ci + 1) * r, cj * r, (cj + 1) * r)
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (i, j) = self.fine_node_ij(node);
        i == 0 || j == 0 || i == self.n_fine || j == self.n_fine
    }

    /// Free-dof index of a fine node, `None` on the Dirichlet boundary.
    #[inline]
    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        let (i, j) = self.fine_node_ij(node);
        if i == 0 || j == 0 || i == self.n_fine || j == self.n_fine {
            None
        } else {
            Some((j - 1) * (self.n_fine - 1) + (i - 1))
        }
    }

    #[inline]
    pub fn node_of_dof(&self, dof: usize) -> usize {
        let m = self.n_fine - 1;
        self.fine_node(dof % m + 1, dof / m + 1)
    }

    /// Coarse-node neighborhood ω: the (up to four) coarse cells sharing the node.
    pub fn neighborhood(&self, coarse_node: usize) -> Result<Region> {
        if coarse_node >= self.coarse_node_count() {
            return Err(Error::InvalidArgument(format!(
                "coarse node {coarse_node} out of range"
            )));
        }
        let (i, j) = self.coarse_node_ij(coarse_node);
        let n = self.n_coarse;
        let cbox = CoarseBox {
            x0: i.saturating_sub(1),
            x1: (i + 1).min(n),
            y0: j.saturating_sub(1),
            y1: (j + 1).min(n),
        };
        Ok(Region::from_coarse_box(
            self,
            RegionKind::Neighborhood,
            Anchor::CoarseNode(coarse_node),
            0,
            cbox,
        ))
    }

    /// A single coarse block K.
    pub fn coarse_block(&self, coarse_cell: usize) -> Result<Region> {
        if coarse_cell >= self.coarse_cell_count() {
            return Err(Error::InvalidArgument(format!(
                "coarse cell {coarse_cell} out of range"
            )));
        }
        let (i, j) = self.coarse_cell_ij(coarse_cell);
        let cbox = CoarseBox {
            x0: i,
            x1: i + 1,
            y0: j,
            y1: j + 1,
        };
        Ok(Region::from_coarse_box(
            self,
            RegionKind::CoarseBlock,
            Anchor::CoarseCell(coarse_cell),
            0,
            cbox,
        ))
    }

    /// Adds `layers` rings of coarse cells (every cell sharing a node with the
    /// current region) around a coarse block or neighborhood, clipped to the domain.
    pub fn oversample(&self, base: &Region, layers: usize) -> Result<Region> {
        let kind = match base.kind {
            RegionKind::CoarseBlock | RegionKind::OversampledBlock => RegionKind::OversampledBlock,
            RegionKind::Neighborhood | RegionKind::OversampledNeighborhood => {
                RegionKind::OversampledNeighborhood
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "cannot oversample a region of kind {other:?}"
                )))
            }
        };
        if layers == 0 {
            return Ok(base.clone());
        }
        let b = base
            .coarse_box
            .expect("coarse blocks and neighborhoods are coarse aligned");
        let n = self.n_coarse;
        let cbox = CoarseBox {
            x0: b.x0.saturating_sub(layers),
            x1: (b.x1 + layers).min(n),
            y0: b.y0.saturating_sub(layers),
            y1: (b.y1 + layers).min(n),
        };
        Ok(Region::from_coarse_box(
            self,
            kind,
            base.anchor,
            base.layers + layers,
            cbox,
        ))
    }

    /// Overlapping subdomains: each coarse cell extended by `overlap_fine_layers`
    /// fine-cell layers (overlap width δ = layers · h).
    pub fn overlapping_decomposition(&self, overlap_fine_layers: usize) -> Vec<Region> {
        let n = self.n_fine;
        let d = overlap_fine_layers;
        (0..self.coarse_cell_count())
            .map(|c| {
                let b = self.coarse_cell_box(c);
                let cell_box = CellBox::new(
                    b.x0.saturating_sub(d),
                    (b.x1 + d).min(n),
                    b.y0.saturating_sub(d),
                    (b.y1 + d).min(n),
                );
                Region::from_cell_box(
                    self,
                    RegionKind::Subdomain,
                    Anchor::CoarseCell(c),
                    overlap_fine_layers,
                    cell_box,
                    None,
                )
            })
            .collect()
    }

    /// Subdomains chosen as the coarse-node neighborhoods (D_j' = ω_j mode).
    pub fn neighborhood_decomposition(&self) -> Vec<Region> {
        (0..self.coarse_node_count())
            .map(|i| self.neighborhood(i).expect("valid coarse node"))
            .collect()
    }

    /// The whole domain as a region.
    pub fn domain(&self) -> Region {
        let n = self.n_coarse;
        Region::from_coarse_box(
            self,
            RegionKind::Domain,
            Anchor::Domain,
            0,
            CoarseBox {
                x0: 0,
                x1: n,
                y0: 0,
                y1: n,
            },
        )
    }
}

/// Half-open rectangle of fine cells `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellBox {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl CellBox {
    pub fn new(x0: usize, x1: usize, y0: usize, y1: usize) -> Self {
        debug_assert!(x0 < x1 && y0 < y1);
        Self { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn contains_cell(&self, i: usize, j: usize) -> bool {
        (self.x0..self.x1).contains(&i) && (self.y0..self.y1).contains(&j)
    }

    /// Node `(i, j)` lies in the closed rectangle.
    pub fn contains_node(&self, i: usize, j: usize) -> bool {
        (self.x0..=self.x1).contains(&i) && (self.y0..=self.y1).contains(&j)
    }

    /// Node `(i, j)` lies strictly inside the rectangle.
    pub fn node_is_interior(&self, i: usize, j: usize) -> bool {
        i > self.x0 && i < self.x1 && j > self.y0 && j < self.y1
    }

    pub fn cells(&self, g: &GridHierarchy) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.width() * self.height());
        for j in self.y0..self.y1 {
            for i in self.x0..self.x1 {
                out.push(g.fine_cell(i, j));
            }
        }
        out
    }

    pub fn nodes(&self, g: &GridHierarchy) -> Vec<usize> {
        let mut out = Vec::with_capacity((self.width() + 1) * (self.height() + 1));
        for j in self.y0..=self.y1 {
            for i in self.x0..=self.x1 {
                out.push(g.fine_node(i, j));
            }
        }
        out
    }
}

/// Half-open rectangle of coarse cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoarseBox {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl CoarseBox {
    pub fn cells(&self, g: &GridHierarchy) -> Vec<usize> {
        let mut out = Vec::new();
        for j in self.y0..self.y1 {
            for i in self.x0..self.x1 {
                out.push(g.coarse_cell(i, j));
            }
        }
        out
    }

    pub fn contains(&self, other: &CoarseBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    CoarseBlock,
    Neighborhood,
    OversampledBlock,
    OversampledNeighborhood,
    Subdomain,
    Domain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Anchor {
    CoarseCell(usize),
    CoarseNode(usize),
    Domain,
}

#[derive(Clone, Debug)]
pub struct Region {
    pub kind: RegionKind,
    pub anchor: Anchor,
    /// Oversampling layers (coarse) or overlap layers (fine) used to build the region.
    pub layers: usize,
    pub cell_box: CellBox,
    /// Coarse-cell rectangle, present for coarse-aligned regions.
    pub coarse_box: Option<CoarseBox>,
    /// Fine cells, sorted.
    pub cells: Vec<usize>,
    /// Fine nodes of the closed region, sorted.
    pub nodes: Vec<usize>,
    /// Nodes strictly inside the region (zero Dirichlet data on its boundary).
    pub interior_nodes: Vec<usize>,
    /// Nodes that are free under a natural boundary condition (region nodes off ∂D).
    pub neumann_nodes: Vec<usize>,
    /// The region is all of D.
    pub covers_domain: bool,
}

impl Region {
    fn from_coarse_box(
        g: &GridHierarchy,
        kind: RegionKind,
        anchor: Anchor,
        layers: usize,
        cbox: CoarseBox,
    ) -> Self {
        let r = g.ratio();
        let cell_box = CellBox::new(cbox.x0 * r, cbox.x1 * r, cbox.y0 * r, cbox.y1 * r);
        Self::from_cell_box(g, kind, anchor, layers, cell_box, Some(cbox))
    }

    fn from_cell_box(
        g: &GridHierarchy,
        kind: RegionKind,
        anchor: Anchor,
        layers: usize,
        cell_box: CellBox,
        coarse_box: Option<CoarseBox>,
    ) -> Self {
        let cells = cell_box.cells(g);
        let nodes = cell_box.nodes(g);
        let interior_nodes = nodes
            .iter()
            .copied()
            .filter(|&nd| {
                let (i, j) = g.fine_node_ij(nd);
                cell_box.node_is_interior(i, j)
            })
            .collect();
        let neumann_nodes = nodes
            .iter()
            .copied()
            .filter(|&nd| !g.is_boundary_node(nd))
            .collect();
        let n = g.n_fine();
        let covers_domain = cell_box == CellBox::new(0, n, 0, n);
        Self {
            kind,
            anchor,
            layers,
            cell_box,
            coarse_box,
            cells,
            nodes,
            interior_nodes,
            neumann_nodes,
            covers_domain,
        }
    }

    /// Unknowns of a local problem posed on this region.
    pub fn free_nodes(&self, bc: BoundaryCondition) -> &[usize] {
        match bc {
            BoundaryCondition::DirichletEliminated => &self.interior_nodes,
            BoundaryCondition::Neumann => &self.neumann_nodes,
        }
    }

    /// The region does not touch the global Dirichlet boundary.
    pub fn is_floating(&self, g: &GridHierarchy) -> bool {
        let b = &self.cell_box;
        b.x0 > 0 && b.y0 > 0 && b.x1 < g.n_fine() && b.y1 < g.n_fine()
    }

    /// Coarse cells contained in the region (coarse-aligned regions only).
    pub fn coarse_cells(&self, g: &GridHierarchy) -> Vec<usize> {
        self.coarse_box.map(|b| b.cells(g)).unwrap_or_default()
    }

    pub fn contains_cell(&self, g: &GridHierarchy, cell: usize) -> bool {
        let (i, j) = g.fine_cell_ij(cell);
        self.cell_box.contains_cell(i, j)
    }

    pub fn contains_node(&self, g: &GridHierarchy, node: usize) -> bool {
        let (i, j) = g.fine_node_ij(node);
        self.cell_box.contains_node(i, j)
    }

    /// δ in physical units for overlapping subdomains.
    pub fn overlap_width(&self, g: &GridHierarchy) -> f64 {
        match self.kind {
            RegionKind::Subdomain => self.layers as f64 * g.h(),
            _ => 0.0,
        }
    }
}

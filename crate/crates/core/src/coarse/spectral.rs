//! Spectral coarse spaces on coarse-node neighborhoods.
//!
//! On each ω_i the local stiffness (natural condition on ∂ω_i, Dirichlet on
//! ∂D) is paired with a weighted mass matrix; the lowest eigenvectors,
//! multiplied nodally by χ_i, span the coarse space.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::fem::{
    assemble_stiffness, assemble_weighted_mass, build_weight, lowest_eigenpairs, EigenPairs,
    SparseOperator, WeightField,
};
use crate::grid::{BoundaryCondition, GridHierarchy, Region};
use crate::scalar::Scalar;

use super::basis::{CoarseBasis, CoarseSpaceInfo, SparseColumn, SpaceVariant};
use super::pou::PartitionOfUnity;

/// Mass weight of the local eigenproblem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassWeight {
    /// ∫ κ v²
    KappaMass,
    /// ∫ κ Σ|∇χ|² v²
    MsMass,
}

impl MassWeight {
    fn variant(self) -> SpaceVariant {
        match self {
            MassWeight::KappaMass => SpaceVariant::KappaMass,
            MassWeight::MsMass => SpaceVariant::MsMass,
        }
    }

    /// Factor making eigenvalues dimensionless (κ-mass eigenvalues scale like H⁻²).
    pub fn normalization(self, g: &GridHierarchy) -> f64 {
        match self {
            MassWeight::KappaMass => g.H() * g.H(),
            MassWeight::MsMass => 1.0,
        }
    }

    pub fn weight<T: Scalar>(
        self,
        g: &GridHierarchy,
        field: &CoefficientField<T>,
        pou: &PartitionOfUnity<T>,
    ) -> WeightField<T> {
        match self {
            MassWeight::KappaMass => WeightField::from_coefficient(field),
            MassWeight::MsMass => build_weight(g, field, pou),
        }
    }
}

/// Rule for how many eigenvectors a region contributes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Selection {
    /// Exactly `count` per region.
    Fixed { count: usize },
    /// All eigenvalues whose dimensionless value is below `value`, at most `max`.
    Threshold { value: f64, max: usize },
    /// Cut at the largest ratio λ_{L+1}/λ_L for L ≤ `max`.
    Gap { max: usize },
}

impl Selection {
    /// Eigenpairs to compute so that the first excluded eigenvalue is known.
    pub fn requested(&self) -> usize {
        match *self {
            Selection::Fixed { count } => count + 1,
            Selection::Threshold { max, .. } | Selection::Gap { max } => max + 1,
        }
    }

    /// Number of eigenvectors kept from ascending `values` scaled by `norm`.
    pub fn choose(&self, values: &[f64], norm: f64) -> usize {
        match *self {
            Selection::Fixed { count } => count.min(values.len()),
            Selection::Threshold { value, max } => values
                .iter()
                .take(max)
                .take_while(|&&l| l * norm < value)
                .count(),
            Selection::Gap { max } => {
                let top = values.last().copied().unwrap_or(0.0).abs();
                let floor = 1e-12 * top.max(f64::MIN_POSITIVE);
                let mut best = (0usize, 0.0f64);
                for l in 1..=max.min(values.len().saturating_sub(1)) {
                    let ratio = values[l] / values[l - 1].max(floor);
                    if ratio >= best.1 {
                        best = (l, ratio);
                    }
                }
                best.0
            }
        }
    }
}

/// Eigen data of one neighborhood.
#[derive(Clone, Debug)]
pub struct RegionSpectrum<T> {
    pub coarse_node: usize,
    /// Free nodes of the local problem.
    pub nodes: Vec<usize>,
    /// All computed eigenvalues, ascending.
    pub eigenvalues: Vec<T>,
    /// Selected eigenvectors (mass-orthonormal), one per basis function.
    pub vectors: Vec<Vec<T>>,
}

impl<T: Scalar> RegionSpectrum<T> {
    pub fn count(&self) -> usize {
        self.vectors.len()
    }

    /// First excluded eigenvalue, when it was computed.
    pub fn first_excluded(&self) -> Option<T> {
        self.eigenvalues.get(self.count()).copied()
    }
}

/// Coarse space spanned by χ_i ψ_j^{ω_i}.
#[derive(Clone, Debug)]
pub struct SpectralCoarseSpace<T> {
    pub variant: SpaceVariant,
    pub basis: CoarseBasis<T>,
    pub regions: Vec<RegionSpectrum<T>>,
}

impl<T: Scalar> SpectralCoarseSpace<T> {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Λ = min_i λ^{ω_i}_{L_i+1} over regions where it was computed.
    pub fn lambda(&self) -> Option<f64> {
        self.regions
            .iter()
            .filter_map(|r| r.first_excluded())
            .map(|v| v.to64())
            .reduce(f64::min)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.regions.iter().map(|r| r.count()).collect()
    }

    pub fn info(&self) -> CoarseSpaceInfo {
        CoarseSpaceInfo {
            variant: self.variant,
            rows: self.basis.n_dofs(),
            dim: self.dim(),
            counts: self.counts(),
            eigenvalues: self
                .regions
                .iter()
                .map(|r| r.eigenvalues.iter().map(|v| v.to64()).collect())
                .collect(),
            lambda_min_excluded: self.lambda(),
        }
    }
}

/// Local stiffness and weighted mass on `region` (natural condition off ∂D).
pub fn local_pencil<T: Scalar>(
    g: &GridHierarchy,
    field: &CoefficientField<T>,
    weight: &WeightField<T>,
    region: &Region,
) -> (SparseOperator<T>, SparseOperator<T>) {
    let a = assemble_stiffness(g, field, region, BoundaryCondition::Neumann);
    let b = assemble_weighted_mass(g, weight, region, BoundaryCondition::Neumann);
    (a, b)
}

/// Nodal product χ_i ψ as a column over global dofs.
pub(crate) fn chi_times<T: Scalar>(
    g: &GridHierarchy,
    pou: &PartitionOfUnity<T>,
    coarse_node: usize,
    nodes: &[usize],
    psi: &[T],
) -> SparseColumn<T> {
    let chi = pou.get(coarse_node);
    let pairs = nodes
        .iter()
        .zip(psi)
        .filter_map(|(&nd, &v)| g.dof_of_node(nd).map(|d| (d, chi.value_at(g, nd) * v)))
        .collect();
    SparseColumn::from_pairs(pairs)
}

pub(crate) fn apply_selection<T: Scalar>(
    g: &GridHierarchy,
    region: &Region,
    mass: MassWeight,
    selection: &Selection,
    pairs: EigenPairs<T>,
) -> (Vec<T>, Vec<Vec<T>>) {
    let values64: Vec<f64> = pairs.values.iter().map(|v| v.to64()).collect();
    let mut count = selection.choose(&values64, mass.normalization(g));
    if count == 0 && mass == MassWeight::KappaMass && region.is_floating(g) && !pairs.is_empty() {
        warn!(
            "selection kept no eigenvector on floating region {:?}; keeping the near-constant mode",
            region.anchor
        );
        count = 1;
    }
    let vectors = pairs.vectors.into_iter().take(count).collect();
    (pairs.values, vectors)
}

/// Spectral coarse space over every coarse-node neighborhood.
pub fn build_spectral_space<T: Scalar>(
    g: &GridHierarchy,
    field: &CoefficientField<T>,
    pou: &PartitionOfUnity<T>,
    mass: MassWeight,
    selection: Selection,
) -> Result<SpectralCoarseSpace<T>> {
    check_field(g, field)?;
    let weight = mass.weight(g, field, pou);
    let regions: Vec<RegionSpectrum<T>> = (0..g.coarse_node_count())
        .into_par_iter()
        .map(|cn| {
            let region = &pou.get(cn).region;
            let (a, b) = local_pencil(g, field, &weight, region);
            let pairs = lowest_eigenpairs(a.matrix(), b.matrix(), a.geometry(), selection.requested())?;
            let (eigenvalues, vectors) = apply_selection(g, region, mass, &selection, pairs);
            Ok(RegionSpectrum {
                coarse_node: cn,
                nodes: a.nodes().to_vec(),
                eigenvalues,
                vectors,
            })
        })
        .collect::<Result<_>>()?;
    let columns = regions
        .iter()
        .flat_map(|r| {
            r.vectors
                .iter()
                .map(|psi| chi_times(g, pou, r.coarse_node, &r.nodes, psi))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(SpectralCoarseSpace {
        variant: mass.variant(),
        basis: CoarseBasis::new(g.dof_count(), columns)?,
        regions,
    })
}

/// The coarse hats at interior coarse nodes (one function per node, no eigenproblem).
pub fn build_hat_space<T: Scalar>(
    g: &GridHierarchy,
    pou: &PartitionOfUnity<T>,
) -> Result<SpectralCoarseSpace<T>> {
    let nc = g.n_coarse();
    let mut regions = Vec::new();
    let mut columns = Vec::new();
    for cn in 0..g.coarse_node_count() {
        let (i, j) = g.coarse_node_ij(cn);
        if i == 0 || j == 0 || i == nc || j == nc {
            continue;
        }
        let chi = pou.get(cn);
        let nodes = chi.region.neumann_nodes.clone();
        let ones = vec![T::one(); nodes.len()];
        columns.push(chi_times(g, pou, cn, &nodes, &ones));
        regions.push(RegionSpectrum {
            coarse_node: cn,
            nodes,
            eigenvalues: vec![],
            vectors: vec![ones],
        });
    }
    Ok(SpectralCoarseSpace {
        variant: SpaceVariant::Hat,
        basis: CoarseBasis::new(g.dof_count(), columns)?,
        regions,
    })
}

pub(crate) fn check_field<T: Scalar>(g: &GridHierarchy, field: &CoefficientField<T>) -> Result<()> {
    if field.n_fine() != g.n_fine() {
        return Err(Error::Dimension(format!(
            "coefficient has {} cells per side, grid has {}",
            field.n_fine(),
            g.n_fine()
        )));
    }
    Ok(())
}

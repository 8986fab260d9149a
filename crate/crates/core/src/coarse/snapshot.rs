//! Snapshot spaces from randomized local Neumann solves, and the spectral
//! space posed inside them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::fem::eig::{dense_pencil_eig, orthonormalize};
use crate::fem::{assemble_load_on, assemble_stiffness, DenseMatrix, Load};
use crate::grid::{BoundaryCondition, GridHierarchy, Region};
use crate::scalar::{dot, Scalar};

use super::basis::{CoarseBasis, SpaceVariant};
use super::pou::PartitionOfUnity;
use super::spectral::{
    apply_selection, check_field, chi_times, local_pencil, MassWeight, RegionSpectrum, Selection,
    SpectralCoarseSpace,
};

/// Orthonormal basis of W_i on the free nodes of a neighborhood.
#[derive(Clone, Debug)]
pub struct SnapshotSpace<T> {
    pub coarse_node: usize,
    pub samples: usize,
    pub seed: u64,
    /// Free nodes of the local problem.
    pub nodes: Vec<usize>,
    /// Euclidean-orthonormal vectors spanning W_i.
    pub basis: Vec<Vec<T>>,
}

impl<T: Scalar> SnapshotSpace<T> {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// W_i equal to the whole local space (no reduction).
    pub fn full(region: &Region, coarse_node: usize) -> Self {
        let nodes = region.neumann_nodes.clone();
        let n = nodes.len();
        let basis = (0..n)
            .map(|k| {
                let mut e = vec![T::zero(); n];
                e[k] = T::one();
                e
            })
            .collect();
        Self {
            coarse_node,
            samples: n,
            seed: 0,
            nodes,
            basis,
        }
    }
}

/// Random zero-mean forcings, local Neumann solves, and constants.
pub fn build_snapshot_space<T: Scalar>(
    g: &GridHierarchy,
    field: &CoefficientField<T>,
    region: &Region,
    samples: usize,
    seed: u64,
) -> Result<SnapshotSpace<T>> {
    check_field(g, field)?;
    let coarse_node = match region.anchor {
        crate::grid::Anchor::CoarseNode(c) => c,
        _ => {
            return Err(Error::InvalidArgument(
                "snapshot spaces are built on coarse-node neighborhoods".into(),
            ))
        }
    };
    let a = assemble_stiffness(g, field, region, BoundaryCondition::Neumann);
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(coarse_node as u64);
    let mut vectors = vec![vec![T::one(); n]];
    let mut f = vec![T::zero(); g.fine_cell_count()];
    for _ in 0..samples {
        let draws: Vec<f64> = region.cells.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        for (&c, d) in region.cells.iter().zip(&draws) {
            f[c] = T::of(d - mean);
        }
        let load = assemble_load_on(g, region, BoundaryCondition::Neumann, Load::Cellwise(&f));
        vectors.push(a.solve(&load)?);
    }
    orthonormalize(&mut vectors);
    Ok(SnapshotSpace {
        coarse_node,
        samples,
        seed,
        nodes: a.nodes().to_vec(),
        basis: vectors,
    })
}

/// Snapshot spaces on every coarse-node neighborhood.
pub fn build_all_snapshots<T: Scalar>(
    g: &GridHierarchy,
    field: &CoefficientField<T>,
    pou: &PartitionOfUnity<T>,
    samples: usize,
    seed: u64,
) -> Result<Vec<SnapshotSpace<T>>> {
    pou.functions()
        .par_iter()
        .map(|chi| build_snapshot_space(g, field, &chi.region, samples, seed))
        .collect()
}

/// Spectral problem restricted to the snapshot spaces.
pub fn build_gmsfem_space<T: Scalar>(
    g: &GridHierarchy,
    field: &CoefficientField<T>,
    pou: &PartitionOfUnity<T>,
    snapshots: &[SnapshotSpace<T>],
    mass: MassWeight,
    selection: Selection,
) -> Result<SpectralCoarseSpace<T>> {
    check_field(g, field)?;
    if snapshots.len() != g.coarse_node_count() {
        return Err(Error::Dimension(format!(
            "{} snapshot spaces for {} coarse nodes",
            snapshots.len(),
            g.coarse_node_count()
        )));
    }
    let weight = mass.weight(g, field, pou);
    let regions: Vec<RegionSpectrum<T>> = snapshots
        .par_iter()
        .map(|snap| {
            let region = &pou.get(snap.coarse_node).region;
            let (a, b) = local_pencil(g, field, &weight, region);
            if a.nodes() != snap.nodes.as_slice() {
                return Err(Error::Dimension(format!(
                    "snapshot space of node {} does not match its neighborhood",
                    snap.coarse_node
                )));
            }
            let w = &snap.basis;
            let aw: Vec<Vec<T>> = w.iter().map(|v| a.apply(v)).collect();
            let bw: Vec<Vec<T>> = w.iter().map(|v| b.apply(v)).collect();
            let m = w.len();
            let mut ap = DenseMatrix::from_fn(m, m, |i, j| dot(&w[i], &aw[j]));
            let mut bp = DenseMatrix::from_fn(m, m, |i, j| dot(&w[i], &bw[j]));
            ap.symmetrize();
            bp.symmetrize();
            let mut pairs = dense_pencil_eig(&ap, &bp, selection.requested())?;
            pairs.vectors = pairs
                .vectors
                .iter()
                .map(|c| {
                    let mut v = vec![T::zero(); snap.nodes.len()];
                    for (k, &ck) in c.iter().enumerate() {
                        crate::scalar::axpy(ck, &w[k], &mut v);
                    }
                    v
                })
                .collect();
            let (eigenvalues, vectors) = apply_selection(g, region, mass, &selection, pairs);
            Ok(RegionSpectrum {
                coarse_node: snap.coarse_node,
                nodes: snap.nodes.clone(),
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
        variant: SpaceVariant::Gmsfem,
        basis: CoarseBasis::new(g.dof_count(), columns)?,
        regions,
    })
}

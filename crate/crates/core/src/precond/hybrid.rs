//! Hybrid preconditioner `M⁻¹ = Π S Πᵀ + R A₀⁻¹ Rᵀ` with
//! `Π = I − R A₀⁻¹ Rᵀ A` and a CEM coarse space `R`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::{oversampled, CemCoarseSpace, ConstrainedOperator, PartitionOfUnity};
use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::fem::{global_operator, CsrMatrix, Factorization};
use crate::grid::{Anchor, GridHierarchy};
use crate::scalar::Scalar;

use super::schwarz::CoarseSolver;
use super::Preconditioner;

/// How the partition of unity enters the local solves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalWeighting {
    /// `½ Σ_i (R_i Ã_i⁻¹ R_iᵀ D_i + D_i R_i Ã_i⁻¹ R_iᵀ)`, symmetric.
    #[default]
    Symmetrized,
    /// `Σ_i R_i Ã_i⁻¹ R_iᵀ D_i`, not symmetric in general.
    Verbatim,
}

/// Stiffness used for `A₀` and `Π`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseOperator {
    /// `A₀ = Rᵀ A R` with the κ-weighted stiffness.
    #[default]
    KappaWeighted,
    /// `A₀ = Rᵀ A₁ R` with the stiffness of κ ≡ 1.
    Unweighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HybridOptions {
    pub weighting: LocalWeighting,
    pub coarse_operator: CoarseOperator,
    /// Bytes of local factors kept between applications; the rest are
    /// refactored on every application.
    pub memory_budget: usize,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self {
            weighting: LocalWeighting::Symmetrized,
            coarse_operator: CoarseOperator::KappaWeighted,
            memory_budget: 1 << 30,
        }
    }
}

#[derive(Debug)]
struct HybridLocal<T> {
    op: ConstrainedOperator<T>,
    chi: Vec<T>,
    fact: Option<Factorization<T>>,
}

impl<T: Scalar> HybridLocal<T> {
    fn apply(&self, r: &[T], weighting: LocalWeighting) -> Result<Vec<T>> {
        let fresh;
        let fact = match &self.fact {
            Some(f) => f,
            None => {
                fresh = self.op.augmented().factorize()?;
                &fresh
            }
        };
        let local: Vec<T> = self.op.dofs.iter().map(|&d| r[d]).collect();
        let weighted: Vec<T> = local.iter().zip(&self.chi).map(|(&a, &c)| a * c).collect();
        let mut z = self.op.solve_with(fact, &weighted)?;
        if weighting == LocalWeighting::Symmetrized {
            let y = self.op.solve_with(fact, &local)?;
            let half = T::of(0.5);
            for ((zi, yi), &c) in z.iter_mut().zip(y).zip(&self.chi) {
                *zi = half * (*zi + c * yi);
            }
        }
        Ok(z)
    }
}

#[derive(Debug)]
pub struct HybridCem<T> {
    a: CsrMatrix<T>,
    coarse: CoarseSolver<T>,
    locals: Vec<HybridLocal<T>>,
    layers: usize,
    options: HybridOptions,
}

impl<T: Scalar> HybridCem<T> {
    /// Local problems on ω_i⁺ with `layers` oversampling layers around every
    /// coarse-node neighborhood.
    pub fn new(
        g: &GridHierarchy,
        field: &CoefficientField<T>,
        pou: &PartitionOfUnity<T>,
        cem: &CemCoarseSpace<T>,
        layers: usize,
        options: HybridOptions,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidArgument(
                "the hybrid preconditioner needs at least one oversampling layer".into(),
            ));
        }
        if cem.layers != layers {
            log::warn!(
                "coarse basis built with {} layers, local problems use {}",
                cem.layers,
                layers
            );
        }
        let a = global_operator(g, field).matrix().clone();
        let a0_source = match options.coarse_operator {
            CoarseOperator::KappaWeighted => None,
            CoarseOperator::Unweighted => {
                Some(global_operator(g, &CoefficientField::constant(g, T::one())).matrix().clone())
            }
        };
        let coarse = CoarseSolver::new(cem.basis.clone(), a0_source.as_ref().unwrap_or(&a))?;

        let nodes: Vec<usize> = (0..g.coarse_node_count()).collect();
        let batch = 2 * rayon::current_num_threads().max(1);
        let mut used = 0usize;
        let mut locals = Vec::with_capacity(nodes.len());
        for chunk in nodes.chunks(batch) {
            let store = used < options.memory_budget;
            let built: Vec<HybridLocal<T>> = chunk
                .par_iter()
                .map(|&i| {
                    let region = oversampled(g, Anchor::CoarseNode(i), layers)?;
                    let op = ConstrainedOperator::new(g, field, &cem.aux, &region)?;
                    let hat = pou.get(i);
                    let chi = op.nodes.iter().map(|&nd| hat.value_at(g, nd)).collect();
                    let fact = if store {
                        Some(op.augmented().factorize()?)
                    } else {
                        None
                    };
                    Ok(HybridLocal { op, chi, fact })
                })
                .collect::<Result<_>>()?;
            for l in &built {
                if let Some(f) = &l.fact {
                    used += f.stored_entries() * std::mem::size_of::<T>();
                }
            }
            locals.extend(built);
        }
        let stored = locals.iter().filter(|l| l.fact.is_some()).count();
        if stored < locals.len() {
            log::info!(
                "hybrid: {stored} of {} local factorizations kept, the rest are refactored per application",
                locals.len()
            );
        }
        Ok(Self {
            a,
            coarse,
            locals,
            layers,
            options,
        })
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse.dim()
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn local_count(&self) -> usize {
        self.locals.len()
    }

    pub fn stored_factorizations(&self) -> usize {
        self.locals.iter().filter(|l| l.fact.is_some()).count()
    }

    /// `S r` without the projections.
    fn local_sum(&self, r: &[T]) -> Result<Vec<T>> {
        let parts: Vec<Vec<T>> = self
            .locals
            .par_iter()
            .map(|l| l.apply(r, self.options.weighting))
            .collect::<Result<_>>()?;
        let mut s = vec![T::zero(); r.len()];
        for (l, part) in self.locals.iter().zip(parts) {
            for (&d, v) in l.op.dofs.iter().zip(part) {
                s[d] += v;
            }
        }
        Ok(s)
    }
}

impl<T: Scalar> Preconditioner<T> for HybridCem<T> {
    fn apply(&self, r: &[T]) -> Result<Vec<T>> {
        let z0 = self.coarse.apply(r);
        let az0 = self.a.mul(&z0);
        let rp: Vec<T> = r.iter().zip(&az0).map(|(&a, &b)| a - b).collect();
        let s = self.local_sum(&rp)?;
        let corr = self.coarse.apply(&self.a.mul(&s));
        Ok(s.iter()
            .zip(&corr)
            .zip(&z0)
            .map(|((&s, &c), &z)| s - c + z)
            .collect())
    }

    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn name(&self) -> &'static str {
        "hybrid_cem"
    }
}

use rayon::prelude::*;

use crate::coarse::CoarseBasis;
use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::fem::dense::Cholesky;
use crate::fem::{assemble_stiffness, CsrMatrix, Factorization, SparseOperator};
use crate::grid::{BoundaryCondition, GridHierarchy, Region};
use crate::scalar::Scalar;

use super::Preconditioner;

/// `M = I`.
#[derive(Clone, Debug)]
pub struct Identity {
    n: usize,
}

impl Identity {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl<T: Scalar> Preconditioner<T> for Identity {
    fn apply(&self, r: &[T]) -> Result<Vec<T>> {
        Ok(r.to_vec())
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> &'static str {
        "identity"
    }
}

/// `M⁻¹ = A⁻¹` by a direct factorization.
#[derive(Debug)]
pub struct Exact<T> {
    a: CsrMatrix<T>,
    fact: Factorization<T>,
}

impl<T: Scalar> Exact<T> {
    pub fn new(a: &SparseOperator<T>) -> Result<Self> {
        Ok(Self {
            a: a.matrix().clone(),
            fact: a.factorize()?,
        })
    }
}

impl<T: Scalar> Preconditioner<T> for Exact<T> {
    fn apply(&self, r: &[T]) -> Result<Vec<T>> {
        self.fact.solve_refined(&self.a, r)
    }

    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn name(&self) -> &'static str {
        "exact"
    }
}

/// Dirichlet solver on one subdomain, acting on the global dof vector.
#[derive(Debug)]
pub struct LocalSolver<T> {
    dofs: Vec<usize>,
    op: SparseOperator<T>,
}

impl<T: Scalar> LocalSolver<T> {
    /// `A_j` on the interior nodes of the region, factored eagerly.
    pub fn new(g: &GridHierarchy, field: &CoefficientField<T>, region: &Region) -> Result<Self> {
        let op = assemble_stiffness(g, field, region, BoundaryCondition::DirichletEliminated);
        op.factorization()?;
        let dofs = op
            .nodes()
            .iter()
            .map(|&nd| g.dof_of_node(nd).expect("interior nodes are dofs"))
            .collect();
        Ok(Self { dofs, op })
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    /// `A_j⁻¹ R_jᵀ r` on the local dofs.
    pub fn solve_restricted(&self, r: &[T]) -> Result<Vec<T>> {
        let local: Vec<T> = self.dofs.iter().map(|&d| r[d]).collect();
        self.op.factorization()?.solve(&local)
    }
}

/// One-level additive Schwarz `Σ_j R_j A_j⁻¹ R_jᵀ`.
#[derive(Debug)]
pub struct OneLevel<T> {
    n: usize,
    locals: Vec<LocalSolver<T>>,
}

impl<T: Scalar> OneLevel<T> {
    pub fn new(g: &GridHierarchy, field: &CoefficientField<T>, subdomains: &[Region]) -> Result<Self> {
        if subdomains.is_empty() {
            return Err(Error::InvalidArgument("no subdomains given".into()));
        }
        let locals = subdomains
            .par_iter()
            .map(|r| LocalSolver::new(g, field, r))
            .collect::<Result<_>>()?;
        Ok(Self {
            n: g.dof_count(),
            locals,
        })
    }

    pub fn subdomain_count(&self) -> usize {
        self.locals.len()
    }
}

impl<T: Scalar> Preconditioner<T> for OneLevel<T> {
    fn apply(&self, r: &[T]) -> Result<Vec<T>> {
        let parts: Vec<Vec<T>> = self
            .locals
            .par_iter()
            .map(|l| l.solve_restricted(r))
            .collect::<Result<_>>()?;
        let mut z = vec![T::zero(); self.n];
        for (l, part) in self.locals.iter().zip(parts) {
            for (&d, v) in l.dofs.iter().zip(part) {
                z[d] += v;
            }
        }
        Ok(z)
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn name(&self) -> &'static str {
        "one_level"
    }
}

/// `R A₀⁻¹ Rᵀ` with `A₀ = Rᵀ A R` factored densely.
#[derive(Debug)]
pub struct CoarseSolver<T> {
    basis: CoarseBasis<T>,
    chol: Option<Cholesky<T>>,
}

impl<T: Scalar> CoarseSolver<T> {
    pub fn new(basis: CoarseBasis<T>, a: &CsrMatrix<T>) -> Result<Self> {
        if basis.n_dofs() != a.nrows() {
            return Err(Error::Dimension(format!(
                "coarse basis has {} rows, operator has {}",
                basis.n_dofs(),
                a.nrows()
            )));
        }
        let chol = if basis.dim() == 0 {
            None
        } else {
            let mut a0 = basis.galerkin(a);
            a0.symmetrize();
            Some(a0.cholesky()?)
        };
        Ok(Self { basis, chol })
    }

    pub fn basis(&self) -> &CoarseBasis<T> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn apply(&self, r: &[T]) -> Vec<T> {
        match &self.chol {
            None => vec![T::zero(); r.len()],
            Some(c) => {
                let mut y = self.basis.restrict(r);
                c.solve_in_place(&mut y);
                self.basis.extend(&y)
            }
        }
    }
}

/// Two-level additive Schwarz `R₀ A₀⁻¹ R₀ᵀ + Σ_j R_j A_j⁻¹ R_jᵀ`.
#[derive(Debug)]
pub struct TwoLevel<T> {
    one: OneLevel<T>,
    coarse: CoarseSolver<T>,
}

impl<T: Scalar> TwoLevel<T> {
    pub fn new(
        g: &GridHierarchy,
        field: &CoefficientField<T>,
        subdomains: &[Region],
        basis: CoarseBasis<T>,
        a: &CsrMatrix<T>,
    ) -> Result<Self> {
        Ok(Self {
            one: OneLevel::new(g, field, subdomains)?,
            coarse: CoarseSolver::new(basis, a)?,
        })
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse.dim()
    }
}

impl<T: Scalar> Preconditioner<T> for TwoLevel<T> {
    fn apply(&self, r: &[T]) -> Result<Vec<T>> {
        let mut z = self.one.apply(r)?;
        for (zi, ci) in z.iter_mut().zip(self.coarse.apply(r)) {
            *zi += ci;
        }
        Ok(z)
    }

    fn dim(&self) -> usize {
        self.one.n
    }

    fn name(&self) -> &'static str {
        "two_level"
    }
}

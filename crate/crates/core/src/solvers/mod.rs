//! Dense solvers over polyhedra: a primal simplex LP, a primal active-set QP and
//! the affine variational inequality solver built on the QP.

mod lp;
mod polyhedron;
mod qp;

use nalgebra::{DMatrix, DVector};

pub use lp::solve_lp;
pub use polyhedron::Polyhedron;
pub use qp::solve_qp;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kkt_tol: f64,
    pub feas_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { kkt_tol: 1e-9, feas_tol: 1e-9, max_iterations: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: Status,
    /// Minimiser (or maximiser); for `Unbounded` the last iterate.
    pub solution: DVector<f64>,
    pub objective: f64,
    /// Indices of inequality rows that hold with equality.
    pub active: Vec<usize>,
    /// Sign-constrained variables sitting at zero.
    pub active_bounds: Vec<usize>,
    pub iterations: usize,
    /// Multipliers `u` with `c = Σ u_eq a_eq + Σ u_ineq g + (bound multipliers)` at the optimum,
    /// stated for the requested sense. Empty unless `status` is optimal.
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub(crate) fn empty(status: Status, dim: usize, iterations: usize) -> Self {
        Self {
            status,
            solution: DVector::zeros(dim),
            objective: match status {
                Status::Infeasible => f64::NAN,
                _ => f64::NEG_INFINITY,
            },
            active: Vec::new(),
            active_bounds: Vec::new(),
            iterations,
            eq_duals: Vec::new(),
            ineq_duals: Vec::new(),
        }
    }

    /// Fills the activity lists from the final point.
    pub(crate) fn mark_active(&mut self, poly: &Polyhedron, tol: f64) {
        let x = &self.solution;
        self.active = (0..poly.ineq_rows.len())
            .filter(|&i| {
                let lhs: f64 = poly.ineq_rows[i].iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                lhs - poly.ineq_rhs[i] <= tol * (1.0 + poly.ineq_rhs[i].abs())
            })
            .collect();
        self.active_bounds = (0..poly.dim()).filter(|&j| poly.nonneg[j] && !poly.fixed_zero[j] && x[j] <= tol).collect();
    }
}

/// Solves `VI(poly, A x + c)`: finds `x*` in `poly` with `(A x* + c)ᵀ (x - x*) >= 0` for all `x` in `poly`.
///
/// For symmetric positive semidefinite `A` this is the minimisation of `½ xᵀ A x + cᵀ x`.
pub fn solve_vi(poly: &Polyhedron, a: &DMatrix<f64>, c: &DVector<f64>, opts: &SolverOptions) -> Result<SolveReport> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("VI matrix must be square".into()));
    }
    let asym = (a - a.transpose()).abs().max();
    if asym > opts.kkt_tol * (1.0 + a.abs().max()) {
        return Err(Error::Numerical(format!("VI matrix is not symmetric (asymmetry {asym:e})")));
    }
    solve_qp(poly, a, c, opts)
}

/// Symmetric PSD check; returns the smallest eigenvalue on failure.
pub(crate) fn check_psd(h: &DMatrix<f64>, tol: f64) -> Result<()> {
    if h.is_empty() {
        return Ok(());
    }
    let sym = (h + h.transpose()) * 0.5;
    let min = sym.symmetric_eigen().eigenvalues.min();
    if min < -tol * (1.0 + h.abs().max()) {
        return Err(Error::NotPsd(min));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vi_identity_over_simplex_is_uniform() {
        for n in 1..6 {
            let mut poly = Polyhedron::nonneg_orthant(n);
            poly.add_eq(vec![1.0; n], 1.0);
            let r = solve_vi(&poly, &DMatrix::identity(n, n), &DVector::zeros(n), &SolverOptions::default()).unwrap();
            for j in 0..n {
                assert!((r.solution[j] - 1.0 / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vi_rejects_asymmetric() {
        let poly = Polyhedron::nonneg_orthant(2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(solve_vi(&poly, &a, &DVector::zeros(2), &SolverOptions::default()).is_err());
    }
}

use nalgebra::DVector;

use crate::error::{Error, Result};

/// `{x : E x = e, G x >= h, x_j >= 0 for flagged j, x_j = 0 for fixed j}`.
///
/// Sign and zero constraints on single variables are kept as flags rather than
/// rows so that the solvers can treat them as bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    dim: usize,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ineq_rows: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    pub nonneg: Vec<bool>,
    pub fixed_zero: Vec<bool>,
}

impl Polyhedron {
    /// All of `R^dim`.
    pub fn free(dim: usize) -> Self {
        Self {
            dim,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            ineq_rows: Vec::new(),
            ineq_rhs: Vec::new(),
            nonneg: vec![false; dim],
            fixed_zero: vec![false; dim],
        }
    }

    /// The nonnegative orthant.
    pub fn nonneg_orthant(dim: usize) -> Self {
        let mut p = Self::free(dim);
        p.nonneg = vec![true; dim];
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    /// Adds `row · x >= rhs`.
    pub fn add_ineq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.ineq_rows.push(row);
        self.ineq_rhs.push(rhs);
        self
    }

    pub fn set_nonneg(&mut self, j: usize, on: bool) -> &mut Self {
        self.nonneg[j] = on;
        self
    }

    pub fn fix_zero(&mut self, j: usize) -> &mut Self {
        self.fixed_zero[j] = true;
        self
    }

    /// Variables that are not fixed at zero.
    pub fn kept(&self) -> Vec<usize> {
        (0..self.dim).filter(|&j| !self.fixed_zero[j]).collect()
    }

    pub fn check(&self) -> Result<()> {
        let ok = self.eq_rows.len() == self.eq_rhs.len()
            && self.ineq_rows.len() == self.ineq_rhs.len()
            && self.nonneg.len() == self.dim
            && self.fixed_zero.len() == self.dim
            && self.eq_rows.iter().chain(&self.ineq_rows).all(|r| r.len() == self.dim)
            && self.eq_rhs.iter().chain(&self.ineq_rhs).all(|v| v.is_finite())
            && self.eq_rows.iter().chain(&self.ineq_rows).flatten().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch("polyhedron rows, rhs and dimension disagree".into()))
        }
    }

    /// Largest constraint violation at `x`.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let dot = |r: &Vec<f64>| r.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
        let mut v = 0.0_f64;
        for (r, &b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            v = v.max((dot(r) - b).abs());
        }
        for (r, &h) in self.ineq_rows.iter().zip(&self.ineq_rhs) {
            v = v.max(h - dot(r));
        }
        for j in 0..self.dim {
            if self.nonneg[j] {
                v = v.max(-x[j]);
            }
            if self.fixed_zero[j] {
                v = v.max(x[j].abs());
            }
        }
        v
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim && self.violation(x) <= tol
    }
}

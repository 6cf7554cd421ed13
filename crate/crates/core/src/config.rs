//! Numerical tolerances and size caps shared by every operation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Stationarity and complementarity tolerance for solver termination.
    pub kkt: f64,
    /// Constraint violation tolerance.
    pub feas: f64,
    /// Tolerance for classifying paths as active or used, scaled by `1 + |value|`.
    pub class: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { kkt: 1e-9, feas: 1e-9, class: 1e-7 }
    }
}

impl Tolerances {
    /// `a <= b` up to the classification tolerance.
    pub fn leq(&self, a: f64, b: f64) -> bool {
        a - b <= self.class * (1.0 + b.abs())
    }

    pub fn close(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.class * (1.0 + a.abs().max(b.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub paths: usize,
    pub breakpoints: usize,
    pub subsets: usize,
    pub solver_iterations: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self { paths: 10_000, breakpoints: 10_000, subsets: 4096, solver_iterations: 50_000 }
    }
}

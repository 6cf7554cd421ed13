//! Wardrop equilibria of single-commodity routing games with affine edge costs.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] enumerates origin-destination paths and builds the path cost model `C(f) = A f + beta`.
//! * [`solvers`] holds the linear, quadratic and variational-inequality solvers over polyhedra.
//! * [`equilibrium`] computes equilibria, their polytopes, used sets and necessity tests.
//! * [`sweep`] traces the piecewise affine equilibrium cost curve over all demands.
//! * [`braess`] compares a game with modified games in which some paths are removed.
//! * [`io`] reads networks and writes curves as CSV or SVG.

pub mod braess;
pub mod config;
pub mod equilibrium;
pub mod error;
pub mod graph;
pub mod io;
pub mod solvers;
pub mod sweep;

pub use braess::{BpReport, Condition, ModifiedGame, Verdict};
pub use config::{Caps, Tolerances};
pub use equilibrium::{compute_we, is_necessary, used_set, we_polytope, EquilibriumSnapshot, RoutingGame, WePolytope};
pub use error::{Error, Result};
pub use graph::{build_cost_model, edge_flow, enumerate_paths, Edge, Network, Path, PathCostModel};
pub use io::{parse_network, NetworkFile};
pub use sweep::{final_interval, trace_curve, CurveInterval, FinalIntervalData, PiecewiseAffineCurve};


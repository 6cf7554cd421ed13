//! Wardrop equilibria at a fixed demand: flows, costs, active and used sets.

use nalgebra::DVector;
use serde::Serialize;

use crate::config::{Caps, Tolerances};
use crate::error::{Error, Result};
use crate::graph::PathCostModel;
use crate::solvers::{solve_lp, solve_qp, Polyhedron, Sense, SolverOptions, Status};

/// A cost model together with the set of paths that may carry flow.
///
/// Removing paths gives the modified games used in the Braess analysis; all
/// sets reported for such a game are subsets of the retained paths.
#[derive(Debug, Clone)]
pub struct RoutingGame<'a> {
    pub model: &'a PathCostModel,
    retained: Vec<bool>,
    pub tol: Tolerances,
    pub caps: Caps,
}

impl<'a> RoutingGame<'a> {
    pub fn new(model: &'a PathCostModel) -> Self {
        Self { model, retained: vec![true; model.n_paths()], tol: Tolerances::default(), caps: Caps::default() }
    }

    pub fn with_config(mut self, tol: Tolerances, caps: Caps) -> Self {
        self.tol = tol;
        self.caps = caps;
        self
    }

    /// The same game with the paths in `removed` forced to carry no flow.
    pub fn without(&self, removed: &[usize]) -> Result<Self> {
        let mut retained = self.retained.clone();
        for &p in removed {
            if p >= retained.len() {
                return Err(Error::InvalidPathSet(format!("path index {} out of range", p + 1)));
            }
            retained[p] = false;
        }
        if !retained.iter().any(|&r| r) {
            return Err(Error::InvalidPathSet("cannot remove every path".into()));
        }
        Ok(Self { retained, ..self.clone() })
    }

    pub fn n_paths(&self) -> usize {
        self.model.n_paths()
    }

    pub fn is_retained(&self, p: usize) -> bool {
        self.retained[p]
    }

    pub fn retained(&self) -> Vec<usize> {
        (0..self.n_paths()).filter(|&p| self.retained[p]).collect()
    }

    pub fn removed(&self) -> Vec<usize> {
        (0..self.n_paths()).filter(|&p| !self.retained[p]).collect()
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { kkt_tol: self.tol.kkt, feas_tol: self.tol.feas, max_iterations: self.caps.solver_iterations }
    }

    /// `F_D` restricted to the retained paths.
    pub fn flow_polytope(&self, demand: f64) -> Polyhedron {
        let n = self.n_paths();
        let mut poly = Polyhedron::nonneg_orthant(n);
        poly.add_eq(vec![1.0; n], demand);
        for p in self.removed() {
            poly.fix_zero(p);
        }
        poly
    }

    /// Smallest cost over retained paths.
    pub fn min_cost(&self, cost: &DVector<f64>) -> f64 {
        self.retained().iter().map(|&p| cost[p]).fold(f64::INFINITY, f64::min)
    }

    /// Retained paths whose cost is within the classification tolerance of `level`.
    pub fn paths_at_level(&self, cost: &DVector<f64>, level: f64) -> Vec<usize> {
        self.retained().into_iter().filter(|&p| cost[p] - level <= self.tol.class * (1.0 + level.abs())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSnapshot {
    pub demand: f64,
    /// A representative equilibrium flow.
    pub flow: Vec<f64>,
    /// Path costs `A f + beta`, the same for every equilibrium.
    pub cost: Vec<f64>,
    /// Equilibrium cost: the smallest path cost.
    pub we_cost: f64,
    pub active: Vec<usize>,
    pub used: Vec<usize>,
    /// Beckmann potential at the equilibrium.
    pub beckmann: f64,
}

impl EquilibriumSnapshot {
    pub fn flow_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.flow)
    }

    pub fn cost_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.cost)
    }
}

/// The set of equilibria at one demand.
#[derive(Debug, Clone)]
pub struct WePolytope {
    pub demand: f64,
    pub poly: Polyhedron,
    pub active: Vec<usize>,
    /// A known member.
    pub representative: DVector<f64>,
}

fn check_demand(demand: f64) -> Result<()> {
    if !(demand.is_finite() && demand >= 0.0) {
        return Err(Error::InvalidDemand(demand));
    }
    Ok(())
}

/// Minimiser of the Beckmann potential over `F_D`.
pub(crate) fn beckmann_flow(game: &RoutingGame, demand: f64) -> Result<DVector<f64>> {
    check_demand(demand)?;
    let n = game.n_paths();
    if demand == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let report = solve_qp(&game.flow_polytope(demand), &game.model.a, &game.model.beta, &game.solver_options())?;
    match report.status {
        Status::Optimal => Ok(report.solution.map(|v| v.max(0.0))),
        Status::Infeasible => Err(Error::Infeasible),
        Status::Unbounded => Err(Error::Unbounded),
    }
}

/// Equilibrium snapshot at demand `demand`, including the used set.
pub fn compute_we(game: &RoutingGame, demand: f64) -> Result<EquilibriumSnapshot> {
    let flow = beckmann_flow(game, demand)?;
    let cost = game.model.cost(&flow);
    let we_cost = game.min_cost(&cost);
    let active = game.paths_at_level(&cost, we_cost);
    let mut snap = EquilibriumSnapshot {
        demand,
        flow: flow.as_slice().to_vec(),
        cost: cost.as_slice().to_vec(),
        we_cost,
        active,
        used: Vec::new(),
        beckmann: game.model.potential(&flow),
    };
    if demand > 0.0 {
        let wep = we_polytope(game, &snap);
        snap.used = used_set_from(game, &wep, &flow)?;
    }
    Ok(snap)
}

/// `{f in F_D : f = 0 off the active set, A f = A f^D}`.
pub fn we_polytope(game: &RoutingGame, snap: &EquilibriumSnapshot) -> WePolytope {
    let n = game.n_paths();
    let flow = snap.flow_vec();
    let mut poly = game.flow_polytope(snap.demand);
    for p in 0..n {
        if !snap.active.contains(&p) {
            poly.fix_zero(p);
        }
    }
    let af = &game.model.a * &flow;
    for p in 0..n {
        let row: Vec<f64> = game.model.a.row(p).iter().copied().collect();
        if row.iter().any(|&v| v != 0.0) {
            poly.add_eq(row, af[p]);
        }
    }
    WePolytope { demand: snap.demand, poly, active: snap.active.clone(), representative: flow }
}

fn positive_threshold(game: &RoutingGame, demand: f64) -> f64 {
    game.tol.class * (1.0 + demand)
}

/// Paths that carry positive flow in some equilibrium.
pub fn used_set(game: &RoutingGame, wep: &WePolytope) -> Result<Vec<usize>> {
    used_set_from(game, wep, &wep.representative)
}

fn used_set_from(game: &RoutingGame, wep: &WePolytope, hint: &DVector<f64>) -> Result<Vec<usize>> {
    let n = game.n_paths();
    let thr = positive_threshold(game, wep.demand);
    let mut used = vec![false; n];
    for p in 0..n {
        used[p] = hint[p] > thr;
    }
    for &p in &wep.active {
        if used[p] {
            continue;
        }
        let mut c = DVector::zeros(n);
        c[p] = 1.0;
        let r = solve_lp(&wep.poly, &c, Sense::Max, &game.solver_options())?;
        match r.status {
            Status::Optimal => {
                // Any LP vertex may reveal several used paths at once.
                for (u, &x) in used.iter_mut().zip(r.solution.iter()) {
                    if x > thr {
                        *u = true;
                    }
                }
            }
            Status::Unbounded => used[p] = true,
            Status::Infeasible => return Err(Error::Numerical("equilibrium polytope reported empty".into())),
        }
    }
    Ok((0..n).filter(|&p| used[p]).collect())
}

/// Whether every equilibrium puts positive flow on the path set `set`.
pub fn is_necessary(game: &RoutingGame, wep: &WePolytope, set: &[usize]) -> Result<bool> {
    let n = game.n_paths();
    if set.is_empty() || set.iter().any(|&p| p >= n) {
        return Err(Error::InvalidPathSet("path set must be nonempty and in range".into()));
    }
    let mut c = DVector::zeros(n);
    for &p in set {
        c[p] = 1.0;
    }
    let r = solve_lp(&wep.poly, &c, Sense::Min, &game.solver_options())?;
    match r.status {
        Status::Optimal => Ok(r.objective > positive_threshold(game, wep.demand)),
        Status::Unbounded => Err(Error::Numerical("necessity LP unbounded".into())),
        Status::Infeasible => Err(Error::Numerical("equilibrium polytope reported empty".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;
    use crate::graph::find_path;

    fn idx(m: &PathCostModel, edges: &[usize]) -> usize {
        find_path(&m.paths, edges).unwrap()
    }

    #[test]
    fn wheatstone_points() {
        let m = model(&wheatstone());
        let g = RoutingGame::new(&m);
        let (p1, p2, p3) = (idx(&m, &[0, 1]), idx(&m, &[2, 3]), idx(&m, &[0, 4, 3]));
        let s = compute_we(&g, 1.5).unwrap();
        for p in [p1, p2, p3] {
            assert!((s.flow[p] - 0.5).abs() < 1e-9);
        }
        assert!((s.we_cost - 2.0).abs() < 1e-9);
        let s = compute_we(&g, 3.0).unwrap();
        assert!((s.flow[p1] - 1.5).abs() < 1e-9 && (s.flow[p2] - 1.5).abs() < 1e-9 && s.flow[p3].abs() < 1e-9);
        assert!((s.we_cost - 2.5).abs() < 1e-9);
        let s = compute_we(&g, 0.0).unwrap();
        assert_eq!(s.we_cost, 0.0);
        assert_eq!(s.active, vec![p3]);
        assert!(s.used.is_empty());
        let s = compute_we(&g, 1.0).unwrap();
        assert_eq!(s.used, vec![p3]);
        assert_eq!(s.active.len(), 3);
        assert!(compute_we(&g, -1.0).is_err());
    }

    #[test]
    fn seven_edge_at_six() {
        let m = model(&seven_edge());
        let g = RoutingGame::new(&m);
        let s = compute_we(&g, 6.0).unwrap();
        let expect = [(vec![0, 1], 3.0), (vec![2, 6, 3], 2.0), (vec![0, 4, 3], 0.0), (vec![2, 5], 1.0)];
        for (edges, v) in expect {
            assert!((s.flow[idx(&m, &edges)] - v).abs() < 1e-8);
        }
    }

    #[test]
    fn merged_polytope_and_necessity() {
        let m = model(&merged());
        let g = RoutingGame::new(&m);
        let p3 = idx(&m, &[0, 3]);
        let s = compute_we(&g, 2.0).unwrap();
        assert_eq!(s.used, vec![0, 1, 2, 3]);
        let wep = we_polytope(&g, &compute_we(&g, 1.5).unwrap());
        assert!(is_necessary(&g, &wep, &[p3]).unwrap());
        assert!(is_necessary(&g, &wep, &[0, 1, 2, 3]).unwrap());
        let wep = we_polytope(&g, &compute_we(&g, 2.5).unwrap());
        assert!(!is_necessary(&g, &wep, &[p3]).unwrap());
        assert!(is_necessary(&g, &wep, &[]).is_err());
        // below demand 1 the polytope is the single point (0, 0, D, 0)
        let wep = we_polytope(&g, &compute_we(&g, 0.5).unwrap());
        for p in 0..4 {
            let mut c = DVector::zeros(4);
            c[p] = 1.0;
            let hi = solve_lp(&wep.poly, &c, Sense::Max, &g.solver_options()).unwrap().objective;
            let lo = solve_lp(&wep.poly, &c, Sense::Min, &g.solver_options()).unwrap().objective;
            let expect = if p == p3 { 0.5 } else { 0.0 };
            assert!((hi - expect).abs() < 1e-9 && (lo - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn modified_game_restricts_sets() {
        let m = model(&wheatstone());
        let p3 = idx(&m, &[0, 4, 3]);
        let g = RoutingGame::new(&m).without(&[p3]).unwrap();
        let s = compute_we(&g, 1.0).unwrap();
        assert!((s.we_cost - 1.5).abs() < 1e-9);
        assert!(!s.active.contains(&p3));
        assert!(RoutingGame::new(&m).without(&[0, 1, 2]).is_err());
        assert!(RoutingGame::new(&m).without(&[7]).is_err());
    }
}

//! Demand sweep: directions of increase and decrease, the exact piecewise affine
//! equilibrium cost curve, and the data of its final, unbounded interval.

use log::{debug, warn};
use nalgebra::DVector;
use serde::Serialize;

use crate::equilibrium::{compute_we, EquilibriumSnapshot, RoutingGame};
use crate::error::{Error, Result};
use crate::solvers::{solve_lp, solve_qp, solve_vi, Polyhedron, Sense, SolveReport, Status};

/// Directions in which the equilibrium set moves as demand changes by one unit.
#[derive(Debug, Clone)]
pub struct DirectionPolytope {
    /// `f` summing to `sign`, zero off the active set, nonnegative on active-but-unused paths.
    pub base: Polyhedron,
    /// `base` intersected with `A f = cost_direction`.
    pub solution_set: Polyhedron,
    /// Rate of change of the path cost vector, `A f` for every member.
    pub cost_direction: DVector<f64>,
    pub representative: DVector<f64>,
    /// `+1` for increase, `-1` for decrease.
    pub sign: f64,
    /// One-sided slope of the equilibrium cost: right slope for increase, left slope for decrease.
    pub slope: f64,
}

fn direction_polytope(game: &RoutingGame, snap: &EquilibriumSnapshot, sign: f64) -> Result<DirectionPolytope> {
    let n = game.n_paths();
    let mut base = Polyhedron::free(n);
    base.add_eq(vec![1.0; n], sign);
    for p in 0..n {
        if !snap.active.contains(&p) {
            base.fix_zero(p);
        } else if !snap.used.contains(&p) {
            base.set_nonneg(p, true);
        }
    }
    let r = expect_optimal(solve_vi(&base, &game.model.a, &DVector::zeros(n), &game.solver_options())?, "direction")?;
    let f = r.solution;
    let dc = &game.model.a * &f;
    let mut solution_set = base.clone();
    for p in 0..n {
        let row: Vec<f64> = game.model.a.row(p).iter().copied().collect();
        if row.iter().any(|&v| v != 0.0) {
            solution_set.add_eq(row, dc[p]);
        }
    }
    let min = snap.active.iter().map(|&r| dc[r]).fold(f64::INFINITY, f64::min);
    Ok(DirectionPolytope { base, solution_set, cost_direction: dc, representative: f, sign, slope: sign * min })
}

fn expect_optimal(r: SolveReport, what: &str) -> Result<SolveReport> {
    match r.status {
        Status::Optimal => Ok(r),
        Status::Infeasible => Err(Error::Numerical(format!("{what} problem reported infeasible"))),
        Status::Unbounded => Err(Error::Numerical(format!("{what} problem reported unbounded"))),
    }
}

/// Directions of increase at the snapshot's demand.
pub fn directions_of_increase(game: &RoutingGame, snap: &EquilibriumSnapshot) -> Result<DirectionPolytope> {
    direction_polytope(game, snap, 1.0)
}

/// Directions of decrease; `slope` is the left derivative of the equilibrium cost.
pub fn directions_of_decrease(game: &RoutingGame, snap: &EquilibriumSnapshot) -> Result<DirectionPolytope> {
    if snap.demand <= 0.0 {
        return Err(Error::InvalidDemand(snap.demand));
    }
    direction_polytope(game, snap, -1.0)
}

/// One affine piece of the equilibrium cost curve, `[start, end)` with `end = None` for the final piece.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveInterval {
    pub index: usize,
    pub start: f64,
    pub end: Option<f64>,
    /// Equilibrium cost at `start`.
    pub we_cost_start: f64,
    /// Path costs at `start`.
    pub cost_start: Vec<f64>,
    /// Slope of the equilibrium cost on the interval.
    pub slope: f64,
    /// Slope of the path cost vector on the interval.
    pub cost_slope: Vec<f64>,
    /// Active set inside the interval.
    pub active: Vec<usize>,
    /// Used set inside the interval.
    pub used: Vec<usize>,
    /// A direction of increase valid on the interval.
    pub direction: Vec<f64>,
}

impl CurveInterval {
    pub fn contains(&self, demand: f64) -> bool {
        demand >= self.start && self.end.is_none_or(|e| demand <= e)
    }

    pub fn we_cost(&self, demand: f64) -> f64 {
        self.we_cost_start + (demand - self.start) * self.slope
    }

    /// `(slope, intercept)` of the affine function that agrees with the equilibrium cost here.
    pub fn affine(&self) -> (f64, f64) {
        (self.slope, self.we_cost_start - self.start * self.slope)
    }

    pub fn cost(&self, demand: f64) -> Vec<f64> {
        self.cost_start.iter().zip(&self.cost_slope).map(|(c, s)| c + (demand - self.start) * s).collect()
    }
}

/// Exact equilibrium cost curve over demand.
#[derive(Debug, Clone, Serialize)]
pub struct PiecewiseAffineCurve {
    pub n_paths: usize,
    pub removed: Vec<usize>,
    /// Snapshot at the start of each interval; `breakpoints[i].demand == intervals[i].start`.
    pub breakpoints: Vec<EquilibriumSnapshot>,
    pub intervals: Vec<CurveInterval>,
    /// False when tracing stopped at a demand cap before reaching the final interval.
    pub complete: bool,
}

impl PiecewiseAffineCurve {
    /// Finite breakpoints `0 = D_0 < D_1 < ...`.
    pub fn breakpoint_demands(&self) -> Vec<f64> {
        self.breakpoints.iter().map(|s| s.demand).collect()
    }

    /// Index of the interval containing `demand`; breakpoints belong to the interval they start.
    pub fn interval_index(&self, demand: f64) -> usize {
        self.intervals.iter().rposition(|iv| iv.start <= demand).unwrap_or(0)
    }

    pub fn interval_at(&self, demand: f64) -> &CurveInterval {
        &self.intervals[self.interval_index(demand)]
    }

    pub fn we_cost(&self, demand: f64) -> f64 {
        self.interval_at(demand).we_cost(demand)
    }

    pub fn cost_vector(&self, demand: f64) -> Vec<f64> {
        self.interval_at(demand).cost(demand)
    }

    pub fn final_interval(&self) -> Option<&CurveInterval> {
        self.intervals.last().filter(|iv| iv.end.is_none())
    }

    /// Last finite breakpoint, if the curve is complete.
    pub fn last_breakpoint(&self) -> Option<f64> {
        self.final_interval().map(|iv| iv.start)
    }

    /// Beckmann potential `V(D)`, the integral of the equilibrium cost from 0.
    pub fn beckmann(&self, demand: f64) -> f64 {
        let mut total = 0.0;
        for iv in &self.intervals {
            if demand <= iv.start {
                break;
            }
            let hi = iv.end.map_or(demand, |e| e.min(demand));
            let w = hi - iv.start;
            total += iv.we_cost_start * w + 0.5 * iv.slope * w * w;
        }
        total
    }
}

/// Largest `T` up to which the interval's affine description stays an equilibrium; `None` if unbounded.
fn next_breakpoint(
    game: &RoutingGame,
    snap: &EquilibriumSnapshot,
    dc: &DVector<f64>,
    slope: f64,
    active: &[usize],
) -> Result<Option<f64>> {
    let n = game.n_paths();
    let a = &game.model.a;
    let beta = &game.model.beta;
    let d = snap.demand;
    let t = n;
    let mut poly = Polyhedron::nonneg_orthant(n + 1);
    for p in 0..n {
        if !active.contains(&p) {
            poly.fix_zero(p);
        }
    }
    let mut sum = vec![1.0; n + 1];
    sum[t] = -1.0;
    poly.add_eq(sum, 0.0);
    let mut lower_t = vec![0.0; n + 1];
    lower_t[t] = 1.0;
    poly.add_ineq(lower_t, d);
    for r in game.retained() {
        let mut row: Vec<f64> = a.row(r).iter().copied().collect();
        if active.contains(&r) {
            row.push(-dc[r]);
            poly.add_eq(row, snap.cost[r] - d * dc[r] - beta[r]);
        } else {
            row.push(-slope);
            poly.add_ineq(row, snap.we_cost - d * slope - beta[r]);
        }
    }
    let mut c = DVector::zeros(n + 1);
    c[t] = 1.0;
    let r = solve_lp(&poly, &c, Sense::Max, &game.solver_options())?;
    match r.status {
        Status::Optimal => Ok(Some(r.solution[t])),
        Status::Unbounded => Ok(None),
        Status::Infeasible => Err(Error::Numerical(format!("breakpoint program infeasible at demand {d}"))),
    }
}

/// Direction data for the interval that starts at `snap`.
struct Piece {
    dir: DirectionPolytope,
    slope: f64,
    end: Option<f64>,
}

fn piece_from(game: &RoutingGame, snap: &EquilibriumSnapshot) -> Result<Piece> {
    let dir = directions_of_increase(game, snap)?;
    let dc = &dir.cost_direction;
    let slope = dir.slope;
    let active: Vec<usize> =
        snap.active.iter().copied().filter(|&r| dc[r] - slope <= game.tol.class * (1.0 + slope.abs())).collect();
    let end = next_breakpoint(game, snap, dc, slope, &active)?;
    Ok(Piece { dir, slope, end })
}

/// Traces the equilibrium cost curve from demand 0, stopping after the interval that
/// contains `d_max` (or at the final interval).
pub fn trace_curve(game: &RoutingGame, d_max: Option<f64>) -> Result<PiecewiseAffineCurve> {
    if let Some(dm) = d_max {
        if dm.is_nan() || dm < 0.0 {
            return Err(Error::InvalidDemand(dm));
        }
    }
    let n = game.n_paths();
    let mut breakpoints = Vec::new();
    let mut intervals: Vec<CurveInterval> = Vec::new();
    let mut snap = compute_we(game, 0.0)?;
    let complete = loop {
        if breakpoints.len() >= game.caps.breakpoints {
            return Err(Error::MaxBreakpoints(game.caps.breakpoints));
        }
        let d = snap.demand;
        let merge_gap = 1e-8 * (1.0 + d);
        let mut piece = piece_from(game, &snap)?;
        if piece.end.is_some_and(|e| e - d < merge_gap) {
            // Numerically coincident breakpoints: continue from a point just inside the next piece.
            let mut h = 1e-6 * (1.0 + d);
            loop {
                warn!("merging breakpoints near demand {d}; probing at {}", d + h);
                let probe = compute_we(game, d + h)?;
                piece = piece_from(game, &probe)?;
                if piece.end.is_none_or(|e| e - d >= merge_gap) {
                    break;
                }
                h *= 10.0;
                if h > 1e-2 * (1.0 + d) {
                    return Err(Error::Numerical(format!("cannot step past breakpoint at {d}")));
                }
            }
        }
        let mid = match piece.end {
            Some(e) => 0.5 * (d + e),
            None => d + d.max(1.0),
        };
        let inner = compute_we(game, mid)?;
        let dc = &piece.dir.cost_direction;
        debug!("interval from {d}: end {:?}, slope {}", piece.end, piece.slope);
        intervals.push(CurveInterval {
            index: intervals.len(),
            start: d,
            end: piece.end,
            we_cost_start: snap.we_cost,
            cost_start: snap.cost.clone(),
            slope: piece.slope,
            cost_slope: dc.as_slice().to_vec(),
            active: inner.active,
            used: inner.used,
            direction: piece.dir.representative.as_slice().to_vec(),
        });
        breakpoints.push(snap);
        match piece.end {
            None => break true,
            Some(e) => {
                if d_max.is_some_and(|dm| dm < e) {
                    break false;
                }
                snap = compute_we(game, e)?;
            }
        }
    };
    Ok(PiecewiseAffineCurve { n_paths: n, removed: game.removed(), breakpoints, intervals, complete })
}

/// Quantities describing the final interval `[D_M, ∞)`.
#[derive(Debug, Clone, Serialize)]
pub struct FinalIntervalData {
    /// Slope of the path cost vector on the final interval.
    pub cost_slope: Vec<f64>,
    /// Slope of the equilibrium cost.
    pub slope: f64,
    /// Intercept: the equilibrium cost is `slope * D + beta_bar` for `D >= D_M`.
    pub beta_bar: f64,
    pub active: Vec<usize>,
    /// Last finite breakpoint.
    pub last_breakpoint: f64,
    /// Nonnegative unit direction of increase.
    pub direction: Vec<f64>,
    /// An equilibrium at demand `D_M`.
    pub flow_at_last_breakpoint: Vec<f64>,
}

impl FinalIntervalData {
    pub fn we_cost(&self, demand: f64) -> f64 {
        self.slope * demand + self.beta_bar
    }
}

/// Final-interval data computed directly, without tracing the curve.
pub fn final_interval(game: &RoutingGame) -> Result<FinalIntervalData> {
    let n = game.n_paths();
    let a = &game.model.a;
    let beta = &game.model.beta;
    let opts = game.solver_options();
    let tol = game.tol;
    let retained = game.retained();
    let simplex = game.flow_polytope(1.0);

    // Cost slope from any solution of the VI over the unit simplex.
    let sol = expect_optimal(solve_vi(&simplex, a, &DVector::zeros(n), &opts)?, "unit-simplex VI")?;
    let dc = a * &sol.solution;
    let slope = game.min_cost(&dc);

    // Cheapest direction with that cost slope.
    let mut dir_poly = simplex.clone();
    for p in 0..n {
        let row: Vec<f64> = a.row(p).iter().copied().collect();
        if row.iter().any(|&v| v != 0.0) {
            dir_poly.add_eq(row, dc[p]);
        }
    }
    let lp = expect_optimal(solve_lp(&dir_poly, beta, Sense::Min, &opts)?, "final direction")?;
    let f_delta = lp.solution.map(|v| v.max(0.0));
    let beta_bar = lp.objective;

    // Active set from the auxiliary quadratic program at demand 1.
    let demand = 1.0;
    let level = slope * demand + beta_bar;
    let at_min = |p: usize| dc[p] - slope <= tol.class * (1.0 + slope.abs());
    let mut aux = Polyhedron::free(n);
    aux.add_eq(vec![1.0; n], demand);
    for p in 0..n {
        let row: Vec<f64> = a.row(p).iter().copied().collect();
        if !game.is_retained(p) {
            aux.fix_zero(p);
        } else if f_delta[p] > tol.class {
            aux.add_eq(row, level - beta[p]);
        } else if !at_min(p) {
            aux.fix_zero(p);
        } else {
            aux.set_nonneg(p, true);
            aux.add_ineq(row, level - beta[p]);
        }
    }
    let qp = expect_optimal(solve_qp(&aux, &(a * 2.0), beta, &opts)?, "final active-set")?;
    let cost_star = game.model.cost(&qp.solution);
    let active: Vec<usize> =
        retained.iter().copied().filter(|&p| at_min(p) && tol.close(cost_star[p], level)).collect();

    // Smallest demand at which the final active set is an equilibrium support.
    let mut dm_poly = Polyhedron::nonneg_orthant(n);
    for p in 0..n {
        if !active.contains(&p) {
            dm_poly.fix_zero(p);
        }
    }
    for &p in &active {
        for &r in &retained {
            if r == p {
                continue;
            }
            // C_r(f) - C_p(f) >= 0
            let row: Vec<f64> = (0..n).map(|j| a[(r, j)] - a[(p, j)]).collect();
            let rhs = beta[p] - beta[r];
            if row.iter().all(|&v| v == 0.0) && rhs <= 0.0 {
                continue;
            }
            dm_poly.add_ineq(row, rhs);
        }
    }
    let dm = expect_optimal(solve_lp(&dm_poly, &DVector::from_element(n, 1.0), Sense::Min, &opts)?, "last breakpoint")?;
    let flow = dm.solution.map(|v| v.max(0.0));

    Ok(FinalIntervalData {
        cost_slope: dc.as_slice().to_vec(),
        slope,
        beta_bar,
        active,
        last_breakpoint: flow.sum(),
        direction: f_delta.as_slice().to_vec(),
        flow_at_last_breakpoint: flow.as_slice().to_vec(),
    })
}

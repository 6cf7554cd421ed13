//! Modified games with some paths removed, Braess paradox detectors and the
//! path-value measures `J` and `W`.
//!
//! A game is subject to a Braess paradox (BP) at demand `D` if removing some
//! paths strictly lowers the equilibrium cost at `D`. The detectors here are
//! sufficient conditions: a `NoEvidence` verdict never proves absence.

use log::warn;
use serde::Serialize;

use crate::equilibrium::{compute_we, is_necessary, we_polytope, EquilibriumSnapshot, RoutingGame};
use crate::error::{Error, Result};
use crate::solvers::{solve_lp, Sense, Status};
use crate::sweep::{directions_of_increase, final_interval, trace_curve, PiecewiseAffineCurve};

/// Relative margin for strict cost comparisons: `a > b` needs `a - b > GAP_TOL * (1 + |a|)`.
pub const GAP_TOL: f64 = 1e-6;

/// Relative tolerance for `V == Ṽ`.
pub const V_EQUAL_TOL: f64 = 1e-11;

fn exceeds(a: f64, b: f64) -> bool {
    a - b > GAP_TOL * (1.0 + a.abs())
}

/// A game with a nonempty strict subset of paths removed.
#[derive(Debug, Clone)]
pub struct ModifiedGame<'a> {
    pub game: RoutingGame<'a>,
    pub removed: Vec<usize>,
}

impl<'a> ModifiedGame<'a> {
    pub fn new(base: &RoutingGame<'a>, removed: &[usize]) -> Result<Self> {
        let mut removed = removed.to_vec();
        removed.sort_unstable();
        removed.dedup();
        if removed.is_empty() {
            return Err(Error::InvalidPathSet("removed set is empty".into()));
        }
        let game = base.without(&removed)?;
        let removed = game.removed();
        Ok(Self { game, removed })
    }

    pub fn retained(&self) -> Vec<usize> {
        self.game.retained()
    }
}

/// Equilibrium of the modified game.
pub fn modified_solve(mg: &ModifiedGame, demand: f64) -> Result<EquilibriumSnapshot> {
    compute_we(&mg.game, demand)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VRelation {
    pub v: f64,
    pub v_modified: f64,
    pub equal: bool,
}

/// Beckmann values of the game and the modified game; they agree exactly when the removed set is unnecessary.
pub fn check_v_relations(mg: &ModifiedGame, base: &RoutingGame, demand: f64) -> Result<VRelation> {
    let v = compute_we(base, demand)?.beckmann;
    let vt = compute_we(&mg.game, demand)?.beckmann;
    if v > vt + 1e-9 * (1.0 + v.abs()) {
        warn!("Beckmann value of the full game exceeds the modified game's: {v} > {vt}");
    }
    // The gap grows quadratically with the flow the removed paths must carry, so equality
    // needs a much tighter tolerance than flow classification does.
    let equal = (vt - v).abs() <= V_EQUAL_TOL * (1.0 + v.abs());
    Ok(VRelation { v, v_modified: vt, equal })
}

/// The affine function that describes a game's equilibrium cost on one interval, extended to all demands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineExtension {
    pub retained: Vec<usize>,
    pub interval: usize,
    pub slope: f64,
    pub intercept: f64,
    /// Start and end of the interval it was taken from.
    pub start: f64,
    pub end: Option<f64>,
}

impl AffineExtension {
    pub fn eval(&self, demand: f64) -> f64 {
        self.intercept + self.slope * demand
    }

    /// Whether the upper-bound property holds at `demand` (demand not beyond the interval's end).
    pub fn valid_at(&self, demand: f64) -> bool {
        self.end.is_none_or(|e| demand <= e)
    }
}

pub fn affine_extensions(curve: &PiecewiseAffineCurve) -> Vec<AffineExtension> {
    let retained: Vec<usize> = (0..curve.n_paths).filter(|p| !curve.removed.contains(p)).collect();
    curve
        .intervals
        .iter()
        .map(|iv| {
            let (slope, intercept) = iv.affine();
            AffineExtension { retained: retained.clone(), interval: iv.index, slope, intercept, start: iv.start, end: iv.end }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    BpDetected,
    NoEvidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    SlopeIncrease,
    FlowLosing,
    ExtensionGap,
    ExplicitModifiedGame,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BpReport {
    pub verdict: Verdict,
    pub condition: Condition,
    /// Demand range the report applies to; `lo == hi` for a single demand.
    pub demand_lo: f64,
    pub demand_hi: f64,
    /// Removed paths that lower the equilibrium cost, when known.
    pub witness: Option<Vec<usize>>,
    /// Candidate removed set that the condition was evaluated for.
    pub candidate: Option<Vec<usize>>,
    /// Equilibrium cost minus the compared value, when computed.
    pub cost_gap: Option<f64>,
    pub detail: String,
}

impl BpReport {
    fn at(demand: f64, condition: Condition) -> Self {
        Self {
            verdict: Verdict::NoEvidence,
            condition,
            demand_lo: demand,
            demand_hi: demand,
            witness: None,
            candidate: None,
            cost_gap: None,
            detail: String::new(),
        }
    }

    pub fn detected(&self) -> bool {
        self.verdict == Verdict::BpDetected
    }
}

/// Breakpoints where the slope of the equilibrium cost increases; each flags BP on the preceding interval.
pub fn detect_slope_increase(curve: &PiecewiseAffineCurve) -> Vec<BpReport> {
    let mut out = Vec::new();
    for w in curve.intervals.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        if next.slope - prev.slope > GAP_TOL * (1.0 + next.slope.abs()) {
            let mut r = BpReport::at(next.start, Condition::SlopeIncrease);
            r.verdict = Verdict::BpDetected;
            r.demand_lo = prev.start;
            r.demand_hi = next.start;
            r.detail = format!("slope rises from {:.6} to {:.6} at demand {:.6}", prev.slope, next.slope, next.start);
            out.push(r);
        }
    }
    out
}

/// BP at the snapshot's demand if no direction of increase is a nonnegative flow.
pub fn detect_flow_losing(game: &RoutingGame, snap: &EquilibriumSnapshot) -> Result<BpReport> {
    let mut r = BpReport::at(snap.demand, Condition::FlowLosing);
    let dir = directions_of_increase(game, snap)?;
    let mut poly = dir.solution_set.clone();
    for p in 0..game.n_paths() {
        poly.set_nonneg(p, true);
    }
    let lp = solve_lp(&poly, &nalgebra::DVector::zeros(game.n_paths()), Sense::Min, &game.solver_options())?;
    if lp.status == Status::Infeasible {
        r.verdict = Verdict::BpDetected;
        r.detail = "every direction of increase removes flow from some path".into();
    } else {
        r.detail = "a nonnegative direction of increase exists".into();
    }
    Ok(r)
}

/// Explicit subgame whose equilibrium cost at `demand` is at most the extension of interval
/// `interval` of `game`, built by repeatedly restricting to used sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtensionWitness {
    pub retained: Vec<usize>,
    pub removed: Vec<usize>,
    pub we_cost: f64,
}

pub fn extension_witness(game: &RoutingGame, interval: usize, demand: f64) -> Result<ExtensionWitness> {
    let mut g = game.clone();
    let mut curve = trace_curve(&g, None)?;
    let mut i = interval;
    if i >= curve.intervals.len() {
        return Err(Error::InvalidPathSet(format!("interval {i} does not exist")));
    }
    if curve.intervals[i].end.is_some_and(|e| demand > e) {
        return Err(Error::InvalidDemand(demand));
    }
    let done = |g: &RoutingGame, c: &PiecewiseAffineCurve| ExtensionWitness {
        retained: g.retained(),
        removed: g.removed(),
        we_cost: c.we_cost(demand),
    };
    for _ in 0..=game.n_paths() {
        let iv = &curve.intervals[i];
        if demand >= iv.start {
            return Ok(done(&g, &curve));
        }
        let drop: Vec<usize> = g.retained().into_iter().filter(|p| !iv.used.contains(p)).collect();
        let probe = iv.end.map_or(iv.start + 1.0, |e| 0.5 * (iv.start + e));
        let sub = g.without(&drop)?;
        let sub_curve = trace_curve(&sub, None)?;
        let j = sub_curve.interval_index(probe);
        g = sub;
        curve = sub_curve;
        if demand >= curve.intervals[j].start {
            return Ok(done(&g, &curve));
        }
        if j == 0 {
            return Err(Error::Numerical("used-set recursion reached demand 0 without covering the target".into()));
        }
        i = j - 1;
    }
    Err(Error::Numerical("used-set recursion did not terminate".into()))
}

/// Compares the equilibrium cost at `demand` with every valid affine extension of each candidate
/// modified game. The unmodified game itself is always checked first.
pub fn extension_gap(
    game: &RoutingGame,
    curve: &PiecewiseAffineCurve,
    candidates: &[Vec<usize>],
    demand: f64,
) -> Vec<BpReport> {
    let lambda = curve.we_cost(demand);
    let mut sets: Vec<Vec<usize>> = vec![Vec::new()];
    sets.extend(candidates.iter().cloned());
    sets.iter()
        .map(|removed| {
            let mut r = BpReport::at(demand, Condition::ExtensionGap);
            r.candidate = Some(removed.clone());
            match extension_check(game, curve, removed, demand, lambda) {
                Ok(Some((ext, witness))) => {
                    let u = ext.eval(demand);
                    r.cost_gap = Some(lambda - u);
                    if exceeds(lambda, u) {
                        r.verdict = Verdict::BpDetected;
                        r.detail = format!(
                            "extension of interval {} ({:.6} + {:.6}·D) is {u:.6} < {lambda:.6}",
                            ext.interval, ext.intercept, ext.slope
                        );
                        if let Some(w) = witness {
                            r.witness = Some(w.removed);
                        }
                    } else {
                        r.detail = format!("smallest valid extension {u:.6} is not below {lambda:.6}");
                    }
                }
                Ok(None) => r.detail = "no valid extension".into(),
                Err(e) => r.detail = format!("candidate skipped: {e}"),
            }
            r
        })
        .collect()
}

fn extension_check(
    game: &RoutingGame,
    curve: &PiecewiseAffineCurve,
    removed: &[usize],
    demand: f64,
    lambda: f64,
) -> Result<Option<(AffineExtension, Option<ExtensionWitness>)>> {
    let (sub, sub_curve) = if removed.is_empty() {
        (game.clone(), curve.clone())
    } else {
        let sub = game.without(removed)?;
        let c = trace_curve(&sub, None)?;
        (sub, c)
    };
    let best = affine_extensions(&sub_curve)
        .into_iter()
        .filter(|e| e.valid_at(demand))
        .min_by(|a, b| a.eval(demand).total_cmp(&b.eval(demand)));
    let Some(ext) = best else { return Ok(None) };
    let mut witness = None;
    if exceeds(lambda, ext.eval(demand)) {
        let w = extension_witness(&sub, ext.interval, demand)?;
        if exceeds(lambda, w.we_cost) {
            witness = Some(w);
        } else {
            warn!("extension witness at demand {demand} did not lower the cost ({} vs {lambda})", w.we_cost);
        }
    }
    Ok(Some((ext, witness)))
}

/// Default candidate removed sets: user-supplied, all singletons, and complements of each interval's used set.
pub fn default_candidates(game: &RoutingGame, curve: &PiecewiseAffineCurve, user: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let retained = game.retained();
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut push = |mut s: Vec<usize>| {
        s.sort_unstable();
        s.dedup();
        if !s.is_empty() && s.len() < retained.len() && !out.contains(&s) {
            out.push(s);
        }
    };
    for s in user {
        push(s.clone());
    }
    if retained.len() > 1 {
        for &p in &retained {
            push(vec![p]);
        }
    }
    for iv in &curve.intervals {
        push(retained.iter().copied().filter(|p| !iv.used.contains(p)).collect());
    }
    out
}

/// `λ̃ - λ` over demand, exactly piecewise affine on the merged breakpoints of both curves.
#[derive(Debug, Clone, Serialize)]
pub struct CostGap {
    /// Segment start points; the last segment is unbounded unless the curves were truncated.
    pub starts: Vec<f64>,
    /// Value of `λ̃ - λ` at each start.
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Where the gap is known: the smaller coverage of the two curves.
    pub horizon: Option<f64>,
}

impl CostGap {
    pub fn new(base: &PiecewiseAffineCurve, modified: &PiecewiseAffineCurve) -> Self {
        let mut pts: Vec<f64> = base.breakpoint_demands();
        pts.extend(modified.breakpoint_demands());
        let horizon = [base, modified]
            .iter()
            .filter(|c| !c.complete)
            .filter_map(|c| c.intervals.last().and_then(|iv| iv.end))
            .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.min(e))));
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        if let Some(h) = horizon {
            pts.retain(|&p| p < h);
        }
        let mut values = Vec::new();
        let mut slopes = Vec::new();
        for (k, &p) in pts.iter().enumerate() {
            values.push(modified.we_cost(p) - base.we_cost(p));
            // Slopes are read inside the segment: merged starts may sit just left of a breakpoint.
            let probe = pts.get(k + 1).or(horizon.as_ref()).map_or(p + 1.0, |&e| 0.5 * (p + e));
            slopes.push(modified.interval_at(probe).slope - base.interval_at(probe).slope);
        }
        Self { starts: pts, values, slopes, horizon }
    }

    fn segment_end(&self, k: usize) -> Option<f64> {
        self.starts.get(k + 1).copied().or(self.horizon)
    }

    pub fn eval(&self, demand: f64) -> f64 {
        let k = self.starts.iter().rposition(|&s| s <= demand).unwrap_or(0);
        self.values[k] + (demand - self.starts[k]) * self.slopes[k]
    }

    /// `∫_0^D (λ̃ - λ)`.
    pub fn integral(&self, demand: f64) -> f64 {
        self.integrate(demand, |a, b, ga, gb| 0.5 * (b - a) * (ga + gb))
    }

    /// `∫_0^D z (λ̃(z) - λ(z)) dz`.
    pub fn weighted_integral(&self, demand: f64) -> f64 {
        // z·g(z) is quadratic on each segment, so Simpson's rule is exact.
        self.integrate(demand, |a, b, ga, gb| {
            let m = 0.5 * (a + b);
            let gm = 0.5 * (ga + gb);
            (b - a) / 6.0 * (a * ga + 4.0 * m * gm + b * gb)
        })
    }

    fn integrate(&self, demand: f64, rule: impl Fn(f64, f64, f64, f64) -> f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.starts.len() {
            let a = self.starts[k];
            if a >= demand {
                break;
            }
            let b = self.segment_end(k).map_or(demand, |e| e.min(demand));
            let ga = self.values[k];
            let gb = ga + (b - a) * self.slopes[k];
            total += rule(a, b, ga, gb);
        }
        total
    }

    /// Maximal open intervals on which `λ̃ - λ` is below `-tol` (BP windows) or above `tol` (benefit windows),
    /// depending on `sign` (`-1` or `+1`).
    pub fn windows(&self, sign: f64) -> Vec<(f64, Option<f64>)> {
        let mut out: Vec<(f64, Option<f64>)> = Vec::new();
        for k in 0..self.starts.len() {
            let a = self.starts[k];
            let end = self.segment_end(k);
            let g0 = sign * self.values[k];
            let s = sign * self.slopes[k];
            let tol = |x: f64| GAP_TOL * (1.0 + x.abs());
            // Part of [a, end) where sign·g > 0, provided it rises above the tolerance somewhere.
            let (lo, hi) = if s.abs() <= 1e-14 {
                if g0 > tol(g0) { (a, end) } else { continue }
            } else {
                let root = a - g0 / s;
                if s > 0.0 {
                    (root.max(a), end)
                } else {
                    (a, Some(end.map_or(root, |e| e.min(root))))
                }
            };
            if hi.is_some_and(|h| h <= lo) {
                continue;
            }
            let peak = match (s > 0.0, hi) {
                (true, Some(h)) => g0 + (h - a) * s,
                (true, None) => f64::INFINITY,
                _ => g0 + (lo - a) * s,
            };
            if peak <= tol(peak.min(1e300)) {
                continue;
            }
            match out.last_mut() {
                Some((_, Some(prev_hi))) if (*prev_hi - lo).abs() <= 1e-12 * (1.0 + lo.abs()) => *prev_hi = hi.unwrap_or(f64::INFINITY),
                _ => out.push((lo, hi)),
            }
        }
        for w in &mut out {
            if w.1 == Some(f64::INFINITY) {
                w.1 = None;
            }
        }
        out
    }
}

/// Both curves, traced at least up to `demand`.
fn curves_for(base: &RoutingGame, mg: &ModifiedGame, demand: f64) -> Result<(PiecewiseAffineCurve, PiecewiseAffineCurve)> {
    if !(demand.is_finite() && demand >= 0.0) {
        return Err(Error::InvalidDemand(demand));
    }
    Ok((trace_curve(base, Some(demand))?, trace_curve(&mg.game, Some(demand))?))
}

/// `J(D) = ∫_0^D (λ̃ - λ)`, which is never negative.
pub fn measure_j(base: &RoutingGame, mg: &ModifiedGame, demand: f64) -> Result<f64> {
    let (c, ct) = curves_for(base, mg, demand)?;
    Ok(CostGap::new(&c, &ct).integral(demand))
}

/// `W(D) = ∫_0^D z (λ̃(z) - λ(z)) dz`, which is never positive.
pub fn measure_w(base: &RoutingGame, mg: &ModifiedGame, demand: f64) -> Result<f64> {
    let (c, ct) = curves_for(base, mg, demand)?;
    Ok(CostGap::new(&c, &ct).weighted_integral(demand))
}

/// A demand beyond which removing the set never lowers the equilibrium cost, from the final affine forms.
pub fn bp_demand_bound(base: &RoutingGame, mg: &ModifiedGame) -> Result<f64> {
    let f = final_interval(base)?;
    let ft = final_interval(&mg.game)?;
    let m = f.last_breakpoint.max(ft.last_breakpoint);
    let ds = ft.slope - f.slope;
    let db = ft.beta_bar - f.beta_bar;
    let tol = base.tol.class;
    if ds.abs() <= tol * (1.0 + f.slope.abs()) {
        if db < -tol * (1.0 + f.beta_bar.abs()) {
            warn!("modified game is cheaper on the whole final interval");
            return Ok(f64::INFINITY);
        }
        return Ok(m);
    }
    if ds < 0.0 {
        warn!("modified game has a smaller final slope");
        return Ok(f64::INFINITY);
    }
    Ok(m.max(-db / ds))
}

/// How an unnecessary removed set behaves relative to the full game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanClass {
    /// Removing the set changes nothing on `[0, D]`.
    UnnecessaryThroughout,
    /// The set lowers the cost at some smaller demand and causes BP at another.
    BeneficialThenBp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanEntry {
    pub removed: Vec<usize>,
    pub class: ScanClass,
    /// Maximal demand interval around `D` on which the set stays unnecessary.
    pub unnecessary_from: f64,
    pub unnecessary_to: Option<f64>,
    /// Open intervals in `[0, D]` where removing the set lowers the cost.
    pub bp_windows: Vec<(f64, Option<f64>)>,
    /// Open intervals in `[0, D]` where removing the set raises the cost.
    pub benefit_windows: Vec<(f64, Option<f64>)>,
    /// First demand above `D` from which the set is necessary again, if any.
    pub necessary_again_from: Option<f64>,
}

fn clip_windows(ws: Vec<(f64, Option<f64>)>, demand: f64) -> Vec<(f64, Option<f64>)> {
    ws.into_iter()
        .filter(|&(lo, _)| lo < demand)
        .map(|(lo, hi)| (lo, Some(hi.map_or(demand, |h| h.min(demand)))))
        .collect()
}

/// Enumerates removed sets of size up to `max_size` that are unnecessary at `demand` and classifies them.
pub fn scan_unnecessary(game: &RoutingGame, demand: f64, max_size: usize) -> Result<Vec<ScanEntry>> {
    let retained = game.retained();
    let n = retained.len();
    let k = max_size.min(n.saturating_sub(1));
    let mut needed: usize = 0;
    let mut binom: usize = 1;
    for s in 1..=k {
        binom = binom.saturating_mul(n + 1 - s) / s;
        needed = needed.saturating_add(binom);
    }
    if needed > game.caps.subsets {
        return Err(Error::SubsetCapExceeded { needed, cap: game.caps.subsets });
    }
    let snap = compute_we(game, demand)?;
    let wep = we_polytope(game, &snap);
    let curve = trace_curve(game, None)?;
    let mut out = Vec::new();
    for size in 1..=k {
        for combo in combinations(n, size) {
            let removed: Vec<usize> = combo.iter().map(|&c| retained[c]).collect();
            if demand > 0.0 && is_necessary(game, &wep, &removed)? {
                continue;
            }
            let sub = game.without(&removed)?;
            let sub_curve = trace_curve(&sub, None)?;
            let gap = CostGap::new(&curve, &sub_curve);
            let bp_windows = clip_windows(gap.windows(-1.0), demand);
            let benefit_windows = clip_windows(gap.windows(1.0), demand);
            let (from, to) = zero_window(&gap, demand);
            let class =
                if bp_windows.is_empty() && benefit_windows.is_empty() { ScanClass::UnnecessaryThroughout } else { ScanClass::BeneficialThenBp };
            out.push(ScanEntry {
                removed,
                class,
                unnecessary_from: from,
                unnecessary_to: to,
                bp_windows,
                benefit_windows,
                necessary_again_from: to,
            });
        }
    }
    Ok(out)
}

/// Maximal interval around `demand` on which the gap vanishes.
fn zero_window(gap: &CostGap, demand: f64) -> (f64, Option<f64>) {
    let zero_at = |x: f64| gap.eval(x).abs() <= GAP_TOL * (1.0 + x.abs());
    let k = gap.starts.iter().rposition(|&s| s <= demand).unwrap_or(0);
    let flat = |j: usize| {
        let a = gap.starts[j];
        let ok_a = zero_at(a);
        match gap.segment_end(j) {
            Some(b) => ok_a && zero_at(b),
            None => ok_a && gap.slopes[j].abs() <= 1e-12,
        }
    };
    let at_start = (gap.starts[k] - demand).abs() <= 1e-12 * (1.0 + demand.abs());
    let mut lo = demand;
    for j in (0..=k).rev() {
        if flat(j) {
            lo = gap.starts[j];
        } else if !(j == k && at_start) {
            break;
        }
    }
    let mut hi = gap.horizon;
    for j in k..gap.starts.len() {
        if !flat(j) {
            hi = Some(gap.starts[j].max(demand));
            break;
        }
    }
    (lo, hi)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

//! Random instances and invariant checks shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wardrop::braess::{check_v_relations, ModifiedGame, GAP_TOL};
use wardrop::equilibrium::{compute_we, is_necessary, we_polytope};
use wardrop::solvers::{solve_lp, Sense, Status};
use wardrop::{build_cost_model, enumerate_paths, trace_curve, Edge, Network, Path, PathCostModel, RoutingGame};

pub fn network_path(name: &str) -> String {
    format!("{}/networks/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

pub fn bundled(name: &str) -> PathCostModel {
    let file = wardrop::parse_network(std::path::Path::new(&network_path(name))).unwrap();
    file.cost_model(10_000).unwrap()
}

pub fn find(model: &PathCostModel, edges: &[usize]) -> usize {
    wardrop::graph::find_path(&model.paths, edges).unwrap()
}

/// Random network with at most 5 vertices and 8 edges that has an origin-destination path.
pub fn random_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(n - 1..=8);
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            // Mostly forward edges, so that there are several paths.
            let (tail, head) = if rng.gen_bool(0.85) {
                let t = rng.gen_range(0..n - 1);
                (t, rng.gen_range(t + 1..n))
            } else {
                let t = rng.gen_range(0..n);
                let h = rng.gen_range(0..n - 1);
                (t, if h >= t { h + 1 } else { h })
            };
            let alpha = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.1..3.0) };
            let beta = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..3.0) };
            edges.push(Edge { tail, head, alpha, beta });
        }
        let net = Network { vertices: n, edges, origin: 0, destination: n - 1 };
        if enumerate_paths(&net, 10_000).is_ok() {
            return net;
        }
    }
}

pub fn model_with_order(net: &Network, perm: Option<&[usize]>) -> PathCostModel {
    let mut paths = enumerate_paths(net, 10_000).unwrap();
    if let Some(perm) = perm {
        paths = perm.iter().map(|&p| paths[p].clone()).collect::<Vec<Path>>();
    }
    build_cost_model(net, &paths).unwrap()
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.contains(x))
}

/// Every invariant checked on one random network. Returns a description of the first violation.
pub fn check_network(seed: u64) -> Result<(), String> {
    let net = random_network(seed);
    let model = model_with_order(&net, None);
    let game = RoutingGame::new(&model);
    let n = model.n_paths();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let curve = trace_curve(&game, None).map_err(|e| format!("trace: {e}"))?;
    let bps = curve.breakpoint_demands();
    let span = 1.5 * bps.last().copied().unwrap_or(0.0) + 2.0;

    // Wardrop condition and agreement with the traced curve.
    let demands: Vec<f64> = (0..50).map(|k| span * k as f64 / 49.0).collect();
    let mut prev = f64::NEG_INFINITY;
    for &d in &demands {
        let s = compute_we(&game, d).map_err(|e| format!("we at {d}: {e}"))?;
        let tol = 1e-7 * (1.0 + s.we_cost.abs());
        let total: f64 = s.flow.iter().sum();
        check((total - d).abs() <= 1e-8 * (1.0 + d), || format!("flow sums to {total} at {d}"))?;
        for p in 0..n {
            check(s.flow[p] >= -1e-9, || format!("negative flow at {d}"))?;
            check(s.cost[p] >= s.we_cost - tol, || format!("path {p} cheaper than equilibrium at {d}"))?;
            if s.flow[p] > 1e-7 * (1.0 + d) {
                check(s.cost[p] <= s.we_cost + tol, || format!("used path {p} costs {} > {} at {d}", s.cost[p], s.we_cost))?;
            }
        }
        check(s.we_cost >= prev - 1e-9 * (1.0 + prev.abs()), || format!("equilibrium cost decreases at {d}"))?;
        prev = s.we_cost;
        let traced = curve.we_cost(d);
        check((traced - s.we_cost).abs() <= 1e-6 * (1.0 + traced.abs()), || format!("curve {traced} vs solve {} at {d}", s.we_cost))?;
    }

    // The cost vector does not depend on how the solver reaches an equilibrium.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let pmodel = model_with_order(&net, Some(&perm));
    let pgame = RoutingGame::new(&pmodel);
    for _ in 0..3 {
        let d = rng.gen_range(0.0..span);
        let a = compute_we(&game, d).map_err(|e| e.to_string())?;
        let b = compute_we(&pgame, d).map_err(|e| e.to_string())?;
        for (k, &p) in perm.iter().enumerate() {
            check((a.cost[p] - b.cost[k]).abs() <= 1e-8 * (1.0 + a.cost[p].abs()), || {
                format!("cost of path {p} differs between path orders at {d}: {} vs {}", a.cost[p], b.cost[k])
            })?;
        }
        // Another equilibrium: a vertex of the equilibrium polytope picked by a random objective.
        let wep = we_polytope(&game, &a);
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let lp = solve_lp(&wep.poly, &c, Sense::Max, &game.solver_options()).map_err(|e| e.to_string())?;
        check(lp.status == Status::Optimal, || format!("equilibrium polytope LP {:?} at {d}", lp.status))?;
        let cost = model.cost(&lp.solution);
        for p in 0..n {
            check((cost[p] - a.cost[p]).abs() <= 1e-8 * (1.0 + a.cost[p].abs()), || {
                format!("another equilibrium changes the cost of path {p} at {d}: {} vs {}", cost[p], a.cost[p])
            })?;
        }
    }

    // The derivative of the Beckmann potential is the equilibrium cost.
    let h = 1e-4;
    for &d in &demands[1..] {
        if bps.iter().any(|&b| (b - d).abs() < 3.0 * h) {
            continue;
        }
        let vp = compute_we(&game, d + h).map_err(|e| e.to_string())?.beckmann;
        let vm = compute_we(&game, d - h).map_err(|e| e.to_string())?.beckmann;
        let fd = (vp - vm) / (2.0 * h);
        let l = curve.we_cost(d);
        check((fd - l).abs() <= 1e-4 * (1.0 + l.abs()), || format!("V' = {fd} but cost is {l} at {d}"))?;
    }

    // Breakpoints change the cost slope, and the interval sets sit between the endpoint sets.
    for w in curve.intervals.windows(2) {
        let diff = w[0].cost_slope.iter().zip(&w[1].cost_slope).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        check(diff > 1e-9, || format!("cost slope unchanged at breakpoint {}", w[1].start))?;
    }
    for (i, iv) in curve.intervals.iter().enumerate() {
        let mut ends = vec![&curve.breakpoints[i]];
        if let Some(next) = curve.breakpoints.get(i + 1) {
            ends.push(next);
        }
        for s in ends {
            check(
                subset(&s.used, &iv.used) && subset(&iv.used, &iv.active) && subset(&iv.active, &s.active),
                || {
                    format!(
                        "inclusions fail on interval {i} at {}: U {:?} Ju {:?} Ja {:?} A {:?}",
                        s.demand, s.used, iv.used, iv.active, s.active
                    )
                },
            )?;
        }
    }

    // Removing paths: V never drops, stays equal exactly for unnecessary sets, and BP has a beneficial past.
    if n >= 2 {
        for _ in 0..5 {
            let k = rng.gen_range(1..n);
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            let removed = all[..k].to_vec();
            let mg = ModifiedGame::new(&game, &removed).map_err(|e| e.to_string())?;
            let d = rng.gen_range(0.0..span);
            let rel = check_v_relations(&mg, &game, d).map_err(|e| e.to_string())?;
            check(rel.v <= rel.v_modified + 1e-9 * (1.0 + rel.v.abs()), || format!("V {} > modified {} at {d}", rel.v, rel.v_modified))?;
            let snap = compute_we(&game, d).map_err(|e| e.to_string())?;
            let necessary = is_necessary(&game, &we_polytope(&game, &snap), &removed).map_err(|e| e.to_string())?;
            if d > 0.0 {
                check(rel.equal != necessary, || {
                    format!("V equality {} but necessity {necessary} for {removed:?} at {d} (V {} vs {})", rel.equal, rel.v, rel.v_modified)
                })?;
            }

            let mcurve = trace_curve(&mg.game, None).map_err(|e| e.to_string())?;
            for j in 1..=20 {
                let d = span * j as f64 / 20.0;
                let (l, lt) = (curve.we_cost(d), mcurve.we_cost(d));
                if l - lt > GAP_TOL * (1.0 + l.abs()) {
                    let beneficial = (0..200).any(|g| {
                        let z = d * g as f64 / 199.0;
                        mcurve.we_cost(z) - curve.we_cost(z) > 1e-9 * (1.0 + z)
                    });
                    check(beneficial, || format!("BP at {d} for {removed:?} without a beneficial lower demand"))?;
                }
            }
        }
    }
    Ok(())
}

/// Random game with three paths built from an arbitrary incidence matrix.
pub fn random_three_path(seed: u64) -> (PathCostModel, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = rng.gen_range(2..=6);
    let mut inc = DMatrix::zeros(q, 3);
    for p in 0..3 {
        for e in 0..q {
            if rng.gen_bool(0.5) {
                inc[(e, p)] = 1.0;
            }
        }
        if (0..q).all(|e| inc[(e, p)] == 0.0) {
            inc[(rng.gen_range(0..q), p)] = 1.0;
        }
    }
    let slopes = DVector::from_fn(q, |_, _| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.1..3.0) });
    let offsets = DVector::from_fn(q, |_, _| rng.gen_range(0.0..3.0));
    let paths = (0..3).map(|p| Path { edges: (0..q).filter(|&e| inc[(e, p)] != 0.0).collect() }).collect();
    let model = PathCostModel::from_incidence(paths, inc, slopes, &offsets).unwrap();
    (model, rng.gen_range(0.1..5.0))
}

/// Euclidean projection onto `{f >= 0, sum f = d}`.
fn project_simplex(y: &DVector<f64>, d: f64) -> DVector<f64> {
    let mut u: Vec<f64> = y.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut sum = 0.0;
    let mut theta = 0.0;
    for (j, &v) in u.iter().enumerate() {
        sum += v;
        let t = (sum - d) / (j + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    y.map(|v| (v - theta).max(0.0))
}

/// Equilibrium cost vector by projected gradient descent on the Beckmann potential.
pub fn projected_gradient_costs(model: &PathCostModel, d: f64) -> DVector<f64> {
    let n = model.n_paths();
    let lmax = model.a.clone().symmetric_eigen().eigenvalues.max().max(1e-6);
    let step = 1.0 / lmax;
    let mut f = DVector::from_element(n, d / n as f64);
    for _ in 0..200_000 {
        let g = model.cost(&f);
        let next = project_simplex(&(&f - step * g), d);
        let moved = (&next - &f).norm();
        f = next;
        if moved < 1e-15 * (1.0 + d) {
            break;
        }
    }
    model.cost(&f)
}

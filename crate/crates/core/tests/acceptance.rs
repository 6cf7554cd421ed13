//! Acceptance criteria, one pass/fail line each. Runs as a plain binary so the lines are always shown.

mod common;

use common::*;
use nalgebra::DVector;
use wardrop::braess::{
    affine_extensions, check_v_relations, detect_flow_losing, detect_slope_increase, extension_gap, measure_j, measure_w,
    scan_unnecessary, ModifiedGame,
};
use wardrop::equilibrium::{compute_we, we_polytope};
use wardrop::solvers::{solve_lp, Sense, Status};
use wardrop::sweep::directions_of_increase;
use wardrop::{final_interval, trace_curve, RoutingGame};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Wheatstone equilibrium flows against the closed form.
fn criterion_1() -> Outcome {
    let m = bundled("wheatstone");
    let g = RoutingGame::new(&m);
    for d in [0.5, 1.0, 1.5, 2.0, 3.0] {
        let want = if d <= 1.0 {
            [0.0, 0.0, d]
        } else if d <= 2.0 {
            [d - 1.0, d - 1.0, 2.0 - d]
        } else {
            [d / 2.0, d / 2.0, 0.0]
        };
        let s = compute_we(&g, d).map_err(|e| e.to_string())?;
        for p in 0..3 {
            ensure(near(s.flow[p], want[p], 1e-6), || format!("D={d}: flow {:?} vs {want:?}", s.flow))?;
        }
    }
    Ok("flows at D in {0.5, 1, 1.5, 2, 3} match within 1e-6".into())
}

/// Wheatstone curve: breakpoints, pieces and the interval active/used sets.
fn criterion_2() -> Outcome {
    let m = bundled("wheatstone");
    let c = trace_curve(&RoutingGame::new(&m), None).map_err(|e| e.to_string())?;
    let bps = c.breakpoint_demands();
    ensure(bps.len() == 3 && c.complete, || format!("breakpoints {bps:?}"))?;
    for (b, want) in bps.iter().zip([0.0, 1.0, 2.0]) {
        ensure(near(*b, want, 1e-6), || format!("breakpoints {bps:?}"))?;
    }
    let pieces = [(2.0, 0.0), (0.0, 2.0), (0.5, 1.0)];
    let sets = [(vec![2], vec![2]), (vec![0, 1, 2], vec![0, 1, 2]), (vec![0, 1], vec![0, 1])];
    for (i, iv) in c.intervals.iter().enumerate() {
        let (s, b) = iv.affine();
        ensure(near(s, pieces[i].0, 1e-6) && near(b, pieces[i].1, 1e-6), || format!("piece {i}: {s}·D + {b}"))?;
        ensure(sorted(iv.active.clone()) == sets[i].0 && sorted(iv.used.clone()) == sets[i].1, || {
            format!("interval {i}: active {:?} used {:?}", iv.active, iv.used)
        })?;
    }
    Ok("breakpoints {0, 1, 2}, pieces 2D / 2 / D/2+1, six interval sets exact".into())
}

/// Merged network: breakpoints, the equilibrium polytope at 1.5 and the cost direction at 1.
fn criterion_3() -> Outcome {
    let m = bundled("merged");
    let g = RoutingGame::new(&m);
    let c = trace_curve(&g, None).map_err(|e| e.to_string())?;
    let bps = c.breakpoint_demands();
    ensure(bps.len() == 2 && near(bps[0], 0.0, 1e-6) && near(bps[1], 1.0, 1e-6), || format!("breakpoints {bps:?}"))?;

    // The polytope {f1 + f3 = 1, f2 + f3 = 1} in F_1.5 is the segment between these two vertices.
    let vertices = [[0.5, 0.5, 0.5, 0.0], [0.0, 0.0, 1.0, 0.5]];
    let snap = compute_we(&g, 1.5).map_err(|e| e.to_string())?;
    let wep = we_polytope(&g, &snap);
    let mut hit = [false; 2];
    let objectives = [[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, -0.3, 0.2, 0.7], [-0.4, 0.9, 0.1, -1.0], [0.3, 0.3, -0.6, 0.2]];
    for obj in objectives {
        let r = solve_lp(&wep.poly, &DVector::from_row_slice(&obj), Sense::Max, &g.solver_options()).map_err(|e| e.to_string())?;
        ensure(r.status == Status::Optimal, || format!("polytope LP {:?}", r.status))?;
        let k = vertices
            .iter()
            .position(|v| (0..4).all(|p| near(r.solution[p], v[p], 1e-6)))
            .ok_or_else(|| format!("LP optimum {:?} is not a vertex of the expected segment", r.solution.as_slice()))?;
        hit[k] = true;
    }
    ensure(hit == [true, true], || "not every expected vertex was reached".into())?;

    let at1 = compute_we(&g, 1.0).map_err(|e| e.to_string())?;
    let dir = directions_of_increase(&g, &at1).map_err(|e| e.to_string())?;
    ensure(dir.cost_direction.amax() <= 1e-6, || format!("cost direction {:?}", dir.cost_direction.as_slice()))?;
    let f = &dir.representative;
    ensure(
        near(f[0], f[1], 1e-6) && near(f[0], -f[2], 1e-6) && f[0] >= -1e-9 && f[3] >= -1e-9 && near(f.sum(), 1.0, 1e-9),
        || format!("direction {:?} outside f1 = f2 = -f3, f1, f2, f4 >= 0", f.as_slice()),
    )?;
    Ok("breakpoints {0, 1}; polytope at 1.5 has vertices (.5,.5,.5,0), (0,0,1,.5); cost direction at 1 is 0".into())
}

/// Final interval of the Wheatstone network; parallel network breakpoints and slopes.
fn criterion_4() -> Outcome {
    let m = bundled("wheatstone");
    let f = final_interval(&RoutingGame::new(&m)).map_err(|e| e.to_string())?;
    ensure(near(f.slope, 0.5, 1e-6) && near(f.beta_bar, 1.0, 1e-6) && near(f.last_breakpoint, 2.0, 1e-6), || {
        format!("slope {} intercept {} last breakpoint {}", f.slope, f.beta_bar, f.last_breakpoint)
    })?;
    ensure(sorted(f.active.clone()) == vec![0, 1], || format!("final active set {:?}", f.active))?;

    let m = bundled("parallel");
    let c = trace_curve(&RoutingGame::new(&m), None).map_err(|e| e.to_string())?;
    let bps = c.breakpoint_demands();
    ensure(bps.len() == 4, || format!("parallel breakpoints {bps:?}"))?;
    for (b, want) in bps.iter().zip([0.0, 1.0, 2.0, 2.2]) {
        ensure(near(*b, want, 1e-6), || format!("parallel breakpoints {bps:?}"))?;
    }
    for i in [1, 3] {
        let amax = c.intervals[i].cost_slope.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        ensure(amax <= 1e-6, || format!("cost slope on interval {i} is {:?}", c.intervals[i].cost_slope))?;
    }
    Ok("Wheatstone slope 0.5, intercept 1, active {p1,p2}, last breakpoint 2; parallel breakpoints {0,1,2,2.2}, zero cost slopes on intervals 1 and 3".into())
}

/// Seven-edge network: breakpoints, the equilibrium at 6, and the unnecessary-set scan.
fn criterion_5() -> Outcome {
    let m = bundled("seven_edge");
    let g = RoutingGame::new(&m);
    let c = trace_curve(&g, None).map_err(|e| e.to_string())?;
    let bps = c.breakpoint_demands();
    let want = [0.0, 0.5, 3.5, 35.0 / 9.0, 6.0];
    ensure(bps.len() == want.len() && bps.iter().zip(want).all(|(b, w)| near(*b, w, 1e-6)), || format!("breakpoints {bps:?}"))?;
    let s = compute_we(&g, 6.0).map_err(|e| e.to_string())?;
    let closed = [87.0 / 29.0, 58.0 / 29.0, 0.0, 1.0];
    ensure((0..4).all(|p| near(s.flow[p], closed[p], 1e-6)), || format!("flow at 6: {:?}", s.flow))?;

    let p3 = find(&m, &[0, 4, 3]);
    for d in [3.5, 3.6, 3.7, 3.8, 35.0 / 9.0] {
        let scan = scan_unnecessary(&g, d, 1).map_err(|e| e.to_string())?;
        let entry = scan.iter().find(|e| e.removed == vec![p3]).ok_or_else(|| format!("{{p3}} not unnecessary at {d}"))?;
        ensure(entry.necessary_again_from.is_some_and(|x| near(x, 6.0, 1e-6)), || {
            format!("necessary again from {:?} at {d}", entry.necessary_again_from)
        })?;
    }
    for d in [6.5, 8.0, 12.0] {
        let scan = scan_unnecessary(&g, d, 1).map_err(|e| e.to_string())?;
        ensure(!scan.iter().any(|e| e.removed == vec![p3]), || format!("{{p3}} reported unnecessary at {d}"))?;
    }
    Ok("breakpoints {0, .5, 3.5, 35/9, 6}; flow at 6 is (3,2,0,1); {p3} unnecessary on [3.5, 35/9], necessary again from 6".into())
}

/// Braess paradox detectors on the Wheatstone and merged networks.
fn criterion_6() -> Outcome {
    let m = bundled("wheatstone");
    let g = RoutingGame::new(&m);
    let c = trace_curve(&g, None).map_err(|e| e.to_string())?;

    // (a)
    let s = detect_slope_increase(&c);
    ensure(s.len() == 1 && near(s[0].demand_hi, 2.0, 1e-6), || format!("slope reports {s:?}"))?;

    // (b)
    for (d, want) in [(1.1, true), (1.5, true), (1.9, true), (0.5, false), (0.8, false), (2.5, false)] {
        let r = detect_flow_losing(&g, &compute_we(&g, d).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(r.detected() == want, || format!("flow-losing at {d}: {:?}", r.verdict))?;
    }

    // (c) The final extension of the game itself is D/2 + 1.
    let last = affine_extensions(&c).pop().unwrap();
    ensure(near(last.slope, 0.5, 1e-6) && near(last.intercept, 1.0, 1e-6), || format!("final extension {last:?}"))?;
    for k in 0..=60 {
        let d = 3.0 * k as f64 / 60.0;
        let r = &extension_gap(&g, &c, &[], d)[0];
        let inside = d > 2.0 / 3.0 + 1e-9 && d < 2.0 - 1e-9;
        ensure(r.detected() == inside, || format!("extension gap at {d}: {:?}", r.verdict))?;
        if inside {
            let gap = r.cost_gap.unwrap();
            let lambda = c.we_cost(d);
            ensure(near(gap, lambda - last.eval(d), 1e-6), || format!("gap {gap} at {d}"))?;
            // λ = 2 on [1, 2) gives the gap |2 - (D/2 + 1)|; below 1, λ = 2D gives 1.5D - 1.
            let want = if d >= 1.0 { (2.0 - (d / 2.0 + 1.0)).abs() } else { 1.5 * d - 1.0 };
            ensure(near(gap, want, 1e-6), || format!("gap {gap} at {d}, expected {want}"))?;
        }
    }

    // (d)
    let m = bundled("merged");
    let g = RoutingGame::new(&m);
    let c = trace_curve(&g, None).map_err(|e| e.to_string())?;
    let p4 = find(&m, &[2, 1]);
    for k in 0..=60 {
        let d = 3.0 * k as f64 / 60.0;
        let r = &extension_gap(&g, &c, &[vec![p4]], d)[1];
        let inside = d > 2.0 / 3.0 + 1e-9 && d < 2.0 - 1e-9;
        ensure(r.detected() == inside, || format!("merged extension gap for {{p4}} at {d}: {:?} {}", r.verdict, r.detail))?;
        let fl = detect_flow_losing(&g, &compute_we(&g, d).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(!fl.detected(), || format!("flow-losing fires on the merged network at {d}"))?;
    }
    Ok("slope increase only at 2; flow-losing on {1.1,1.5,1.9} only; extension gap exactly on (2/3,2) for both networks".into())
}

/// J and W for removing p3 from the Wheatstone network.
fn criterion_7() -> Outcome {
    let m = bundled("wheatstone");
    let g = RoutingGame::new(&m);
    let mg = ModifiedGame::new(&g, &[find(&m, &[0, 4, 3])]).map_err(|e| e.to_string())?;
    let j2 = measure_j(&g, &mg, 2.0).map_err(|e| e.to_string())?;
    let j1 = measure_j(&g, &mg, 1.0).map_err(|e| e.to_string())?;
    let w2 = measure_w(&g, &mg, 2.0).map_err(|e| e.to_string())?;
    ensure(near(j2, 0.0, 1e-8) && near(j1, 0.25, 1e-8) && near(w2, -1.0 / 3.0, 1e-8), || format!("J(2) {j2} J(1) {j1} W(2) {w2}"))?;
    for (d, j) in [(1.0, j1), (2.0, j2)] {
        let v = check_v_relations(&mg, &g, d).map_err(|e| e.to_string())?;
        ensure(near(v.v_modified - v.v, j, 1e-8), || format!("J({d}) = {j} but V gap is {}", v.v_modified - v.v))?;
    }
    Ok(format!("J(2) = {j2:.1e}, J(1) = {j1}, W(2) = {w2}, J equals the V gap"))
}

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    for seed in 0..1000u64 {
        if let Err(msg) = check_network(seed) {
            failures.push(format!("seed {seed}: {msg}"));
        }
    }
    ensure(failures.is_empty(), || format!("{} of 1000 networks fail; first: {}", failures.len(), failures[0]))?;
    Ok("1000 random networks satisfy every invariant".into())
}

fn criterion_9() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let (model, d) = random_three_path(seed);
        let s = compute_we(&RoutingGame::new(&model), d).map_err(|e| e.to_string())?;
        let oracle = projected_gradient_costs(&model, d);
        for p in 0..3 {
            worst = worst.max((s.cost[p] - oracle[p]).abs());
        }
    }
    ensure(worst <= 1e-5, || format!("worst cost difference {worst:e}"))?;
    Ok(format!("100 three-path games agree with projected gradient, worst difference {worst:.1e}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("Wheatstone equilibrium pieces", criterion_1),
        ("Wheatstone curve", criterion_2),
        ("merged network", criterion_3),
        ("final interval", criterion_4),
        ("seven-edge network", criterion_5),
        ("BP detection", criterion_6),
        ("measures", criterion_7),
        ("property suites", criterion_8),
        ("oracle equivalence", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {} PASS ({name}, {secs:.2}s): {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} FAIL ({name}, {secs:.2}s): {msg}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

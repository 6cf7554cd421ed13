//! Two-phase dense tableau simplex with Bland's rule.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use super::{Polyhedron, Sense, SolveReport, SolverOptions, Status};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Eq(usize),
    Ineq(usize),
}

/// `min cᵀz` subject to `a z = b`, `z >= 0`, `b >= 0`.
struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    ncols: usize,
    pos: Vec<Option<usize>>,
    neg: Vec<Option<usize>>,
    origin: Vec<RowOrigin>,
    /// Factor that maps the original row to the standard row.
    mult: Vec<f64>,
}

impl StandardForm {
    fn build(poly: &Polyhedron, c: &[f64], sense: Sense, feas_tol: f64) -> Option<Self> {
        let dim = poly.dim();
        let mut ncols = 0;
        let mut pos = vec![None; dim];
        let mut neg = vec![None; dim];
        for j in 0..dim {
            if poly.fixed_zero[j] {
                continue;
            }
            pos[j] = Some(ncols);
            ncols += 1;
            if !poly.nonneg[j] {
                neg[j] = Some(ncols);
                ncols += 1;
            }
        }
        let n_slack = poly.ineq_rows.len();
        let total = ncols + n_slack;
        let map_row = |row: &[f64]| {
            let mut out = vec![0.0; total];
            for j in 0..dim {
                if let Some(k) = pos[j] {
                    out[k] = row[j];
                }
                if let Some(k) = neg[j] {
                    out[k] = -row[j];
                }
            }
            out
        };

        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut origin = Vec::new();
        let mut mult = Vec::new();
        let mut push = |mut row: Vec<f64>, mut rhs: f64, o: RowOrigin| -> bool {
            let scale = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                // 0 = rhs
                return rhs.abs() <= feas_tol;
            }
            let mut m = 1.0 / scale;
            if rhs < 0.0 {
                m = -m;
            }
            row.iter_mut().for_each(|v| *v *= m);
            rhs *= m;
            a.push(row);
            b.push(rhs);
            origin.push(o);
            mult.push(m);
            true
        };
        for (i, (row, &rhs)) in poly.eq_rows.iter().zip(&poly.eq_rhs).enumerate() {
            if !push(map_row(row), rhs, RowOrigin::Eq(i)) {
                return None;
            }
        }
        for (i, (row, &rhs)) in poly.ineq_rows.iter().zip(&poly.ineq_rhs).enumerate() {
            let mut r = map_row(row);
            r[ncols + i] = -1.0;
            push(r, rhs, RowOrigin::Ineq(i));
        }

        let sign = if sense == Sense::Max { -1.0 } else { 1.0 };
        let mut cs = vec![0.0; total];
        for j in 0..dim {
            if let Some(k) = pos[j] {
                cs[k] = sign * c[j];
            }
            if let Some(k) = neg[j] {
                cs[k] = -sign * c[j];
            }
        }
        Some(Self { a, b, c: cs, ncols: total, pos, neg, origin, mult })
    }

    fn recover(&self, z: &[f64], dim: usize) -> DVector<f64> {
        DVector::from_fn(dim, |j, _| {
            self.pos[j].map_or(0.0, |k| z[k]) - self.neg[j].map_or(0.0, |k| z[k])
        })
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// Standard-form row each tableau row came from.
    row_ids: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let p = self.rows[r][q];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        let eliminate = |row: &mut Vec<f64>| {
            let f = row[q];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
                row[q] = 0.0;
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.obj);
        self.basis[r] = q;
    }

    /// Runs simplex iterations; returns `false` if the objective is unbounded below.
    fn run(&mut self, enter_limit: usize, cost_scale: f64, iters: &mut usize, max_iter: usize) -> Result<bool> {
        let rhs = self.rhs();
        loop {
            let Some(q) = (0..enter_limit).find(|&j| self.obj[j] < -COST_TOL * cost_scale) else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[q];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = (row[rhs] / a).max(0.0);
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                        if (!tie && ratio < br) || (tie && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, _)) = best else {
                return Ok(false);
            };
            self.pivot(r, q);
            *iters += 1;
            if *iters > max_iter {
                return Err(Error::MaxIterations(max_iter));
            }
        }
    }
}

/// Solves `min/max cᵀx` over `poly` and returns an optimal basic solution.
pub fn solve_lp(poly: &Polyhedron, c: &DVector<f64>, sense: Sense, opts: &SolverOptions) -> Result<SolveReport> {
    poly.check()?;
    let dim = poly.dim();
    if c.len() != dim {
        return Err(Error::DimensionMismatch(format!("objective has length {}, polyhedron dimension {}", c.len(), dim)));
    }
    let Some(sf) = StandardForm::build(poly, c.as_slice(), sense, opts.feas_tol) else {
        return Ok(SolveReport::empty(Status::Infeasible, dim, 0));
    };
    let m = sf.a.len();
    let n = sf.ncols;
    let width = n + m + 1;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; width];
        row[..n].copy_from_slice(&sf.a[i]);
        row[n + i] = 1.0;
        row[width - 1] = sf.b[i];
        rows.push(row);
    }
    let mut obj = vec![0.0; width];
    for row in &rows {
        for j in 0..n {
            obj[j] -= row[j];
        }
        obj[width - 1] -= row[width - 1];
    }
    let mut t = Tableau { rows, obj, basis: (n..n + m).collect(), row_ids: (0..m).collect(), width };
    let mut iters = 0;

    // Phase 1.
    t.run(n + m, 1.0, &mut iters, opts.max_iterations)?;
    let bmax = sf.b.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let infeas = -t.obj[width - 1];
    if infeas > opts.feas_tol * (1.0 + bmax) {
        debug!("lp infeasible: phase-1 residual {infeas:e}");
        return Ok(SolveReport::empty(Status::Infeasible, dim, iters));
    }

    // Drive artificial variables out of the basis, dropping redundant rows.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            let q = (0..n).max_by(|&x, &y| t.rows[r][x].abs().total_cmp(&t.rows[r][y].abs()));
            match q {
                Some(q) if t.rows[r][q].abs() > PIVOT_TOL => t.pivot(r, q),
                _ => {
                    t.rows.remove(r);
                    t.basis.remove(r);
                    t.row_ids.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }

    // Phase 2.
    let cmax = sf.c.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(&sf.c);
    for (row, &bv) in t.rows.iter().zip(&t.basis) {
        let cb = sf.c[bv];
        if cb != 0.0 {
            obj.iter_mut().zip(row).for_each(|(o, v)| *o -= cb * v);
        }
    }
    for v in &mut obj[n..width - 1] {
        *v = 0.0;
    }
    t.obj = obj;
    let bounded = t.run(n, 1.0 + cmax, &mut iters, opts.max_iterations)?;

    let mut z = vec![0.0; n];
    for (row, &bv) in t.rows.iter().zip(&t.basis) {
        z[bv] = row[width - 1];
    }
    let (refined, y) = refine(&sf, &t.basis, &t.row_ids, &z);
    let z = refined.unwrap_or(z).into_iter().map(|v| v.max(0.0)).collect::<Vec<_>>();
    let x = sf.recover(&z, dim);

    let status = if bounded { Status::Optimal } else { Status::Unbounded };
    let mut report = SolveReport::empty(status, dim, iters);
    report.objective = if bounded { c.dot(&x) } else { if sense == Sense::Max { f64::INFINITY } else { f64::NEG_INFINITY } };
    report.solution = x;
    if bounded {
        let mut eq = vec![0.0; poly.eq_rows.len()];
        let mut ineq = vec![0.0; poly.ineq_rows.len()];
        let sign = if sense == Sense::Max { -1.0 } else { 1.0 };
        if let Some(y) = y {
            for (k, &rid) in t.row_ids.iter().enumerate() {
                let u = sign * y[k] * sf.mult[rid];
                match sf.origin[rid] {
                    RowOrigin::Eq(i) => eq[i] = u,
                    RowOrigin::Ineq(i) => ineq[i] = u,
                }
            }
        }
        report.eq_duals = eq;
        report.ineq_duals = ineq;
    }
    let viol = poly.violation(&report.solution);
    if viol > 1e3 * opts.feas_tol * (1.0 + bmax) {
        warn!("lp solution violates constraints by {viol:e}");
    }
    report.mark_active(poly, opts.feas_tol);
    Ok(report)
}

/// Re-solves the basic system on the original data. Returns refined basic values and row duals.
fn refine(sf: &StandardForm, basis: &[usize], row_ids: &[usize], z: &[f64]) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let m = basis.len();
    if m == 0 {
        return (None, Some(Vec::new()));
    }
    let bmat = DMatrix::from_fn(m, m, |i, k| sf.a[row_ids[i]][basis[k]]);
    let rhs = DVector::from_fn(m, |i, _| sf.b[row_ids[i]]);
    let cb = DVector::from_fn(m, |k, _| sf.c[basis[k]]);
    let lu = bmat.clone().lu();
    let xb = lu.solve(&rhs).filter(|v| v.iter().all(|x| x.is_finite()));
    let y = bmat.transpose().lu().solve(&cb).filter(|v| v.iter().all(|x| x.is_finite()));
    let refined = xb.and_then(|xb| {
        let close = basis.iter().enumerate().all(|(k, &bv)| (xb[k] - z[bv]).abs() <= 1e-6 * (1.0 + z[bv].abs()));
        let sane = xb.iter().all(|&v| v >= -1e-9);
        (close && sane).then(|| {
            let mut out = z.to_vec();
            for (k, &bv) in basis.iter().enumerate() {
                out[bv] = xb[k];
            }
            out
        })
    });
    (refined, y.map(|v| v.as_slice().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    fn dual_objective(poly: &Polyhedron, r: &SolveReport) -> f64 {
        r.eq_duals.iter().zip(&poly.eq_rhs).map(|(u, b)| u * b).sum::<f64>()
            + r.ineq_duals.iter().zip(&poly.ineq_rhs).map(|(u, h)| u * h).sum::<f64>()
    }

    #[test]
    fn single_bound() {
        let mut p = Polyhedron::free(1);
        p.add_ineq(vec![1.0], 3.0);
        let r = solve_lp(&p, &DVector::from_vec(vec![1.0]), Sense::Min, &opts()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.solution[0] - 3.0).abs() < 1e-12);
        assert_eq!(r.active, vec![0]);
        assert!((dual_objective(&p, &r) - 3.0).abs() < 1e-12);
        let u = solve_lp(&p, &DVector::from_vec(vec![1.0]), Sense::Max, &opts()).unwrap();
        assert_eq!(u.status, Status::Unbounded);
    }

    #[test]
    fn infeasible_and_empty_rows() {
        let mut p = Polyhedron::nonneg_orthant(2);
        p.add_eq(vec![1.0, 1.0], -1.0);
        let r = solve_lp(&p, &DVector::zeros(2), Sense::Min, &opts()).unwrap();
        assert_eq!(r.status, Status::Infeasible);
        let mut q = Polyhedron::nonneg_orthant(2);
        q.fix_zero(0).fix_zero(1);
        q.add_eq(vec![1.0, 1.0], 1.0);
        assert_eq!(solve_lp(&q, &DVector::zeros(2), Sense::Min, &opts()).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn redundant_equalities() {
        // x + y = 1 twice, 2x + 2y = 2, maximise x - y with free y bounded by y >= -1.
        let mut p = Polyhedron::free(2);
        p.set_nonneg(0, true);
        p.add_eq(vec![1.0, 1.0], 1.0).add_eq(vec![1.0, 1.0], 1.0).add_eq(vec![2.0, 2.0], 2.0);
        p.add_ineq(vec![0.0, 1.0], -1.0);
        let c = DVector::from_vec(vec![1.0, -1.0]);
        let r = solve_lp(&p, &c, Sense::Max, &opts()).unwrap();
        assert!((r.objective - 3.0).abs() < 1e-12);
        assert!((r.solution[0] - 2.0).abs() < 1e-12 && (r.solution[1] + 1.0).abs() < 1e-12);
        assert!((dual_objective(&p, &r) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, which cycles under the textbook largest-coefficient rule.
        let mut p = Polyhedron::nonneg_orthant(4);
        p.add_ineq(vec![-0.25, 60.0, 1.0 / 25.0, -9.0], 0.0);
        p.add_ineq(vec![-0.5, 90.0, 1.0 / 50.0, -3.0], 0.0);
        p.add_ineq(vec![0.0, 0.0, -1.0, 0.0], -1.0);
        let c = DVector::from_vec(vec![-0.75, 150.0, -1.0 / 50.0, 6.0]);
        let r = solve_lp(&p, &c, Sense::Min, &opts()).unwrap();
        assert!((r.objective + 0.05).abs() < 1e-10);
        assert!((dual_objective(&p, &r) - r.objective).abs() < 1e-9);
    }
}

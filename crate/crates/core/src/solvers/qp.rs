//! Primal active-set method for convex quadratic programs.

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::{check_psd, lp::solve_lp, Polyhedron, Sense, SolveReport, SolverOptions, Status};
use crate::error::{Error, Result};

/// Gradient component along zero-curvature directions below which it is treated as rounding noise.
const FLAT_NOISE: f64 = 1e-6;

/// Inequality `a · x >= h` in the reduced variables.
struct Row {
    a: DVector<f64>,
    h: f64,
}

/// Orthonormal basis of the span of the given rows, skipping dependent ones.
fn orthonormalize<'a>(rows: impl Iterator<Item = &'a DVector<f64>>, dim: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for r in rows {
        if let Some(v) = residual(&basis, r) {
            if basis.len() < dim {
                basis.push(v);
            }
        }
    }
    basis
}

fn residual(basis: &[DVector<f64>], r: &DVector<f64>) -> Option<DVector<f64>> {
    residual_rel(basis, r, 1e-9)
}

/// Component of `r` orthogonal to `basis`, normalised, if its relative size exceeds `tol`.
fn residual_rel(basis: &[DVector<f64>], r: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let norm = r.norm();
    if norm == 0.0 {
        return None;
    }
    let mut v = r.clone();
    for _ in 0..2 {
        for q in basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
    }
    let rn = v.norm();
    (rn > tol * norm).then(|| v / rn)
}

/// Orthonormal basis of the orthogonal complement of `basis` in `R^dim`, as columns.
fn null_space(basis: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut all = basis.to_vec();
    let mut cols = Vec::new();
    for j in 0..dim {
        if all.len() >= dim {
            break;
        }
        let e = DVector::from_fn(dim, |i, _| if i == j { 1.0 } else { 0.0 });
        if let Some(v) = residual_rel(&all, &e, 1e-6) {
            all.push(v.clone());
            cols.push(v);
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimises `½ xᵀ H x + cᵀ x` over `poly`. `H` must be symmetric positive semidefinite.
pub fn solve_qp(poly: &Polyhedron, h: &DMatrix<f64>, c: &DVector<f64>, opts: &SolverOptions) -> Result<SolveReport> {
    poly.check()?;
    let dim = poly.dim();
    if h.shape() != (dim, dim) || c.len() != dim {
        return Err(Error::DimensionMismatch(format!("QP data does not match dimension {dim}")));
    }
    check_psd(h, 1e-9)?;

    let seed = solve_lp(poly, &DVector::zeros(dim), Sense::Min, opts)?;
    if seed.status == Status::Infeasible {
        return Ok(SolveReport::empty(Status::Infeasible, dim, seed.iterations));
    }

    // Work in the variables that are not fixed at zero.
    let kept = poly.kept();
    let k = kept.len();
    let hs = (h + h.transpose()) * 0.5;
    let hr = DMatrix::from_fn(k, k, |i, j| hs[(kept[i], kept[j])]);
    let cr = DVector::from_fn(k, |i, _| c[kept[i]]);
    let reduce = |row: &[f64]| DVector::from_fn(k, |i, _| row[kept[i]]);
    let eqs: Vec<DVector<f64>> = poly.eq_rows.iter().map(|r| reduce(r)).collect();
    let mut rows: Vec<Row> = poly.ineq_rows.iter().zip(&poly.ineq_rhs).map(|(r, &h)| Row { a: reduce(r), h }).collect();
    let n_ineq = rows.len();
    // Bound rows follow the polyhedron's own inequalities.
    let mut bound_var = Vec::new();
    for (i, &j) in kept.iter().enumerate() {
        if poly.nonneg[j] {
            rows.push(Row { a: DVector::from_fn(k, |r, _| if r == i { 1.0 } else { 0.0 }), h: 0.0 });
            bound_var.push(j);
        }
    }

    let mut x = DVector::from_fn(k, |i, _| seed.solution[kept[i]]);
    let slack = |row: &Row, x: &DVector<f64>| row.a.dot(x) - row.h;
    let active_tol = |row: &Row| opts.feas_tol * (1.0 + row.h.abs());

    let eq_basis = orthonormalize(eqs.iter(), k);
    let mut working: Vec<usize> = Vec::new();
    {
        let mut basis = eq_basis.clone();
        for (i, row) in rows.iter().enumerate() {
            if slack(row, &x) <= active_tol(row) {
                if let Some(v) = residual(&basis, &row.a) {
                    if basis.len() < k {
                        basis.push(v);
                        working.push(i);
                    }
                }
            }
        }
    }

    let mut iters = 0;
    let status = loop {
        iters += 1;
        if iters > opts.max_iterations {
            return Err(Error::MaxIterations(opts.max_iterations));
        }
        let g = &hr * &x + &cr;
        let mut basis = eq_basis.clone();
        for &i in &working {
            if let Some(v) = residual(&basis, &rows[i].a) {
                basis.push(v);
            }
        }
        let z = null_space(&basis, k);
        let gnorm = g.amax();

        // Largest feasible step along `p` up to `cap`, and the constraint that blocks it.
        let ratio = |p: &DVector<f64>, cap: f64| {
            let pscale = p.norm();
            let mut alpha = cap;
            let mut block = None;
            for (i, row) in rows.iter().enumerate() {
                if working.contains(&i) {
                    continue;
                }
                let ap = row.a.dot(p);
                if ap >= -1e-12 * row.a.norm() * pscale {
                    continue;
                }
                let t = slack(row, &x).max(0.0) / -ap;
                if t < alpha - 1e-14 * (1.0 + alpha.min(1e300)) {
                    alpha = t;
                    block = Some(i);
                }
            }
            (alpha, block)
        };

        let mut step: Option<(DVector<f64>, f64, Option<usize>)> = None;
        if z.ncols() > 0 {
            let red = z.transpose() * &hr * &z;
            let r = z.transpose() * &g;
            let eig = ((&red + red.transpose()) * 0.5).symmetric_eigen();
            let scale = eig.eigenvalues.amax().max(1.0);
            let mut flat = DVector::zeros(z.ncols());
            let mut newton = DVector::zeros(z.ncols());
            for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
                let v = eig.eigenvectors.column(idx);
                let t = v.dot(&r);
                if lam <= 1e-10 * scale {
                    flat.axpy(t, &v, 1.0);
                } else {
                    newton.axpy(-t / lam, &v, 1.0);
                }
            }
            let fnorm = flat.norm();
            if fnorm > 1e-10 * (1.0 + gnorm) {
                let p = -(&z * flat);
                let (alpha, block) = ratio(&p, f64::INFINITY);
                if alpha.is_finite() {
                    step = Some((p, alpha, block));
                } else if fnorm > FLAT_NOISE * (1.0 + gnorm) {
                    debug!("qp unbounded along a zero-curvature ray");
                    break Status::Unbounded;
                }
                // Otherwise the flat component is rounding noise: a near-null eigenvector w of
                // the reduced Hessian only has |H w| ~ sqrt(eps), so wᵀg is not exactly zero.
            }
            if step.is_none() {
                let p = &z * newton;
                if p.amax() > 1e-12 * (1.0 + x.amax()) {
                    let (alpha, block) = ratio(&p, 1.0);
                    step = Some((p, alpha, block));
                }
            }
        }

        match step {
            None => {
                // Stationary on the working set: check multiplier signs.
                let mut cols: Vec<DVector<f64>> = eqs.clone();
                cols.extend(working.iter().map(|&i| rows[i].a.clone()));
                let mu = multipliers(&cols, &g);
                let mult_tol = opts.kkt_tol * (1.0 + gnorm);
                let neg = working
                    .iter()
                    .enumerate()
                    .filter(|&(w, _)| mu[eqs.len() + w] < -mult_tol)
                    .min_by_key(|&(_, &i)| i)
                    .map(|(w, _)| w);
                match neg {
                    Some(w) => {
                        working.remove(w);
                    }
                    None => break Status::Optimal,
                }
            }
            Some((p, alpha, block)) => {
                x.axpy(alpha, &p, 1.0);
                if let Some(i) = block {
                    working.push(i);
                }
            }
        }
    };

    let mut full = DVector::zeros(dim);
    for (i, &j) in kept.iter().enumerate() {
        full[j] = x[i];
    }
    for &j in &bound_var {
        if full[j] < 0.0 && full[j] > -opts.feas_tol {
            full[j] = 0.0;
        }
    }
    let mut report = SolveReport::empty(status, dim, iters + seed.iterations);
    if status == Status::Optimal {
        report.objective = 0.5 * full.dot(&(&hs * &full)) + c.dot(&full);
        let g = &hr * &x + &cr;
        let mut cols: Vec<DVector<f64>> = eqs.clone();
        cols.extend(working.iter().map(|&i| rows[i].a.clone()));
        let mu = multipliers(&cols, &g);
        report.eq_duals = mu.iter().take(eqs.len()).copied().collect();
        let mut ineq = vec![0.0; n_ineq];
        for (w, &i) in working.iter().enumerate() {
            if i < n_ineq {
                ineq[i] = mu[eqs.len() + w];
            }
        }
        report.ineq_duals = ineq;
    }
    report.solution = full;
    report.mark_active(poly, opts.feas_tol);
    Ok(report)
}

/// Least-squares multipliers `mu` with `Σ mu_i cols_i ≈ g`.
fn multipliers(cols: &[DVector<f64>], g: &DVector<f64>) -> Vec<f64> {
    if cols.is_empty() {
        return Vec::new();
    }
    let svd = DMatrix::from_columns(cols).svd(true, true);
    svd.solve(g, 1e-12).map_or_else(|_| vec![0.0; cols.len()], |mu| mu.as_slice().to_vec())
}

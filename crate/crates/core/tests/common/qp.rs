//! Brute-force optimal load control for quadratic costs, formulated in
//! `(d, theta)` and solved by enumerating active bound sets. It shares no
//! code with the library's solver.

use nalgebra::{DMatrix, DVector};
use olc::netmodel::Grid;

pub struct QpSolution {
    pub d: DVector<f64>,
    pub theta: DVector<f64>,
    pub objective: f64,
}

/// `b[i]` is the response slope of bus `i`'s cost `d^2 / (2 b)`.
pub fn brute_force(grid: &Grid, b: &[f64], gauge: f64) -> Option<QpSolution> {
    let n = grid.n();
    let bct = DMatrix::from_diagonal(&grid.susceptance) * grid.incidence.transpose();
    let flows = match &grid.flow_map {
        Some(t) => t * &bct,
        None => bct,
    };
    let lap = &grid.incidence * DMatrix::from_diagonal(&grid.susceptance) * grid.incidence.transpose();

    // Equalities on x = (d, theta).
    let mut eq: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..n {
        let mut row = DVector::zeros(2 * n);
        row[i] = 1.0;
        for j in 0..n {
            row[n + j] = lap[(i, j)];
        }
        eq.push((row, grid.injection[i]));
    }
    let mut gauge_row = DVector::zeros(2 * n);
    gauge_row.rows_mut(n, n).fill(1.0);
    eq.push((gauge_row, gauge));
    if grid.area_constraints {
        let cbar_f = &grid.boundary * &flows;
        for k in 0..grid.k() {
            let mut row = DVector::zeros(2 * n);
            for j in 0..n {
                row[n + j] = cbar_f[(k, j)];
            }
            eq.push((row, grid.export[k]));
        }
    }
    let limited: Vec<usize> = (0..grid.mc())
        .filter(|&e| grid.upper[e].is_finite() || grid.lower[e].is_finite())
        .collect();
    let flow_row = |e: usize| {
        let mut row = DVector::zeros(2 * n);
        for j in 0..n {
            row[n + j] = flows[(e, j)];
        }
        row
    };

    let mut best: Option<QpSolution> = None;
    // Each limited line is inactive, at its upper bound or at its lower bound.
    let combos = 3usize.pow(limited.len() as u32);
    for code in 0..combos {
        let mut rows = eq.clone();
        let mut c = code;
        let mut ok = true;
        for &e in &limited {
            match c % 3 {
                1 if grid.upper[e].is_finite() => rows.push((flow_row(e), grid.upper[e])),
                2 if grid.lower[e].is_finite() => rows.push((flow_row(e), grid.lower[e])),
                0 => {}
                _ => ok = false,
            }
            c /= 3;
        }
        if !ok {
            continue;
        }
        let r = rows.len();
        let dim = 2 * n + r;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for i in 0..n {
            kkt[(i, i)] = 1.0 / b[i];
        }
        for (a, (row, h)) in rows.iter().enumerate() {
            for j in 0..2 * n {
                kkt[(2 * n + a, j)] = row[j];
                kkt[(j, 2 * n + a)] = row[j];
            }
            rhs[2 * n + a] = *h;
        }
        let svd = kkt.clone().svd(true, true);
        let Ok(mut sol) = svd.solve(&rhs, 1e-10) else {
            continue;
        };
        // Iterative refinement; the system is badly scaled on large cases.
        for _ in 0..3 {
            let Ok(fix) = svd.solve(&(&rhs - &kkt * &sol), 1e-10) else { break };
            sol += fix;
        }
        let x = sol.rows(0, 2 * n).into_owned();
        // Consistency of the (possibly redundant) equalities.
        if rows.iter().any(|(row, h)| (row.dot(&x) - h).abs() > 1e-8) {
            continue;
        }
        let theta = x.rows(n, n).into_owned();
        let f = &flows * &theta;
        let feasible =
            (0..grid.mc()).all(|e| f[e] <= grid.upper[e] + 1e-9 && f[e] >= grid.lower[e] - 1e-9);
        if !feasible {
            continue;
        }
        let d = x.rows(0, n).into_owned();
        let objective = (0..n).map(|i| d[i] * d[i] / (2.0 * b[i])).sum();
        if best.as_ref().is_none_or(|s| objective < s.objective - 1e-12) {
            best = Some(QpSolution { d, theta, objective });
        }
    }
    best
}

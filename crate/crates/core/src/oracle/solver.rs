//! Active-set Newton method on the KKT system of the optimal load control
//! problem. It never touches the closed-loop dynamics, so equilibria of the
//! controllers can be certified against it.

use nalgebra::{DMatrix, DVector};

use super::{kkt_residuals, OptimalSolution};
use crate::costs::CostModel;
use crate::error::{Error, Result};
use crate::netmodel::Grid;
use crate::tolerances::ORACLE_KKT;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Value of `1^T phi*`; defaults to `1^T phi(0)`.
    pub gauge: Option<f64>,
    pub max_active_changes: usize,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gauge: None,
            max_active_changes: 500,
            max_newton: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    Area(usize),
    Upper(usize),
    Lower(usize),
}

struct Problem<'a> {
    grid: &'a Grid,
    costs: &'a [CostModel],
    /// Virtual-flow operator on the constrained lines, `mc x n`.
    flow: DMatrix<f64>,
    area: DMatrix<f64>,
    gauge: f64,
}

impl Problem<'_> {
    fn row(&self, r: Row) -> (DVector<f64>, f64) {
        match r {
            Row::Area(k) => (self.area.row(k).transpose(), self.grid.export[k]),
            Row::Upper(e) => (self.flow.row(e).transpose(), self.grid.upper[e]),
            Row::Lower(e) => (-self.flow.row(e).transpose(), -self.grid.lower[e]),
        }
    }

    /// Keeps a linearly independent subset of `rows`, in order. Dependent
    /// rows must agree with the kept ones, otherwise the constraints are
    /// inconsistent.
    fn independent(&self, rows: &[Row]) -> Result<Vec<Row>> {
        let n = self.grid.n();
        let mut kept: Vec<Row> = Vec::new();
        let mut g = DMatrix::<f64>::zeros(0, n);
        let mut h = DVector::<f64>::zeros(0);
        for &r in rows {
            let (gr, hr) = self.row(r);
            let norm = gr.norm();
            if norm == 0.0 {
                if hr.abs() > 1e-9 {
                    return Err(Error::Infeasible(format!("constraint {r:?} reads 0 = {hr}")));
                }
                continue;
            }
            let (residual, coef) = if kept.is_empty() {
                (gr.clone(), DVector::zeros(0))
            } else {
                let gram = &g * g.transpose();
                let coef = gram
                    .cholesky()
                    .ok_or_else(|| Error::Singular("active constraint Gram matrix".into()))?
                    .solve(&(&g * &gr));
                (&gr - g.tr_mul(&coef), coef)
            };
            if residual.norm() <= 1e-9 * norm {
                let implied = coef.dot(&h);
                if (implied - hr).abs() > 1e-8 * (1.0 + hr.abs()) {
                    return Err(Error::Infeasible(format!(
                        "constraint {r:?} contradicts the others ({implied} vs {hr})"
                    )));
                }
                continue;
            }
            kept.push(r);
            let last = g.nrows();
            g = std::mem::take(&mut g).insert_row(last, 0.0);
            g.row_mut(last).copy_from(&gr.transpose());
            h = std::mem::take(&mut h).push(hr);
        }
        Ok(kept)
    }

    fn residual(&self, g: &DMatrix<f64>, h: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let grid = self.grid;
        let n = grid.n();
        let r = g.nrows();
        let lambda = u.rows(0, n).into_owned();
        let phi = u.rows(n, n).into_owned();
        let mu = u.rows(2 * n, r).into_owned();
        let mut out = DVector::zeros(2 * n + r);
        let mut r1 = grid.laplacian_mul(&lambda) - g.tr_mul(&mu);
        // The rows of r1 sum to zero identically; the last one is replaced
        // by the gauge condition.
        r1[n - 1] = phi.sum() - self.gauge;
        out.rows_mut(0, n).copy_from(&r1);
        let d = DVector::from_fn(n, |i, _| self.costs[i].load_response(lambda[i]));
        out.rows_mut(n, n)
            .copy_from(&(&grid.injection - d - grid.laplacian_mul(&phi)));
        out.rows_mut(2 * n, r).copy_from(&(g * &phi - h));
        out
    }

    fn jacobian(&self, g: &DMatrix<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let grid = self.grid;
        let n = grid.n();
        let r = g.nrows();
        let l = &grid.laplacian;
        let mut j = DMatrix::zeros(2 * n + r, 2 * n + r);
        j.view_mut((0, 0), (n, n)).copy_from(l);
        j.view_mut((0, 2 * n), (n, r)).copy_from(&(-g.transpose()));
        for c in 0..j.ncols() {
            j[(n - 1, c)] = 0.0;
        }
        for i in 0..n {
            j[(n - 1, n + i)] = 1.0;
            j[(n + i, i)] = -self.costs[i].response_slope(u[i]);
        }
        j.view_mut((n, n), (n, n)).copy_from(&(-l));
        j.view_mut((2 * n, n), (r, n)).copy_from(g);
        j
    }

    /// Damped Newton on the equality-constrained subproblem.
    fn newton(&self, rows: &[Row], u0: DVector<f64>, max_iter: usize) -> Result<DVector<f64>> {
        let n = self.grid.n();
        let mut g = DMatrix::zeros(rows.len(), n);
        let mut h = DVector::zeros(rows.len());
        for (k, &r) in rows.iter().enumerate() {
            let (gr, hr) = self.row(r);
            g.row_mut(k).copy_from(&gr.transpose());
            h[k] = hr;
        }
        let scale = 1.0 + self.grid.injection.amax() + self.grid.laplacian.amax();
        let tol = 1e-14 * scale;
        let mut u = u0;
        let mut res = self.residual(&g, &h, &u);
        for _ in 0..max_iter {
            if res.amax() <= tol {
                return Ok(u);
            }
            let step = self
                .jacobian(&g, &u)
                .lu()
                .solve(&(-&res))
                .ok_or_else(|| Error::Singular("KKT Jacobian".into()))?;
            let base = res.norm();
            let mut t = 1.0;
            loop {
                let trial = &u + &step * t;
                let trial_res = self.residual(&g, &h, &trial);
                if trial_res.norm() <= (1.0 - 1e-4 * t) * base || t < 1e-12 {
                    let stalled = (&trial - &u).amax() <= 1e-15 * (1.0 + u.amax());
                    u = trial;
                    res = trial_res;
                    if stalled {
                        return self.accept(u, &res, scale);
                    }
                    break;
                }
                t *= 0.5;
            }
            if u.rows(0, n).amax() > 1e8 {
                return Err(Error::Infeasible(
                    "load response cannot absorb the imbalance under these constraints".into(),
                ));
            }
        }
        self.accept(u, &res, scale)
    }

    fn accept(&self, u: DVector<f64>, res: &DVector<f64>, scale: f64) -> Result<DVector<f64>> {
        if res.amax() <= 1e-11 * scale {
            Ok(u)
        } else {
            Err(Error::NoConvergence(format!(
                "Newton stalled with KKT residual {:e}",
                res.amax()
            )))
        }
    }
}

/// Primal-dual optimum of the optimal load control problem on `grid`.
pub fn solve_olc(grid: &Grid, costs: &[CostModel], opts: &SolverOptions) -> Result<OptimalSolution> {
    if costs.len() != grid.n() {
        return Err(Error::Dimension {
            expected: grid.n(),
            got: costs.len(),
        });
    }
    let n = grid.n();
    let bct = DMatrix::from_diagonal(&grid.susceptance) * grid.incidence.transpose();
    let flow = match &grid.flow_map {
        Some(a) => a * bct,
        None => bct,
    };
    let area = &grid.boundary * &flow;
    let problem = Problem {
        grid,
        costs,
        flow,
        area,
        gauge: opts.gauge.unwrap_or_else(|| grid.initial_angles.sum()),
    };
    let base_rows: Vec<Row> = (0..grid.active_areas()).map(Row::Area).collect();
    let mut active: Vec<Row> = Vec::new();

    let mut u = DVector::zeros(2 * n);
    u.rows_mut(n, n).copy_from(&grid.initial_angles);
    let mut prev_rows: Vec<Row> = Vec::new();

    for _ in 0..opts.max_active_changes {
        let wanted: Vec<Row> = base_rows.iter().chain(active.iter()).copied().collect();
        let rows = problem.independent(&wanted)?;
        active.retain(|r| rows.contains(r));

        // Warm start: carry multipliers of rows that stay active.
        let mut u0 = DVector::zeros(2 * n + rows.len());
        u0.rows_mut(0, 2 * n).copy_from(&u.rows(0, 2 * n));
        for (k, r) in rows.iter().enumerate() {
            if let Some(p) = prev_rows.iter().position(|q| q == r) {
                u0[2 * n + k] = u[2 * n + p];
            }
        }
        u = problem.newton(&rows, u0, opts.max_newton)?;
        prev_rows = rows.clone();

        // Drop the most negative inequality multiplier, if any.
        let worst_dual = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !matches!(r, Row::Area(_)))
            .map(|(k, r)| (u[2 * n + k], *r))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((mu, r)) = worst_dual {
            if mu < -1e-12 {
                active.retain(|q| *q != r);
                continue;
            }
        }

        // Otherwise add the most violated bound.
        let phi = u.rows(n, n).into_owned();
        let vf = &problem.flow * &phi;
        let mut worst: Option<(f64, Row)> = None;
        for e in 0..grid.mc() {
            for (gap, r) in [
                (vf[e] - grid.upper[e], Row::Upper(e)),
                (grid.lower[e] - vf[e], Row::Lower(e)),
            ] {
                let tol = 1e-10 * (1.0 + grid.upper[e].abs().min(grid.lower[e].abs()));
                if gap.is_finite() && gap > tol && !rows.contains(&r) && worst.is_none_or(|w| gap > w.0) {
                    worst = Some((gap, r));
                }
            }
        }
        match worst {
            Some((_, r)) => active.push(r),
            None => return assemble(grid, costs, &rows, &u),
        }
    }
    Err(Error::NoConvergence(
        "active-set iteration cap reached (constraints may be cycling)".into(),
    ))
}

fn assemble(grid: &Grid, costs: &[CostModel], rows: &[Row], u: &DVector<f64>) -> Result<OptimalSolution> {
    let n = grid.n();
    let lambda = u.rows(0, n).into_owned();
    let phi = u.rows(n, n).into_owned();
    let mut pi = DVector::zeros(grid.k());
    let mut rho_plus = DVector::zeros(grid.mc());
    let mut rho_minus = DVector::zeros(grid.mc());
    for (k, r) in rows.iter().enumerate() {
        let mu = u[2 * n + k];
        match *r {
            Row::Area(a) => pi[a] = mu,
            Row::Upper(e) => rho_plus[e] = mu.max(0.0),
            Row::Lower(e) => rho_minus[e] = mu.max(0.0),
        }
    }
    let d = DVector::from_fn(n, |i, _| costs[i].load_response(lambda[i]));
    let mut objective = 0.0;
    for i in 0..n {
        objective += costs[i].cost(d[i])?;
    }
    let mut sol = OptimalSolution {
        d,
        omega: DVector::zeros(n),
        flows: grid.line_flows(&phi),
        phi,
        lambda,
        nu: DVector::zeros(n),
        pi,
        rho_plus,
        rho_minus,
        objective,
        max_kkt_residual: 0.0,
    };
    let report = kkt_residuals(grid, costs, &sol)?;
    sol.max_kkt_residual = report.max_residual;
    if report.max_residual > ORACLE_KKT {
        return Err(Error::NoConvergence(format!(
            "oracle KKT residual {:e} exceeds {ORACLE_KKT:e}",
            report.max_residual
        )));
    }
    Ok(sol)
}

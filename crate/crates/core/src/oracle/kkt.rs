use nalgebra::DVector;
use serde::Serialize;

use super::OptimalSolution;
use crate::costs::CostModel;
use crate::error::Result;
use crate::netmodel::Grid;

/// Residuals of the optimality conditions at a candidate point. All entries
/// are sup-norms and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct KktReport {
    /// `d = d(lambda + nu)`.
    pub load_stationarity: f64,
    /// `omega = nu = 0`.
    pub frequency_stationarity: f64,
    /// `L lambda = C B A^T (Cbar^T pi + rho+ - rho-)`.
    pub phase_stationarity: f64,
    /// `P_in - d - D omega = C P`.
    pub power_balance: f64,
    /// `P_in - d = L phi`.
    pub virtual_balance: f64,
    /// `Cbar vf = Phat`.
    pub area_export: f64,
    /// Bound violation of the virtual flows.
    pub thermal: f64,
    /// `max(0, -rho)`.
    pub dual_feasibility: f64,
    /// `|rho (bound gap)|`.
    pub complementarity: f64,
    pub max_residual: f64,
}

impl KktReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual < tol
    }
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn kkt_residuals(grid: &Grid, costs: &[CostModel], c: &OptimalSolution) -> Result<KktReport> {
    c.check_shape(grid)?;
    let n = grid.n();
    let load = DVector::from_fn(n, |i, _| c.d[i] - costs[i].load_response(c.lambda[i] + c.nu[i]));
    let frequency = sup(&c.omega).max(sup(&c.nu));

    let mut w = DVector::zeros(grid.mc());
    let vf = grid.virtual_flows(&c.phi);
    let mut thermal = 0.0f64;
    let mut dual = 0.0f64;
    let mut slack = 0.0f64;
    for e in 0..grid.mc() {
        if grid.upper[e].is_finite() {
            w[e] += c.rho_plus[e];
            let gap = vf[e] - grid.upper[e];
            thermal = thermal.max(gap);
            slack = slack.max((c.rho_plus[e] * gap).abs());
        }
        if grid.lower[e].is_finite() {
            w[e] -= c.rho_minus[e];
            let gap = grid.lower[e] - vf[e];
            thermal = thermal.max(gap);
            slack = slack.max((c.rho_minus[e] * gap).abs());
        }
        dual = dual.max(-c.rho_plus[e]).max(-c.rho_minus[e]);
    }
    let area = if grid.area_constraints {
        w += grid.boundary.tr_mul(&c.pi);
        sup(&(&grid.boundary * &vf - &grid.export))
    } else {
        0.0
    };
    let phase = sup(&(grid.laplacian_mul(&c.lambda) - grid.constraint_adjoint(&w)));
    let balance = sup(&(&grid.injection - &c.d - c.omega.component_mul(&grid.damping) - grid.c_mul(&c.flows)));
    let virtual_balance = sup(&(&grid.injection - &c.d - grid.laplacian_mul(&c.phi)));

    let mut r = KktReport {
        load_stationarity: sup(&load),
        frequency_stationarity: frequency,
        phase_stationarity: phase,
        power_balance: balance,
        virtual_balance,
        area_export: area,
        thermal: thermal.max(0.0),
        dual_feasibility: dual.max(0.0),
        complementarity: slack,
        max_residual: 0.0,
    };
    r.max_residual = [
        r.load_stationarity,
        r.frequency_stationarity,
        r.phase_stationarity,
        r.power_balance,
        r.virtual_balance,
        r.area_export,
        r.thermal,
        r.dual_feasibility,
        r.complementarity,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(r)
}

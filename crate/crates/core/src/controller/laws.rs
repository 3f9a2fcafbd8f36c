use nalgebra::DVector;

use super::{project_scalar, ControllerGains, ControllerRates, ControllerState};
use crate::costs::CostModel;
use crate::netmodel::Grid;

/// Controllable loads `d_i(lambda_i + omega_i)`.
pub fn load_setpoints(costs: &[CostModel], lambda: &DVector<f64>, omega: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(lambda.len(), |i, _| costs[i].load_response(lambda[i] + omega[i]))
}

/// Projected rates of the thermal multipliers given the virtual flows.
pub(crate) fn thermal_rates(
    grid: &Grid,
    gains: &ControllerGains,
    vf: &DVector<f64>,
    rho_plus: &DVector<f64>,
    rho_minus: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let mc = grid.mc();
    let mut up = DVector::zeros(mc);
    let mut down = DVector::zeros(mc);
    for e in 0..mc {
        // An infinite bound never binds; its multiplier stays at zero.
        if grid.upper[e].is_finite() {
            up[e] = gains.zeta_rho_plus[e] * project_scalar(vf[e] - grid.upper[e], rho_plus[e]);
        }
        if grid.lower[e].is_finite() {
            down[e] =
                gains.zeta_rho_minus[e] * project_scalar(grid.lower[e] - vf[e], rho_minus[e]);
        }
    }
    (up, down)
}

/// `rho+ - rho-` restricted to the bounds that exist.
pub(crate) fn thermal_weight(
    grid: &Grid,
    rho_plus: &DVector<f64>,
    rho_minus: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_fn(grid.mc(), |e, _| {
        let up = if grid.upper[e].is_finite() { rho_plus[e] } else { 0.0 };
        let down = if grid.lower[e].is_finite() { rho_minus[e] } else { 0.0 };
        up - down
    })
}

/// `phi` rate given the line-side multiplier weight `w` on constrained lines.
pub(crate) fn phase_rate(
    grid: &Grid,
    gains: &ControllerGains,
    lambda: &DVector<f64>,
    w: &DVector<f64>,
) -> DVector<f64> {
    (grid.laplacian_mul(lambda) - grid.constraint_adjoint(w)).component_mul(&gains.chi_phi)
}

/// Base law. `omega` covers every bus; the loads respond to `lambda + omega`.
pub fn olc_rhs(
    grid: &Grid,
    costs: &[CostModel],
    gains: &ControllerGains,
    state: &ControllerState,
    omega: &DVector<f64>,
) -> ControllerRates {
    let d = load_setpoints(costs, &state.lambda, omega);
    let lambda_dot = (&grid.injection - &d - grid.laplacian_mul(&state.phi))
        .component_mul(&gains.zeta_lambda);

    let vf = grid.virtual_flows(&state.phi);
    let pi_dot = if grid.area_constraints {
        (&grid.boundary * &vf - &grid.export).component_mul(&gains.zeta_pi)
    } else {
        DVector::zeros(state.pi.len())
    };
    let (rho_plus_dot, rho_minus_dot) =
        thermal_rates(grid, gains, &vf, &state.rho_plus, &state.rho_minus);

    let mut w = thermal_weight(grid, &state.rho_plus, &state.rho_minus);
    if grid.area_constraints {
        w += grid.boundary.tr_mul(&state.pi);
    }
    let phi_dot = phase_rate(grid, gains, &state.lambda, &w);

    ControllerState {
        lambda: lambda_dot,
        pi: pi_dot,
        gamma: DVector::zeros(0),
        rho_plus: rho_plus_dot,
        rho_minus: rho_minus_dot,
        phi: phi_dot,
    }
}

/// Base law on a Kron-reduced grid. Constraints are evaluated on the
/// original lines through the grid's flow map, so the arithmetic is that of
/// `olc_rhs`.
pub fn reduced_rhs(
    grid: &Grid,
    costs: &[CostModel],
    gains: &ControllerGains,
    state: &ControllerState,
    omega: &DVector<f64>,
) -> ControllerRates {
    olc_rhs(grid, costs, gains, state, omega)
}

/// Price update built from measurements: `M w' + a w + C P - L phi`, with the
/// inertia term present only at generators. `omega_g_dot` follows
/// `grid.generators`.
pub fn perturbed_lambda_rhs(
    grid: &Grid,
    gains: &ControllerGains,
    state: &ControllerState,
    flows: &DVector<f64>,
    omega: &DVector<f64>,
    omega_g_dot: &DVector<f64>,
    delta_a: &DVector<f64>,
) -> DVector<f64> {
    let mut drive = grid.c_mul(flows) - grid.laplacian_mul(&state.phi);
    for i in 0..grid.n() {
        drive[i] += (grid.damping[i] + delta_a[i]) * omega[i];
    }
    for (k, &i) in grid.generators.iter().enumerate() {
        drive[i] += grid.inertia[i] * omega_g_dot[k];
    }
    drive.component_mul(&gains.zeta_lambda)
}

//! Swing dynamics in line-flow coordinates with algebraic load buses.

use nalgebra::DVector;

use crate::costs::CostModel;
use crate::error::{Error, Result};
use crate::netmodel::Grid;
use crate::tolerances::ROOT_RESIDUAL;

const MAX_ROOT_ITERATIONS: usize = 200;

/// Generator frequencies and line flows; load-bus frequencies are derived.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalState {
    pub omega_g: DVector<f64>,
    pub flows: DVector<f64>,
}

/// Root of `surplus - D w - d(lambda + w)` for one bus. The function is
/// strictly decreasing, so a bracket always exists; Newton steps are taken
/// inside it and replaced by bisection whenever they leave it.
pub fn solve_bus_frequency(
    model: Option<&CostModel>,
    damping: f64,
    lambda: f64,
    surplus: f64,
    bus: usize,
) -> Result<f64> {
    let eval = |w: f64| match model {
        Some(c) => (
            surplus - damping * w - c.load_response(lambda + w),
            damping + c.response_slope(lambda + w),
        ),
        None => (surplus - damping * w, damping),
    };
    let scale = surplus.abs().max(lambda.abs()).max(1.0);
    let tol = 0.1 * ROOT_RESIDUAL * scale;

    let (f0, s0) = eval(0.0);
    let mut x = f0 / s0;
    let (mut fx, mut sx) = eval(x);
    if fx.abs() <= tol {
        return Ok(x);
    }
    // Widen geometrically from the first Newton iterate until the sign flips.
    let (mut lo, mut hi) = (x, x);
    let mut width = (x.abs() + 1.0) * 0.5;
    if fx > 0.0 {
        loop {
            hi += width;
            width *= 2.0;
            if eval(hi).0 <= 0.0 {
                break;
            }
            lo = hi;
            if !hi.is_finite() {
                return Err(root_error(bus, "bracket expansion overflowed"));
            }
        }
    } else {
        loop {
            lo -= width;
            width *= 2.0;
            if eval(lo).0 >= 0.0 {
                break;
            }
            hi = lo;
            if !lo.is_finite() {
                return Err(root_error(bus, "bracket expansion overflowed"));
            }
        }
    }
    for _ in 0..MAX_ROOT_ITERATIONS {
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx > 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let newton = x + fx / sx;
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        (fx, sx) = eval(x);
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    if fx.abs() <= ROOT_RESIDUAL * scale {
        Ok(x)
    } else {
        Err(root_error(bus, &format!("residual {fx:e} after iteration cap")))
    }
}

fn root_error(bus: usize, reason: &str) -> Error {
    Error::RootSolve {
        bus,
        reason: reason.to_string(),
    }
}

/// Net power each bus must absorb locally: `P_in - C P`.
pub fn bus_surplus(grid: &Grid, flows: &DVector<f64>) -> DVector<f64> {
    &grid.injection - grid.c_mul(flows)
}

/// Load-bus frequencies, ordered as `grid.loads`. With `costs = None` the
/// loads are uncontrolled (`d = 0`).
pub fn solve_load_frequency(
    grid: &Grid,
    costs: Option<&[CostModel]>,
    lambda: &DVector<f64>,
    flows: &DVector<f64>,
) -> Result<DVector<f64>> {
    let surplus = bus_surplus(grid, flows);
    let mut out = DVector::zeros(grid.loads.len());
    for (k, &i) in grid.loads.iter().enumerate() {
        out[k] = solve_bus_frequency(
            costs.map(|c| &c[i]),
            grid.damping[i],
            lambda[i],
            surplus[i],
            i,
        )?;
    }
    Ok(out)
}

/// Residual of the load-bus algebraic constraint at a full frequency vector.
pub fn load_residual(
    grid: &Grid,
    omega: &DVector<f64>,
    d: &DVector<f64>,
    flows: &DVector<f64>,
) -> f64 {
    let surplus = bus_surplus(grid, flows);
    grid.loads
        .iter()
        .map(|&i| (surplus[i] - grid.damping[i] * omega[i] - d[i]).abs())
        .fold(0.0, f64::max)
}

/// Generator accelerations and line-flow rates given bus frequencies and
/// controllable loads. `omega` covers every bus.
pub fn swing_rhs(
    grid: &Grid,
    omega: &DVector<f64>,
    flows: &DVector<f64>,
    d: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let surplus = bus_surplus(grid, flows);
    let omega_g_dot = DVector::from_iterator(
        grid.generators.len(),
        grid.generators.iter().map(|&i| {
            (surplus[i] - d[i] - grid.damping[i] * omega[i]) / grid.inertia[i]
        }),
    );
    (omega_g_dot, grid.line_flows(omega))
}

/// Assembles the full frequency vector from generator and load parts.
pub fn full_frequency(grid: &Grid, omega_g: &DVector<f64>, omega_l: &DVector<f64>) -> DVector<f64> {
    let mut omega = DVector::zeros(grid.n());
    for (k, &i) in grid.generators.iter().enumerate() {
        omega[i] = omega_g[k];
    }
    for (k, &i) in grid.loads.iter().enumerate() {
        omega[i] = omega_l[k];
    }
    omega
}

use nalgebra::{DMatrix, DVector};

use super::{Dual, Multipliers, Primal};
use crate::controller::{project_scalar, ControllerGains};
use crate::costs::CostModel;
use crate::dynamics::{full_frequency, solve_load_frequency};
use crate::error::{Error, Result};
use crate::netmodel::Grid;

/// Constraint terms shared by both Lagrangians:
/// `pi^T (Cbar vf - Phat) + rho+^T (vf - Pmax) + rho-^T (Pmin - vf)`.
fn constraint_terms(grid: &Grid, phi: &DVector<f64>, pi: &DVector<f64>, rp: &DVector<f64>, rm: &DVector<f64>) -> f64 {
    let vf = grid.virtual_flows(phi);
    let mut total = 0.0;
    if grid.area_constraints {
        total += pi.dot(&(&grid.boundary * &vf - &grid.export));
    }
    for e in 0..grid.mc() {
        if grid.upper[e].is_finite() {
            total += rp[e] * (vf[e] - grid.upper[e]);
        }
        if grid.lower[e].is_finite() {
            total += rm[e] * (grid.lower[e] - vf[e]);
        }
    }
    total
}

/// The Lagrangian of the virtual-flow optimal load control problem.
pub fn lagrangian(
    grid: &Grid,
    costs: &[CostModel],
    d: &DVector<f64>,
    omega: &DVector<f64>,
    x: &Primal,
    sigma: &Multipliers,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..grid.n() {
        total += costs[i].cost(d[i])? + 0.5 * grid.damping[i] * omega[i] * omega[i];
    }
    let balance = &grid.injection - d - omega.component_mul(&grid.damping) - grid.c_mul(&x.flows);
    total += sigma.nu.dot(&balance);
    let virtual_balance = &grid.injection - d - grid.laplacian_mul(&x.phi);
    total += sigma.lambda.dot(&virtual_balance);
    total += constraint_terms(grid, &x.phi, &sigma.pi, &sigma.rho_plus, &sigma.rho_minus);
    Ok(total)
}

/// `Phi_i(lambda, nu)`: the Lagrangian of one bus minimized over `(d, omega)`.
pub fn phi_value(model: &CostModel, damping: f64, injection: f64, lambda: f64, nu: f64) -> f64 {
    let xi = lambda + nu;
    -model.conjugate(xi) - 0.5 * damping * nu * nu + xi * injection
}

/// Hessian of `Phi_i` in the order `(lambda, nu)`.
pub fn phi_hessian(model: &CostModel, damping: f64, lambda: f64, nu: f64) -> [[f64; 2]; 2] {
    let s = model.response_slope(lambda + nu);
    [[-s, -s], [-s, -(s + damping)]]
}

/// Load-bus `nu` that maximizes the Lagrangian; the same scalar equations
/// fix the load-bus frequencies of the physical system.
pub fn maximize_nu_l(grid: &Grid, costs: &[CostModel], x: &Primal, y: &Dual) -> Result<DVector<f64>> {
    solve_load_frequency(grid, Some(costs), &y.lambda, &x.flows)
}

fn full_nu(grid: &Grid, costs: &[CostModel], x: &Primal, y: &Dual) -> Result<DVector<f64>> {
    let nu_l = maximize_nu_l(grid, costs, x, y)?;
    Ok(full_frequency(grid, &y.nu_g, &nu_l))
}

/// `L(x, y)` with `(d, omega)` minimized out and `nu_L` maximized out.
pub fn reduced_lagrangian(grid: &Grid, costs: &[CostModel], x: &Primal, y: &Dual) -> Result<f64> {
    let nu = full_nu(grid, costs, x, y)?;
    let mut total = 0.0;
    for i in 0..grid.n() {
        total += phi_value(&costs[i], grid.damping[i], grid.injection[i], y.lambda[i], nu[i]);
    }
    total -= nu.dot(&grid.c_mul(&x.flows));
    total -= y.lambda.dot(&grid.laplacian_mul(&x.phi));
    total += constraint_terms(grid, &x.phi, &y.pi, &y.rho_plus, &y.rho_minus);
    Ok(total)
}

/// Gradients of the reduced Lagrangian, in the layouts of `Primal` and `Dual`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub x: Primal,
    pub y: Dual,
}

pub fn grad_xy(grid: &Grid, costs: &[CostModel], x: &Primal, y: &Dual) -> Result<Gradient> {
    let nu = full_nu(grid, costs, x, y)?;
    let d = DVector::from_fn(grid.n(), |i, _| costs[i].load_response(y.lambda[i] + nu[i]));
    let vf = grid.virtual_flows(&x.phi);

    let mut w = DVector::zeros(grid.mc());
    for e in 0..grid.mc() {
        if grid.upper[e].is_finite() {
            w[e] += y.rho_plus[e];
        }
        if grid.lower[e].is_finite() {
            w[e] -= y.rho_minus[e];
        }
    }
    if grid.area_constraints {
        w += grid.boundary.tr_mul(&y.pi);
    }
    let d_phi = grid.constraint_adjoint(&w) - grid.laplacian_mul(&y.lambda);
    let d_flows = -grid.ct_mul(&nu);

    let cp = grid.c_mul(&x.flows);
    let d_lambda = &grid.injection - &d - grid.laplacian_mul(&x.phi);
    let d_nu_g = DVector::from_iterator(
        grid.generators.len(),
        grid.generators
            .iter()
            .map(|&i| grid.injection[i] - d[i] - grid.damping[i] * nu[i] - cp[i]),
    );
    let d_pi = if grid.area_constraints {
        &grid.boundary * &vf - &grid.export
    } else {
        DVector::zeros(grid.k())
    };
    let mut d_rp = DVector::zeros(grid.mc());
    let mut d_rm = DVector::zeros(grid.mc());
    for e in 0..grid.mc() {
        if grid.upper[e].is_finite() {
            d_rp[e] = vf[e] - grid.upper[e];
        }
        if grid.lower[e].is_finite() {
            d_rm[e] = grid.lower[e] - vf[e];
        }
    }
    Ok(Gradient {
        x: Primal {
            phi: d_phi,
            flows: d_flows,
        },
        y: Dual {
            lambda: d_lambda,
            nu_g: d_nu_g,
            pi: d_pi,
            rho_plus: d_rp,
            rho_minus: d_rm,
        },
    })
}

/// `(x', y') = (-X dL/dx, Y [dL/dy]^+)` with `X = diag(chi_phi, B)` and
/// `Y = diag(zeta_lambda, 1/M_G, zeta_pi, zeta_rho)`.
pub fn primal_dual_field(
    grid: &Grid,
    costs: &[CostModel],
    gains: &ControllerGains,
    x: &Primal,
    y: &Dual,
) -> Result<(Primal, Dual)> {
    let g = grad_xy(grid, costs, x, y)?;
    let x_dot = Primal {
        phi: -g.x.phi.component_mul(&gains.chi_phi),
        flows: -g.x.flows.component_mul(&grid.susceptance),
    };
    let nu_g = DVector::from_fn(grid.generators.len(), |k, _| {
        g.y.nu_g[k] / grid.inertia[grid.generators[k]]
    });
    let project = |grad: &DVector<f64>, u: &DVector<f64>, gain: &DVector<f64>| {
        DVector::from_fn(grad.len(), |e, _| gain[e] * project_scalar(grad[e], u[e]))
    };
    let y_dot = Dual {
        lambda: g.y.lambda.component_mul(&gains.zeta_lambda),
        nu_g,
        pi: g.y.pi.component_mul(&gains.zeta_pi),
        rho_plus: project(&g.y.rho_plus, &y.rho_plus, &gains.zeta_rho_plus),
        rho_minus: project(&g.y.rho_minus, &y.rho_minus, &gains.zeta_rho_minus),
    };
    Ok((x_dot, y_dot))
}

/// Diagonal blocks of the reduced Lagrangian's Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct Hessians {
    pub xx: DMatrix<f64>,
    pub yy: DMatrix<f64>,
}

/// Load-bus weights `1 / (D + d')` and slopes `d'`, ordered as `grid.loads`.
fn load_weights(grid: &Grid, costs: &[CostModel], nu: &DVector<f64>, lambda: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    grid.loads
        .iter()
        .map(|&i| {
            let s = costs[i].response_slope(lambda[i] + nu[i]);
            (1.0 / (grid.damping[i] + s), s)
        })
        .unzip()
}

/// `C_L^T W C_L` for load-bus weights `w`.
fn load_gram(grid: &Grid, w: &[f64]) -> DMatrix<f64> {
    let mut row_of = vec![None; grid.n()];
    for (k, &i) in grid.loads.iter().enumerate() {
        row_of[i] = Some(k);
    }
    let m = grid.m();
    let mut out = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let mut s = 0.0;
            for (bus, sign_a) in [(grid.edges[a].0, 1.0), (grid.edges[a].1, -1.0)] {
                let Some(k) = row_of[bus] else { continue };
                let sign_b = if grid.edges[b].0 == bus {
                    1.0
                } else if grid.edges[b].1 == bus {
                    -1.0
                } else {
                    continue;
                };
                s += sign_a * sign_b * w[k];
            }
            out[(a, b)] = s;
        }
    }
    out
}

pub fn hessians(grid: &Grid, costs: &[CostModel], x: &Primal, y: &Dual) -> Result<Hessians> {
    let nu = full_nu(grid, costs, x, y)?;
    let (w, slope) = load_weights(grid, costs, &nu, &y.lambda);
    let n = grid.n();
    let mut xx = DMatrix::zeros(Primal::dim(grid), Primal::dim(grid));
    xx.view_mut((n, n), (grid.m(), grid.m())).copy_from(&load_gram(grid, &w));

    let mut yy = DMatrix::zeros(Dual::dim(grid), Dual::dim(grid));
    for (k, &i) in grid.loads.iter().enumerate() {
        yy[(i, i)] = -grid.damping[i] * w[k] * slope[k];
    }
    let off = Dual::nu_offset(grid);
    for (k, &i) in grid.generators.iter().enumerate() {
        let s = costs[i].response_slope(y.lambda[i] + y.nu_g[k]);
        yy[(i, i)] = -s;
        yy[(i, off + k)] = -s;
        yy[(off + k, i)] = -s;
        yy[(off + k, off + k)] = -(grid.damping[i] + s);
    }
    Ok(Hessians { xx, yy })
}

/// Symmetric matrix whose negative semidefiniteness certifies convergence of
/// the perturbed law, in the stacked coordinates `z = (x, y)`.
pub fn h_matrix(
    grid: &Grid,
    costs: &[CostModel],
    x: &Primal,
    y: &Dual,
    delta_a: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if costs.iter().any(|c| !c.has_finite_curvature()) {
        return Err(Error::InvalidScenario(
            "the robustness matrix needs cost models with bounded curvature".into(),
        ));
    }
    let nu = full_nu(grid, costs, x, y)?;
    let (w, slope) = load_weights(grid, costs, &nu, &y.lambda);
    let (n, m) = (grid.n(), grid.m());
    let nx = Primal::dim(grid);
    let dim = nx + Dual::dim(grid);
    let mut h = DMatrix::zeros(dim, dim);

    let gram = load_gram(grid, &w);
    h.view_mut((n, n), (m, m)).copy_from(&(-gram));
    // Flow / load-price coupling: -1/2 C_L^T W dA_L.
    for (k, &i) in grid.loads.iter().enumerate() {
        let lam = nx + i;
        for (e, &(from, to)) in grid.edges.iter().enumerate() {
            let sign = if from == i {
                1.0
            } else if to == i {
                -1.0
            } else {
                continue;
            };
            let v = -0.5 * sign * w[k] * delta_a[i];
            h[(n + e, lam)] = v;
            h[(lam, n + e)] = v;
        }
        h[(lam, lam)] = -(grid.damping[i] + delta_a[i]) * w[k] * slope[k];
    }
    let off = nx + Dual::nu_offset(grid);
    for (k, &i) in grid.generators.iter().enumerate() {
        let s = costs[i].response_slope(y.lambda[i] + y.nu_g[k]);
        let lam = nx + i;
        let cross = 0.5 * delta_a[i] - s;
        h[(lam, lam)] = -s;
        h[(lam, off + k)] = cross;
        h[(off + k, lam)] = cross;
        h[(off + k, off + k)] = -(s + grid.damping[i]);
    }
    Ok(h)
}

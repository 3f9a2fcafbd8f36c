use nalgebra::{DMatrix, DVector};

use super::OptimalSolution;
use crate::controller::ClosedLoop;
use crate::error::{Error, Result};
use crate::netmodel::laplacian_solve;

/// `U = 0.5 * sum_i w_i (z_i - z*_i)^2` with `w` the inverse gain diagonal
/// (see `ClosedLoop::lyapunov_weights`).
pub fn lyapunov(weights: &[f64], z: &[f64], z_ref: &[f64]) -> f64 {
    weights
        .iter()
        .zip(z.iter().zip(z_ref))
        .map(|(w, (a, b))| 0.5 * w * (a - b) * (a - b))
        .sum()
}

/// Closed-loop state at an optimal solution: zero frequency, optimal flows
/// and multipliers. For the distributed area law every boundary line of an
/// area carries its area's multiplier and the auxiliary variables solve the
/// per-line export split.
pub fn equilibrium_state(cl: &ClosedLoop, sol: &OptimalSolution) -> Result<Vec<f64>> {
    sol.check_shape(&cl.grid)?;
    let l = cl.layout;
    let mut z = vec![0.0; l.dim()];
    z[l.flows()].copy_from_slice(sol.flows.as_slice());
    z[l.lambda()].copy_from_slice(sol.lambda.as_slice());
    z[l.rho_plus()].copy_from_slice(sol.rho_plus.as_slice());
    z[l.rho_minus()].copy_from_slice(sol.rho_minus.as_slice());
    z[l.phi()].copy_from_slice(sol.phi.as_slice());
    match cl.comm() {
        None => z[l.pi()].copy_from_slice(sol.pi.as_slice()),
        Some(comm) => {
            let grid = &cl.grid;
            let vf = grid.virtual_flows(&sol.phi);
            let sizes = comm.area_sizes(grid.k());
            let pi_start = l.pi().start;
            let gamma_start = l.gamma().start;
            for (k, &size) in sizes.iter().enumerate() {
                let members: Vec<usize> =
                    (0..comm.pairs.len()).filter(|&p| comm.pairs[p].0 == k).collect();
                if members.is_empty() {
                    continue;
                }
                let local = |p: usize| members.iter().position(|&q| q == p);
                let mut lap = DMatrix::zeros(members.len(), members.len());
                for &(a, b) in &comm.links {
                    if let (Some(i), Some(j)) = (local(a), local(b)) {
                        lap[(i, i)] += 1.0;
                        lap[(j, j)] += 1.0;
                        lap[(i, j)] -= 1.0;
                        lap[(j, i)] -= 1.0;
                    }
                }
                let rhs = DVector::from_fn(members.len(), |i, _| {
                    let (_, e) = comm.pairs[members[i]];
                    grid.boundary[(k, e)] * vf[e] - grid.export[k] / size as f64
                });
                let gamma = if members.len() == 1 {
                    DVector::zeros(1)
                } else {
                    laplacian_solve(&lap, &rhs).map_err(|_| {
                        Error::Singular("communication Laplacian of an area".into())
                    })?
                };
                for (i, &p) in members.iter().enumerate() {
                    z[pi_start + p] = sol.pi[k];
                    z[gamma_start + p] = gamma[i];
                }
            }
        }
    }
    Ok(z)
}

/// Equilibrium of the uncontrolled swing dynamics: a common frequency
/// `sum P_in / sum D` and the flows that carry the remaining imbalance.
pub fn swing_equilibrium_state(cl: &ClosedLoop) -> Result<Vec<f64>> {
    let grid = &cl.grid;
    let omega = grid.injection.sum() / grid.damping.sum();
    let rhs = &grid.injection - &grid.damping * omega;
    let angles = laplacian_solve(&grid.laplacian, &rhs)?;
    let l = cl.layout;
    let mut z = cl.initial_state();
    for v in &mut z[l.omega_g()] {
        *v = omega;
    }
    z[l.flows()].copy_from_slice(grid.line_flows(&angles).as_slice());
    Ok(z)
}

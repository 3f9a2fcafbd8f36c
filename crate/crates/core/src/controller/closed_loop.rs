use std::ops::Range;

use nalgebra::DVector;

use super::laws::load_setpoints;
use super::{
    distributed_area_rhs, olc_rhs, perturbed_lambda_rhs, CommGraph, ControllerGains,
    ControllerState, ControllerVariant,
};
use crate::costs::CostModel;
use crate::dynamics::{full_frequency, load_residual, solve_load_frequency, swing_rhs, PhysicalState};
use crate::error::{Error, Result};
use crate::integrator::Field;
use crate::netmodel::Grid;

/// Positions of each block inside the flat closed-loop state
/// `(omega_G, P, lambda, pi, gamma, rho+, rho-, phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub ng: usize,
    pub m: usize,
    pub n: usize,
    pub n_pi: usize,
    pub n_gamma: usize,
    pub mc: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.ng + self.m + 2 * self.n + self.n_pi + self.n_gamma + 2 * self.mc
    }
    pub fn omega_g(&self) -> Range<usize> {
        0..self.ng
    }
    pub fn flows(&self) -> Range<usize> {
        let s = self.omega_g().end;
        s..s + self.m
    }
    pub fn lambda(&self) -> Range<usize> {
        let s = self.flows().end;
        s..s + self.n
    }
    pub fn pi(&self) -> Range<usize> {
        let s = self.lambda().end;
        s..s + self.n_pi
    }
    pub fn gamma(&self) -> Range<usize> {
        let s = self.pi().end;
        s..s + self.n_gamma
    }
    pub fn rho_plus(&self) -> Range<usize> {
        let s = self.gamma().end;
        s..s + self.mc
    }
    pub fn rho_minus(&self) -> Range<usize> {
        let s = self.rho_plus().end;
        s..s + self.mc
    }
    pub fn phi(&self) -> Range<usize> {
        let s = self.rho_minus().end;
        s..s + self.n
    }
}

fn block(z: &[f64], r: Range<usize>) -> DVector<f64> {
    DVector::from_column_slice(&z[r])
}

/// One evaluation of the closed-loop field together with the derived
/// algebraic quantities.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rates: Vec<f64>,
    /// Frequency at every bus.
    pub omega: DVector<f64>,
    pub d: DVector<f64>,
    pub algebraic_residual: f64,
}

/// Swing dynamics closed by a load-side controller.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub grid: Grid,
    pub costs: Vec<CostModel>,
    pub gains: ControllerGains,
    pub variant: ControllerVariant,
    pub layout: Layout,
}

impl ClosedLoop {
    pub fn new(
        grid: Grid,
        costs: Vec<CostModel>,
        gains: ControllerGains,
        variant: ControllerVariant,
    ) -> Result<Self> {
        if costs.len() != grid.n() {
            return Err(Error::Dimension {
                expected: grid.n(),
                got: costs.len(),
            });
        }
        for c in &costs {
            c.validate()?;
        }
        gains.validate()?;
        if gains.zeta_lambda.len() != grid.n()
            || gains.chi_phi.len() != grid.n()
            || gains.zeta_pi.len() != grid.k()
            || gains.zeta_rho_plus.len() != grid.mc()
            || gains.zeta_rho_minus.len() != grid.mc()
        {
            return Err(Error::InvalidScenario("gain vectors do not match the grid".into()));
        }
        let (n_pi, n_gamma) = match &variant {
            ControllerVariant::Perturbed { delta_a } => {
                if delta_a.len() != grid.n() {
                    return Err(Error::Dimension {
                        expected: grid.n(),
                        got: delta_a.len(),
                    });
                }
                if costs.iter().any(|c| !c.has_finite_curvature()) {
                    return Err(Error::InvalidScenario(
                        "the perturbed law needs cost models with bounded curvature".into(),
                    ));
                }
                (grid.k(), 0)
            }
            ControllerVariant::DistributedArea { comm } => {
                if !grid.area_constraints {
                    return Err(Error::InvalidScenario(
                        "the distributed area law needs area constraints".into(),
                    ));
                }
                comm.validate(grid.k())?;
                (comm.pairs.len(), comm.pairs.len())
            }
            _ => (grid.k(), 0),
        };
        let layout = Layout {
            ng: grid.generators.len(),
            m: grid.m(),
            n: grid.n(),
            n_pi,
            n_gamma,
            mc: grid.mc(),
        };
        Ok(ClosedLoop {
            grid,
            costs,
            gains,
            variant,
            layout,
        })
    }

    pub fn comm(&self) -> Option<&CommGraph> {
        match &self.variant {
            ControllerVariant::DistributedArea { comm } => Some(comm),
            _ => None,
        }
    }

    /// Pre-fault flows, zero multipliers and `phi = theta0`.
    pub fn initial_state(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.layout.dim()];
        z[self.layout.flows()].copy_from_slice(self.grid.initial_flows().as_slice());
        z[self.layout.phi()].copy_from_slice(self.grid.initial_angles.as_slice());
        z
    }

    pub fn physical_state(&self, z: &[f64]) -> PhysicalState {
        PhysicalState {
            omega_g: block(z, self.layout.omega_g()),
            flows: block(z, self.layout.flows()),
        }
    }

    pub fn controller_state(&self, z: &[f64]) -> ControllerState {
        let l = &self.layout;
        ControllerState {
            lambda: block(z, l.lambda()),
            pi: block(z, l.pi()),
            gamma: block(z, l.gamma()),
            rho_plus: block(z, l.rho_plus()),
            rho_minus: block(z, l.rho_minus()),
            phi: block(z, l.phi()),
        }
    }

    /// Writes a controller state back into a flat vector.
    pub fn store_controller(&self, z: &mut [f64], c: &ControllerState) {
        let l = &self.layout;
        z[l.lambda()].copy_from_slice(c.lambda.as_slice());
        z[l.pi()].copy_from_slice(c.pi.as_slice());
        z[l.gamma()].copy_from_slice(c.gamma.as_slice());
        z[l.rho_plus()].copy_from_slice(c.rho_plus.as_slice());
        z[l.rho_minus()].copy_from_slice(c.rho_minus.as_slice());
        z[l.phi()].copy_from_slice(c.phi.as_slice());
    }

    fn controlled(&self) -> bool {
        !matches!(self.variant, ControllerVariant::SwingOnly)
    }

    /// Frequencies and loads implied by a state (load frequencies solved).
    pub fn algebraic(&self, z: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let phys = self.physical_state(z);
        let lambda = block(z, self.layout.lambda());
        let costs = self.controlled().then_some(self.costs.as_slice());
        let omega_l = solve_load_frequency(&self.grid, costs, &lambda, &phys.flows)?;
        let omega = full_frequency(&self.grid, &phys.omega_g, &omega_l);
        let d = if self.controlled() {
            load_setpoints(&self.costs, &lambda, &omega)
        } else {
            DVector::zeros(self.grid.n())
        };
        Ok((omega, d))
    }

    pub fn evaluate(&self, z: &[f64]) -> Result<Evaluation> {
        let l = self.layout;
        let phys = self.physical_state(z);
        let (omega, d) = self.algebraic(z)?;
        let (omega_g_dot, flows_dot) = swing_rhs(&self.grid, &omega, &phys.flows, &d);
        let algebraic_residual = load_residual(&self.grid, &omega, &d, &phys.flows);

        let mut rates = vec![0.0; l.dim()];
        rates[l.omega_g()].copy_from_slice(omega_g_dot.as_slice());
        rates[l.flows()].copy_from_slice(flows_dot.as_slice());

        let state = self.controller_state(z);
        match &self.variant {
            ControllerVariant::SwingOnly => {}
            ControllerVariant::Base | ControllerVariant::Reduced => {
                let r = olc_rhs(&self.grid, &self.costs, &self.gains, &state, &omega);
                self.store_controller(&mut rates, &r);
            }
            ControllerVariant::Perturbed { delta_a } => {
                let mut r = olc_rhs(&self.grid, &self.costs, &self.gains, &state, &omega);
                r.lambda = perturbed_lambda_rhs(
                    &self.grid,
                    &self.gains,
                    &state,
                    &phys.flows,
                    &omega,
                    &omega_g_dot,
                    delta_a,
                );
                self.store_controller(&mut rates, &r);
            }
            ControllerVariant::DistributedArea { comm } => {
                // The area terms come from the per-edge law below; the shared
                // rates only need the lambda and rho parts.
                let shared = ControllerState {
                    pi: DVector::zeros(self.grid.k()),
                    ..state.clone()
                };
                let mut r = olc_rhs(&self.grid, &self.costs, &self.gains, &shared, &omega);
                let (pi_dot, gamma_dot, phi_dot) = distributed_area_rhs(
                    &self.grid,
                    &self.gains,
                    comm,
                    &state.lambda,
                    &state.phi,
                    &state.pi,
                    &state.gamma,
                    &state.rho_plus,
                    &state.rho_minus,
                );
                r.pi = pi_dot;
                r.gamma = gamma_dot;
                r.phi = phi_dot;
                self.store_controller(&mut rates, &r);
            }
        }
        Ok(Evaluation {
            rates,
            omega,
            d,
            algebraic_residual,
        })
    }

    /// Diagonal of `X^{-1}` and `Y^{-1}` in the flat layout, so that the
    /// Lyapunov function is `0.5 * sum w_i (z_i - z*_i)^2`.
    pub fn lyapunov_weights(&self) -> Vec<f64> {
        let l = self.layout;
        let g = &self.grid;
        let mut w = vec![0.0; l.dim()];
        for (k, &i) in g.generators.iter().enumerate() {
            w[l.omega_g().start + k] = g.inertia[i];
        }
        for e in 0..l.m {
            w[l.flows().start + e] = 1.0 / g.susceptance[e];
        }
        if !self.controlled() {
            return w;
        }
        for i in 0..l.n {
            w[l.lambda().start + i] = 1.0 / self.gains.zeta_lambda[i];
            w[l.phi().start + i] = 1.0 / self.gains.chi_phi[i];
        }
        for p in 0..l.n_pi {
            w[l.pi().start + p] = match self.variant {
                ControllerVariant::DistributedArea { .. } => 1.0 / self.gains.zeta_pi_edge,
                _ => 1.0 / self.gains.zeta_pi[p],
            };
        }
        for p in 0..l.n_gamma {
            w[l.gamma().start + p] = 1.0 / self.gains.chi_gamma;
        }
        for e in 0..l.mc {
            w[l.rho_plus().start + e] = 1.0 / self.gains.zeta_rho_plus[e];
            w[l.rho_minus().start + e] = 1.0 / self.gains.zeta_rho_minus[e];
        }
        w
    }
}

impl Field for ClosedLoop {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn rates(&self, z: &[f64], out: &mut [f64]) -> Result<f64> {
        let e = self.evaluate(z)?;
        out.copy_from_slice(&e.rates);
        Ok(e.algebraic_residual)
    }

    fn clamp(&self, z: &mut [f64]) {
        let l = self.layout;
        for r in [l.rho_plus(), l.rho_minus()] {
            for v in &mut z[r] {
                *v = v.max(0.0);
            }
        }
    }
}

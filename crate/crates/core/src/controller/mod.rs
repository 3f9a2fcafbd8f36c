//! Projected primal-dual load controllers and the closed loop they form
//! with the swing dynamics.

mod closed_loop;
mod distributed;
mod laws;

pub use closed_loop::{ClosedLoop, Evaluation, Layout};
pub use distributed::{distributed_area_rhs, CommGraph};
pub use laws::{olc_rhs, perturbed_lambda_rhs, reduced_rhs};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::netmodel::Grid;

/// `[a]^+_u`: passes `a` unless `a <= 0` while `u <= 0`.
pub fn project_scalar(a: f64, u: f64) -> f64 {
    if a > 0.0 || u > 0.0 {
        a
    } else {
        0.0
    }
}

/// Elementwise projection on the masked entries; the rest pass through.
pub fn project_positive(a: &DVector<f64>, u: &DVector<f64>, mask: &[bool]) -> DVector<f64> {
    DVector::from_fn(a.len(), |i, _| {
        if mask[i] {
            project_scalar(a[i], u[i])
        } else {
            a[i]
        }
    })
}

/// Positive integral gains of the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub zeta_lambda: DVector<f64>,
    pub chi_phi: DVector<f64>,
    /// Per area.
    pub zeta_pi: DVector<f64>,
    /// Per constrained line.
    pub zeta_rho_plus: DVector<f64>,
    pub zeta_rho_minus: DVector<f64>,
    /// Per-edge multiplier gain of the distributed area law.
    pub zeta_pi_edge: f64,
    /// Gain of the auxiliary edge variables of the distributed area law.
    pub chi_gamma: f64,
}

impl ControllerGains {
    pub fn uniform(grid: &Grid, value: f64) -> Self {
        ControllerGains {
            zeta_lambda: DVector::from_element(grid.n(), value),
            chi_phi: DVector::from_element(grid.n(), value),
            zeta_pi: DVector::from_element(grid.k(), value),
            zeta_rho_plus: DVector::from_element(grid.mc(), value),
            zeta_rho_minus: DVector::from_element(grid.mc(), value),
            zeta_pi_edge: value,
            chi_gamma: value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [self.zeta_pi_edge, self.chi_gamma];
        let all = self
            .zeta_lambda
            .iter()
            .chain(self.chi_phi.iter())
            .chain(self.zeta_pi.iter())
            .chain(self.zeta_rho_plus.iter())
            .chain(self.zeta_rho_minus.iter())
            .chain(scalars.iter());
        for &g in all {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidScenario(format!(
                    "controller gains must be positive and finite, got {g}"
                )));
            }
        }
        Ok(())
    }
}

/// Which control law closes the loop.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerVariant {
    /// No controllable load: `d = 0`.
    SwingOnly,
    Base,
    /// Frequency feedback `a = D + delta_a` measured instead of modelled.
    Perturbed { delta_a: DVector<f64> },
    /// Base law on a Kron-reduced grid.
    Reduced,
    /// Per-boundary-edge decomposition of the inter-area constraint.
    DistributedArea { comm: CommGraph },
}

impl ControllerVariant {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerVariant::SwingOnly => "swing-only",
            ControllerVariant::Base => "base",
            ControllerVariant::Perturbed { .. } => "perturbed",
            ControllerVariant::Reduced => "reduced",
            ControllerVariant::DistributedArea { .. } => "distributed-area",
        }
    }
}

/// Controller variables. `pi` and `gamma` are per area for the base law and
/// per (area, boundary line) pair for the distributed law.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub lambda: DVector<f64>,
    pub pi: DVector<f64>,
    pub gamma: DVector<f64>,
    pub rho_plus: DVector<f64>,
    pub rho_minus: DVector<f64>,
    pub phi: DVector<f64>,
}

/// Time derivatives of `ControllerState`, same shapes.
pub type ControllerRates = ControllerState;

/// Open interval of homogeneous frequency-gain perturbations for which the
/// perturbed law still converges, given the smallest damping and the
/// smallest load-response slope.
pub fn stability_bound(d_min: f64, slope_min: f64) -> Result<(f64, f64)> {
    if !(d_min > 0.0) || !(slope_min > 0.0) {
        return Err(Error::InvalidScenario(format!(
            "stability bound needs positive damping and slope (got {d_min}, {slope_min})"
        )));
    }
    let root = (slope_min * slope_min + slope_min * d_min).sqrt();
    Ok((2.0 * (slope_min - root), 2.0 * (slope_min + root)))
}

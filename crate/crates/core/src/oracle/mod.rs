//! Optimization-side ground truth: the Lagrangian and its derivatives, an
//! independent optimal load control solver, KKT certification, the Lyapunov
//! function and the robustness matrix.

mod kkt;
mod lagrangian;
mod lyapunov;
mod solver;

pub use kkt::{kkt_residuals, KktReport};
pub use lagrangian::{
    grad_xy, h_matrix, hessians, lagrangian, maximize_nu_l, phi_hessian, phi_value,
    primal_dual_field, reduced_lagrangian, Gradient, Hessians,
};
pub use lyapunov::{equilibrium_state, lyapunov, swing_equilibrium_state};
pub use solver::{solve_olc, SolverOptions};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::Grid;

/// Primal variables `x = (phi, P)` of the reduced Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct Primal {
    pub phi: DVector<f64>,
    pub flows: DVector<f64>,
}

/// Dual variables `y = (lambda, nu_G, pi, rho+, rho-)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub lambda: DVector<f64>,
    pub nu_g: DVector<f64>,
    pub pi: DVector<f64>,
    pub rho_plus: DVector<f64>,
    pub rho_minus: DVector<f64>,
}

/// Full multiplier set `sigma = (lambda, nu, pi, rho+, rho-)` with `nu` on
/// every bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub lambda: DVector<f64>,
    pub nu: DVector<f64>,
    pub pi: DVector<f64>,
    pub rho_plus: DVector<f64>,
    pub rho_minus: DVector<f64>,
}

impl Primal {
    pub fn dim(grid: &Grid) -> usize {
        grid.n() + grid.m()
    }
    pub fn to_vec(&self) -> Vec<f64> {
        self.phi.iter().chain(self.flows.iter()).copied().collect()
    }
    pub fn from_slice(grid: &Grid, v: &[f64]) -> Self {
        let n = grid.n();
        Primal {
            phi: DVector::from_column_slice(&v[..n]),
            flows: DVector::from_column_slice(&v[n..n + grid.m()]),
        }
    }
}

impl Dual {
    pub fn dim(grid: &Grid) -> usize {
        grid.n() + grid.generators.len() + grid.k() + 2 * grid.mc()
    }
    pub fn to_vec(&self) -> Vec<f64> {
        self.lambda
            .iter()
            .chain(self.nu_g.iter())
            .chain(self.pi.iter())
            .chain(self.rho_plus.iter())
            .chain(self.rho_minus.iter())
            .copied()
            .collect()
    }
    pub fn from_slice(grid: &Grid, v: &[f64]) -> Self {
        let (n, ng, k, mc) = (grid.n(), grid.generators.len(), grid.k(), grid.mc());
        let mut at = 0;
        let mut take = |len: usize| {
            let out = DVector::from_column_slice(&v[at..at + len]);
            at += len;
            out
        };
        Dual {
            lambda: take(n),
            nu_g: take(ng),
            pi: take(k),
            rho_plus: take(mc),
            rho_minus: take(mc),
        }
    }
    /// Offset of `nu_G` inside the flat vector.
    pub fn nu_offset(grid: &Grid) -> usize {
        grid.n()
    }
}

/// Primal-dual optimum of the optimal load control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub d: DVector<f64>,
    pub omega: DVector<f64>,
    pub phi: DVector<f64>,
    /// Flows on the simulated lines.
    pub flows: DVector<f64>,
    pub lambda: DVector<f64>,
    pub nu: DVector<f64>,
    pub pi: DVector<f64>,
    pub rho_plus: DVector<f64>,
    pub rho_minus: DVector<f64>,
    pub objective: f64,
    pub max_kkt_residual: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolutionJson {
    d: Vec<f64>,
    omega: Vec<f64>,
    phi: Vec<f64>,
    #[serde(rename = "P")]
    flows: Vec<f64>,
    lambda: Vec<f64>,
    nu: Vec<f64>,
    pi: Vec<f64>,
    #[serde(rename = "rhoPlus")]
    rho_plus: Vec<f64>,
    #[serde(rename = "rhoMinus")]
    rho_minus: Vec<f64>,
    objective: f64,
    #[serde(rename = "maxKktResidual")]
    max_kkt_residual: f64,
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.as_slice().to_vec()
}

impl OptimalSolution {
    pub fn to_json_string(&self) -> Result<String> {
        let j = SolutionJson {
            d: vec_of(&self.d),
            omega: vec_of(&self.omega),
            phi: vec_of(&self.phi),
            flows: vec_of(&self.flows),
            lambda: vec_of(&self.lambda),
            nu: vec_of(&self.nu),
            pi: vec_of(&self.pi),
            rho_plus: vec_of(&self.rho_plus),
            rho_minus: vec_of(&self.rho_minus),
            objective: self.objective,
            max_kkt_residual: self.max_kkt_residual,
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let j: SolutionJson = serde_json::from_str(text)?;
        let v = DVector::from_vec;
        Ok(OptimalSolution {
            d: v(j.d),
            omega: v(j.omega),
            phi: v(j.phi),
            flows: v(j.flows),
            lambda: v(j.lambda),
            nu: v(j.nu),
            pi: v(j.pi),
            rho_plus: v(j.rho_plus),
            rho_minus: v(j.rho_minus),
            objective: j.objective,
            max_kkt_residual: j.max_kkt_residual,
        })
    }

    /// Checks that every vector has the length the grid expects.
    pub fn check_shape(&self, grid: &Grid) -> Result<()> {
        let (n, m, k, mc) = (grid.n(), grid.m(), grid.k(), grid.mc());
        for (len, want) in [
            (self.d.len(), n),
            (self.omega.len(), n),
            (self.phi.len(), n),
            (self.flows.len(), m),
            (self.lambda.len(), n),
            (self.nu.len(), n),
            (self.pi.len(), k),
            (self.rho_plus.len(), mc),
            (self.rho_minus.len(), mc),
        ] {
            if len != want {
                return Err(Error::Dimension {
                    expected: want,
                    got: len,
                });
            }
        }
        Ok(())
    }

    pub fn multipliers(&self) -> Multipliers {
        Multipliers {
            lambda: self.lambda.clone(),
            nu: self.nu.clone(),
            pi: self.pi.clone(),
            rho_plus: self.rho_plus.clone(),
            rho_minus: self.rho_minus.clone(),
        }
    }
}

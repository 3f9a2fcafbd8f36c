use nalgebra::DVector;

use super::laws::{phase_rate, thermal_weight};
use super::ControllerGains;
use crate::error::{Error, Result};
use crate::netmodel::Grid;

/// Communication graph between the boundary lines of each area.
///
/// Every (area, boundary line) pair carries its own multiplier; `links`
/// connect pairs of the same area that exchange messages.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    /// `(area index, constrained line index)`, grouped by area in case order.
    pub pairs: Vec<(usize, usize)>,
    /// Undirected links between pair indices.
    pub links: Vec<(usize, usize)>,
}

impl CommGraph {
    pub fn boundary_pairs(grid: &Grid) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for k in 0..grid.k() {
            for e in 0..grid.mc() {
                if grid.boundary[(k, e)] != 0.0 {
                    pairs.push((k, e));
                }
            }
        }
        pairs
    }

    /// A ring over each area's boundary lines in case-file order.
    pub fn ring(grid: &Grid) -> Self {
        let pairs = Self::boundary_pairs(grid);
        let mut links = Vec::new();
        for k in 0..grid.k() {
            let members: Vec<usize> = (0..pairs.len()).filter(|&p| pairs[p].0 == k).collect();
            match members.len() {
                0 | 1 => {}
                2 => links.push((members[0], members[1])),
                len => {
                    for a in 0..len {
                        links.push((members[a], members[(a + 1) % len]));
                    }
                }
            }
        }
        CommGraph { pairs, links }
    }

    /// Builds a graph from explicit links given as `(area id, line id, line id)`.
    pub fn from_links(grid: &Grid, spec: &[(i64, i64, i64)]) -> Result<Self> {
        let pairs = Self::boundary_pairs(grid);
        let find = |area: i64, line: i64| -> Result<usize> {
            let k = grid.area_ids.iter().position(|&a| a == area);
            let e = grid.constrained_position(line);
            match (k, e) {
                (Some(k), Some(e)) => pairs.iter().position(|&p| p == (k, e)).ok_or_else(|| {
                    Error::InvalidScenario(format!(
                        "line {line} is not a boundary line of area {area}"
                    ))
                }),
                _ => Err(Error::InvalidScenario(format!(
                    "unknown area {area} or line {line} in communication graph"
                ))),
            }
        };
        let mut links = Vec::with_capacity(spec.len());
        for &(area, a, b) in spec {
            links.push((find(area, a)?, find(area, b)?));
        }
        let graph = CommGraph { pairs, links };
        graph.validate(grid.k())?;
        Ok(graph)
    }

    /// Checks that links stay inside one area and connect all of its pairs.
    pub fn validate(&self, areas: usize) -> Result<()> {
        for &(a, b) in &self.links {
            if self.pairs[a].0 != self.pairs[b].0 {
                return Err(Error::InvalidScenario(
                    "communication link joins two different areas".into(),
                ));
            }
        }
        let nbrs = self.neighbors();
        for k in 0..areas {
            let members: Vec<usize> = (0..self.pairs.len())
                .filter(|&p| self.pairs[p].0 == k)
                .collect();
            let Some(&start) = members.first() else {
                continue;
            };
            let mut seen = vec![false; self.pairs.len()];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                for &q in &nbrs[p] {
                    if !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
            if members.iter().any(|&p| !seen[p]) {
                return Err(Error::InvalidScenario(format!(
                    "communication graph of area index {k} is disconnected"
                )));
            }
        }
        Ok(())
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.pairs.len()];
        for &(a, b) in &self.links {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        nbrs
    }

    /// Number of boundary lines per area.
    pub fn area_sizes(&self, areas: usize) -> Vec<usize> {
        let mut sizes = vec![0; areas];
        for &(k, _) in &self.pairs {
            sizes[k] += 1;
        }
        sizes
    }

    /// `sum_{q ~ p} (v_p - v_q)` for every pair `p`.
    pub fn laplacian_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.pairs.len());
        for &(a, b) in &self.links {
            out[a] += v[a] - v[b];
            out[b] += v[b] - v[a];
        }
        out
    }
}

/// Rates `(pi', gamma', phi')` of the distributed inter-area law.
#[allow(clippy::too_many_arguments)]
pub fn distributed_area_rhs(
    grid: &Grid,
    gains: &ControllerGains,
    comm: &CommGraph,
    lambda: &DVector<f64>,
    phi: &DVector<f64>,
    pi_edge: &DVector<f64>,
    gamma: &DVector<f64>,
    rho_plus: &DVector<f64>,
    rho_minus: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let vf = grid.virtual_flows(phi);
    let sizes = comm.area_sizes(grid.k());
    let lap_gamma = comm.laplacian_mul(gamma);
    let lap_pi = comm.laplacian_mul(pi_edge);

    let mut pi_dot = DVector::zeros(comm.pairs.len());
    let mut w = thermal_weight(grid, rho_plus, rho_minus);
    for (p, &(k, e)) in comm.pairs.iter().enumerate() {
        let sign = grid.boundary[(k, e)];
        let target = grid.export[k] / sizes[k] as f64;
        pi_dot[p] = gains.zeta_pi_edge * (sign * vf[e] - target - lap_gamma[p]);
        w[e] += sign * pi_edge[p];
    }
    let gamma_dot = lap_pi * gains.chi_gamma;
    let phi_dot = phase_rate(grid, gains, lambda, &w);
    (pi_dot, gamma_dot, phi_dot)
}

use nalgebra::{DMatrix, DVector};

use super::{dc_power_flow, graph_matrices, kron_reduce, BusKind, NetworkCase, ReducedNetwork};
use crate::error::{Error, Result};

/// The network a controller actually runs on, together with the line
/// constraints it must respect.
///
/// For the base network the constrained lines are the simulated lines. After
/// Kron reduction the simulated lines are the reduced ones and constraints
/// still refer to the original lines, reached through `flow_map`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub bus_ids: Vec<i64>,
    pub kinds: Vec<BusKind>,
    pub inertia: DVector<f64>,
    pub damping: DVector<f64>,
    pub injection: DVector<f64>,
    pub generators: Vec<usize>,
    pub loads: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub line_labels: Vec<String>,
    pub susceptance: DVector<f64>,
    pub incidence: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    /// `None` means the identity map.
    pub flow_map: Option<DMatrix<f64>>,
    /// Ids of the lines the constraints are written on.
    pub constrained_ids: Vec<i64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// Area boundary matrix over the constrained lines.
    pub boundary: DMatrix<f64>,
    pub area_ids: Vec<i64>,
    pub export: DVector<f64>,
    pub area_constraints: bool,
    /// Pre-fault angles; also the initial virtual phase.
    pub initial_angles: DVector<f64>,
}

impl Grid {
    /// Grid over the full network. Zero-injection buses are rejected because
    /// they carry neither damping nor a controllable load.
    pub fn base(case: &NetworkCase) -> Result<Grid> {
        if !case.zero_buses().is_empty() {
            return Err(Error::InvalidCase(
                "case has zero-injection buses; use the reduced variant".into(),
            ));
        }
        let balanced = case.balance_injections()?;
        let flow = dc_power_flow(&balanced)?;
        let gm = graph_matrices(&balanced);
        let edges = balanced.lines.iter().map(|l| (l.from, l.to)).collect();
        let labels = balanced.lines.iter().map(|l| l.id.to_string()).collect();
        Ok(Self::assemble(
            &balanced,
            &(0..balanced.buses.len()).collect::<Vec<_>>(),
            edges,
            labels,
            gm.susceptance,
            None,
            flow.angles,
        ))
    }

    /// Grid over the Kron-reduced network.
    pub fn reduced(case: &NetworkCase) -> Result<(Grid, ReducedNetwork)> {
        let balanced = case.balance_injections()?;
        let flow = dc_power_flow(&balanced)?;
        let red = kron_reduce(&balanced)?;
        let ids: Vec<i64> = red.retained.iter().map(|&i| balanced.buses[i].id).collect();
        let edges = red.lines.iter().map(|l| (l.from, l.to)).collect();
        let labels = if red.trivial {
            balanced.lines.iter().map(|l| l.id.to_string()).collect()
        } else {
            red.lines
                .iter()
                .map(|l| format!("{}-{}", ids[l.from], ids[l.to]))
                .collect()
        };
        let angles =
            DVector::from_iterator(red.retained.len(), red.retained.iter().map(|&i| flow.angles[i]));
        let map = (!red.trivial).then(|| red.flow_recovery.clone());
        let grid = Self::assemble(
            &balanced,
            &red.retained,
            edges,
            labels,
            red.susceptance.clone(),
            map,
            angles,
        );
        Ok((grid, red))
    }

    fn assemble(
        case: &NetworkCase,
        retained: &[usize],
        edges: Vec<(usize, usize)>,
        line_labels: Vec<String>,
        susceptance: DVector<f64>,
        flow_map: Option<DMatrix<f64>>,
        initial_angles: DVector<f64>,
    ) -> Grid {
        let n = retained.len();
        let bus = |k: usize| &case.buses[retained[k]];
        let kinds: Vec<_> = (0..n).map(|k| bus(k).kind).collect();
        let incidence = super::incidence(n, &edges);
        let laplacian = super::weighted_laplacian(&incidence, &susceptance);
        let gm = graph_matrices(case);
        Grid {
            bus_ids: (0..n).map(|k| bus(k).id).collect(),
            inertia: DVector::from_fn(n, |k, _| bus(k).inertia),
            damping: DVector::from_fn(n, |k, _| bus(k).damping),
            injection: DVector::from_fn(n, |k, _| bus(k).injection),
            generators: (0..n).filter(|&k| kinds[k] == BusKind::Generator).collect(),
            loads: (0..n).filter(|&k| kinds[k] == BusKind::Load).collect(),
            kinds,
            edges,
            line_labels,
            susceptance,
            incidence,
            laplacian,
            flow_map,
            constrained_ids: case.lines.iter().map(|l| l.id).collect(),
            lower: DVector::from_iterator(case.lines.len(), case.lines.iter().map(|l| l.lower)),
            upper: DVector::from_iterator(case.lines.len(), case.lines.iter().map(|l| l.upper)),
            boundary: gm.area_boundary,
            area_ids: case.areas.iter().map(|a| a.id).collect(),
            export: DVector::from_iterator(case.areas.len(), case.areas.iter().map(|a| a.export)),
            area_constraints: !case.areas.is_empty(),
            initial_angles,
        }
    }

    pub fn n(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Number of constrained (original) lines.
    pub fn mc(&self) -> usize {
        self.constrained_ids.len()
    }

    pub fn k(&self) -> usize {
        self.area_ids.len()
    }

    /// Number of area rows that actually enter the constraints.
    pub fn active_areas(&self) -> usize {
        if self.area_constraints {
            self.k()
        } else {
            0
        }
    }

    pub fn bus_position(&self, id: i64) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }

    pub fn constrained_position(&self, id: i64) -> Option<usize> {
        self.constrained_ids.iter().position(|&l| l == id)
    }

    /// Adds step changes to the injections, keyed by bus id.
    pub fn apply_disturbance(&mut self, steps: &[(i64, f64)]) -> Result<()> {
        for &(id, dp) in steps {
            let i = self.bus_position(id).ok_or_else(|| {
                Error::InvalidScenario(format!("disturbance bus {id} is not a simulated bus"))
            })?;
            self.injection[i] += dp;
        }
        Ok(())
    }

    /// Replaces the limits of a constrained line.
    pub fn set_limits(&mut self, line_id: i64, lower: f64, upper: f64) -> Result<()> {
        let e = self
            .constrained_position(line_id)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown line id {line_id}")))?;
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvalidScenario(format!(
                "line {line_id}: limits [{lower}, {upper}] are not ordered"
            )));
        }
        self.lower[e] = lower;
        self.upper[e] = upper;
        Ok(())
    }

    /// `C P`: net flow leaving each bus.
    pub fn c_mul(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            out[i] += p[e];
            out[j] -= p[e];
        }
        out
    }

    /// `C^T v`: endpoint differences.
    pub fn ct_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.edges.iter().map(|&(i, j)| v[i] - v[j]))
    }

    /// `B C^T v`.
    pub fn line_flows(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.edges
                .iter()
                .zip(self.susceptance.iter())
                .map(|(&(i, j), b)| b * (v[i] - v[j])),
        )
    }

    /// `C B C^T v`.
    pub fn laplacian_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        self.c_mul(&self.line_flows(v))
    }

    /// Maps simulated line quantities onto the constrained lines.
    pub fn to_constrained(&self, p: &DVector<f64>) -> DVector<f64> {
        match &self.flow_map {
            Some(a) => a * p,
            None => p.clone(),
        }
    }

    /// Adjoint of `to_constrained`.
    pub fn from_constrained(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.flow_map {
            Some(a) => a.tr_mul(w),
            None => w.clone(),
        }
    }

    /// Virtual flows `A B C^T phi` on the constrained lines.
    pub fn virtual_flows(&self, phi: &DVector<f64>) -> DVector<f64> {
        self.to_constrained(&self.line_flows(phi))
    }

    /// `C B A^T w`, the bus-side image of line multipliers.
    pub fn constraint_adjoint(&self, w: &DVector<f64>) -> DVector<f64> {
        let lifted = self.from_constrained(w);
        let weighted = lifted.component_mul(&self.susceptance);
        self.c_mul(&weighted)
    }

    /// Initial physical flows `B C^T theta0`.
    pub fn initial_flows(&self) -> DVector<f64> {
        self.line_flows(&self.initial_angles)
    }

    /// Constrained lines with at least one finite bound.
    pub fn limited_lines(&self) -> Vec<usize> {
        (0..self.mc())
            .filter(|&e| self.lower[e].is_finite() || self.upper[e].is_finite())
            .collect()
    }

    /// Constrained lines that cross an area boundary.
    pub fn tie_lines(&self) -> Vec<usize> {
        (0..self.mc())
            .filter(|&e| (0..self.k()).any(|k| self.boundary[(k, e)] != 0.0))
            .collect()
    }

    /// Smallest damping over the simulated buses.
    pub fn min_damping(&self) -> f64 {
        self.damping.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

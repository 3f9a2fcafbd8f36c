//! End-to-end runs behind the command-line tool: simulate, solve, certify,
//! reduce and sweep.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::Serialize;

use crate::controller::{stability_bound, ClosedLoop, ControllerVariant};
use crate::error::{Error, Result};
use crate::integrator::{integrate, Trajectory};
use crate::netmodel::{kron_reduce, NetworkCase};
use crate::oracle::{
    equilibrium_state, kkt_residuals, lyapunov, solve_olc, swing_equilibrium_state, KktReport,
    OptimalSolution, SolverOptions,
};
use crate::par::Execution;
use crate::scenario::{Scenario, VariantKind};
use crate::tolerances::{AREA_EXPORT, LYAPUNOV_STEP_SLACK, THERMAL, TRAJECTORY_KKT};
use crate::trajectory::SampleRow;

/// Optimum of the scenario's load control problem on its grid.
pub fn solve_scenario(scenario: &Scenario) -> Result<OptimalSolution> {
    let grid = scenario.grid()?;
    let costs = scenario.costs_for(&grid);
    solve_olc(&grid, &costs, &SolverOptions::default())
}

/// Candidate optimal point read off a closed-loop state: `nu = omega`, and
/// for the distributed law each area multiplier is the mean over its lines.
pub fn candidate_from_sample(cl: &ClosedLoop, s: &SampleRow) -> OptimalSolution {
    let l = cl.layout;
    let z = &s.state;
    let v = |r: std::ops::Range<usize>| DVector::from_column_slice(&z[r]);
    let pi = match cl.comm() {
        None => v(l.pi()),
        Some(comm) => {
            let mut sum = DVector::zeros(cl.grid.k());
            let sizes = comm.area_sizes(cl.grid.k());
            for (p, &(k, _)) in comm.pairs.iter().enumerate() {
                sum[k] += z[l.pi().start + p] / sizes[k] as f64;
            }
            sum
        }
    };
    OptimalSolution {
        d: DVector::from_column_slice(&s.d),
        omega: DVector::from_column_slice(&s.omega),
        phi: v(l.phi()),
        flows: v(l.flows()),
        lambda: v(l.lambda()),
        nu: DVector::from_column_slice(&s.omega),
        pi,
        rho_plus: v(l.rho_plus()),
        rho_minus: v(l.rho_minus()),
        objective: f64::NAN,
        max_kkt_residual: f64::NAN,
    }
}

/// Derived rows for every recorded state.
pub fn derive_samples(cl: &ClosedLoop, traj: &Trajectory, reference: &[f64]) -> Result<Vec<SampleRow>> {
    let weights = cl.lyapunov_weights();
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, z)| {
            let (omega, d) = cl.algebraic(z)?;
            Ok(SampleRow {
                t,
                state: z.clone(),
                omega: omega.as_slice().to_vec(),
                d: d.as_slice().to_vec(),
                lyapunov: lyapunov(&weights, z, reference),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationSummary {
    pub variant: String,
    pub converged: bool,
    pub final_time: f64,
    pub final_field_norm: f64,
    pub final_max_abs_omega: f64,
    pub final_mean_omega: f64,
    /// Physical flows on tie lines, keyed by line id.
    pub tie_line_flows: BTreeMap<String, f64>,
    /// `Cbar P - Phat` per area id on the physical flows.
    pub area_export_mismatch: BTreeMap<String, f64>,
    pub final_kkt_residual: Option<f64>,
    /// Largest gap between the final loads and the oracle's.
    pub load_gap_to_oracle: Option<f64>,
    pub oracle_objective: Option<f64>,
    pub max_lyapunov_excess: f64,
}

/// Everything produced by one simulation.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub closed_loop: ClosedLoop,
    pub trajectory: Trajectory,
    pub samples: Vec<SampleRow>,
    pub optimum: Option<OptimalSolution>,
    pub summary: SimulationSummary,
}

/// Physical flows on the constrained (original) lines.
fn physical_flows(cl: &ClosedLoop, z: &[f64]) -> DVector<f64> {
    cl.grid.to_constrained(&DVector::from_column_slice(&z[cl.layout.flows()]))
}

fn tie_flows(cl: &ClosedLoop, flows: &DVector<f64>) -> BTreeMap<String, f64> {
    cl.grid
        .tie_lines()
        .into_iter()
        .map(|e| (cl.grid.constrained_ids[e].to_string(), flows[e]))
        .collect()
}

fn export_mismatch(cl: &ClosedLoop, flows: &DVector<f64>) -> BTreeMap<String, f64> {
    let r = &cl.grid.boundary * flows - &cl.grid.export;
    cl.grid
        .area_ids
        .iter()
        .enumerate()
        .map(|(k, id)| (id.to_string(), r[k]))
        .collect()
}

/// Largest `U_{k+1} - U_k - slack * steps` over consecutive samples.
pub fn lyapunov_excess(samples: &[SampleRow], dt: f64) -> f64 {
    samples
        .windows(2)
        .map(|w| {
            let steps = ((w[1].t - w[0].t) / dt).round().max(1.0);
            w[1].lyapunov - w[0].lyapunov - LYAPUNOV_STEP_SLACK * steps
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Integrates a scenario and summarizes the outcome.
pub fn simulate(scenario: &Scenario) -> Result<SimulationRun> {
    let cl = scenario.closed_loop()?;
    let (optimum, reference) = match cl.variant {
        ControllerVariant::SwingOnly => (None, swing_equilibrium_state(&cl)?),
        _ => {
            let sol = solve_olc(&cl.grid, &cl.costs, &SolverOptions::default())?;
            let z = equilibrium_state(&cl, &sol)?;
            (Some(sol), z)
        }
    };
    let trajectory = integrate(&cl, &cl.initial_state(), &scenario.integrator)?;
    let samples = derive_samples(&cl, &trajectory, &reference)?;
    let last = samples.last().expect("at least one sample");

    let flows = physical_flows(&cl, &last.state);
    let (kkt, gap) = match (&cl.variant, &optimum) {
        (ControllerVariant::SwingOnly, _) | (_, None) => (None, None),
        (_, Some(sol)) => {
            let cand = candidate_from_sample(&cl, last);
            let report = kkt_residuals(&cl.grid, &cl.costs, &cand)?;
            let gap = (&cand.d - &sol.d).amax();
            (Some(report.max_residual), Some(gap))
        }
    };
    let omega_max = last.omega.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let summary = SimulationSummary {
        variant: scenario.variant.as_str().to_string(),
        converged: trajectory.converged,
        final_time: trajectory.final_time(),
        final_field_norm: trajectory.final_field_norm,
        final_max_abs_omega: omega_max,
        final_mean_omega: last.omega.iter().sum::<f64>() / last.omega.len() as f64,
        tie_line_flows: tie_flows(&cl, &flows),
        area_export_mismatch: export_mismatch(&cl, &flows),
        final_kkt_residual: kkt,
        load_gap_to_oracle: gap,
        oracle_objective: optimum.as_ref().map(|o| o.objective),
        max_lyapunov_excess: lyapunov_excess(&samples, trajectory.dt),
    };
    Ok(SimulationRun {
        closed_loop: cl,
        trajectory,
        samples,
        optimum,
        summary,
    })
}

/// Outcome of certifying the last sample of a trajectory.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Certification {
    pub passed: bool,
    pub kkt: KktReport,
    pub kkt_passed: bool,
    pub max_area_mismatch: f64,
    pub area_passed: bool,
    pub max_thermal_violation: f64,
    pub thermal_passed: bool,
    pub max_lyapunov_excess: f64,
    pub lyapunov_passed: bool,
    pub tie_line_flows: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

/// Checks optimality of the final state, the inter-area and thermal
/// properties of the physical flows, and monotonicity of `U`.
/// `flow_limit` only adds notes about tie lines carrying more than it.
pub fn certify(cl: &ClosedLoop, samples: &[SampleRow], dt: f64, flow_limit: Option<f64>) -> Result<Certification> {
    let last = samples
        .last()
        .ok_or_else(|| Error::Csv("trajectory has no samples".into()))?;
    let cand = candidate_from_sample(cl, last);
    let kkt = kkt_residuals(&cl.grid, &cl.costs, &cand)?;
    let flows = physical_flows(cl, &last.state);
    let g = &cl.grid;

    let max_area = if g.area_constraints {
        export_mismatch(cl, &flows).values().fold(0.0f64, |m, r| m.max(r.abs()))
    } else {
        0.0
    };
    let mut thermal = 0.0f64;
    for e in 0..g.mc() {
        thermal = thermal.max(flows[e] - g.upper[e]).max(g.lower[e] - flows[e]);
    }
    let excess = lyapunov_excess(samples, dt);
    let ties = tie_flows(cl, &flows);

    let mut notes = Vec::new();
    if let Some((id, p)) = ties
        .iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
    {
        notes.push(format!("largest tie-line flow: line {id} carries {p:.6} p.u."));
    }
    if let Some(limit) = flow_limit {
        for (id, p) in &ties {
            if p.abs() > limit {
                notes.push(format!("tie line {id} exceeds {limit} p.u. ({p:.6})"));
            }
        }
    }
    if !g.area_constraints {
        notes.push("area constraints disabled; export mismatch not certified".into());
    }

    let kkt_passed = kkt.max_residual < TRAJECTORY_KKT;
    let area_passed = max_area < AREA_EXPORT;
    let thermal_passed = thermal <= THERMAL;
    let lyapunov_passed = excess <= 0.0;
    Ok(Certification {
        passed: kkt_passed && area_passed && thermal_passed && lyapunov_passed,
        kkt,
        kkt_passed,
        max_area_mismatch: max_area,
        area_passed,
        max_thermal_violation: thermal.max(0.0),
        thermal_passed,
        max_lyapunov_excess: excess,
        lyapunov_passed,
        tie_line_flows: ties,
        notes,
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepEntry {
    pub delta_a: f64,
    pub converged: bool,
    pub diverged: bool,
    pub final_time: f64,
    /// Absent when the run diverged.
    pub final_max_abs_omega: Option<f64>,
    pub final_field_norm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepReport {
    /// Open interval of homogeneous perturbations with guaranteed convergence.
    pub stability_interval: (f64, f64),
    pub min_damping: f64,
    pub min_slope: f64,
    pub entries: Vec<SweepEntry>,
}

fn sweep_one(scenario: &Scenario, delta_a: f64) -> Result<SweepEntry> {
    let mut s = scenario.clone();
    s.variant = VariantKind::Perturbed;
    s.delta_a = delta_a;
    let cl = s.closed_loop()?;
    let entry = match integrate(&cl, &cl.initial_state(), &s.integrator) {
        Ok(traj) => {
            let (omega, _) = cl.algebraic(traj.final_state())?;
            SweepEntry {
                delta_a,
                converged: traj.converged,
                diverged: false,
                final_time: traj.final_time(),
                final_max_abs_omega: Some(omega.amax()),
                final_field_norm: Some(traj.final_field_norm),
                error: None,
            }
        }
        Err(e @ (Error::Divergence { .. } | Error::RootSolve { .. })) => SweepEntry {
            delta_a,
            converged: false,
            diverged: true,
            final_time: match e {
                Error::Divergence { t, .. } => t,
                _ => f64::NAN,
            },
            final_max_abs_omega: None,
            final_field_norm: None,
            error: Some(e.to_string()),
        },
        Err(e) => return Err(e),
    };
    Ok(entry)
}

/// Runs the perturbed law once per `delta_a`; runs are independent and are
/// spread over threads according to `exec`.
pub fn sweep_delta_a(scenario: &Scenario, deltas: &[f64], exec: Execution) -> Result<SweepReport> {
    let grid = scenario.grid()?;
    let costs = scenario.costs_for(&grid);
    if costs.iter().any(|c| !c.has_finite_curvature()) {
        return Err(Error::InvalidScenario(
            "the delta-a sweep needs quadratic (bounded-curvature) costs".into(),
        ));
    }
    let min_slope = costs.iter().map(|c| c.min_slope()).fold(f64::INFINITY, f64::min);
    let min_damping = grid.min_damping();
    let interval = stability_bound(min_damping, min_slope)?;
    let entries = exec
        .map(deltas, |&da| sweep_one(scenario, da))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        stability_interval: interval,
        min_damping,
        min_slope,
        entries,
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReducedLineReport {
    pub from: i64,
    pub to: i64,
    #[serde(rename = "B")]
    pub susceptance: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReductionReport {
    pub retained: Vec<i64>,
    pub eliminated: Vec<i64>,
    pub lines: Vec<ReducedLineReport>,
    /// Original line ids labelling the rows of `flowRecovery`.
    pub original_lines: Vec<i64>,
    /// Row-major `|E| x |E#|` matrix.
    pub flow_recovery: Vec<Vec<f64>>,
}

pub fn reduce(case: &NetworkCase) -> Result<ReductionReport> {
    let red = kron_reduce(case)?;
    let id = |i: usize| case.buses[i].id;
    Ok(ReductionReport {
        retained: red.retained.iter().map(|&i| id(i)).collect(),
        eliminated: red.eliminated.iter().map(|&i| id(i)).collect(),
        lines: red
            .lines
            .iter()
            .map(|l| ReducedLineReport {
                from: id(red.retained[l.from]),
                to: id(red.retained[l.to]),
                susceptance: l.susceptance,
            })
            .collect(),
        original_lines: case.lines.iter().map(|l| l.id).collect(),
        flow_recovery: red
            .flow_recovery
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
    })
}

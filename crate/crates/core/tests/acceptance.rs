//! End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{case, ieee39, max_abs_diff, three_bus, tie_limits, two_bus, QUADRATIC, TANH};
use nalgebra::{DVector, SymmetricEigen};
use olc::controller::stability_bound;
use olc::costs::CostModel;
use olc::experiments::{reduce, simulate, sweep_delta_a, SimulationRun};
use olc::netmodel::Grid;
use olc::oracle::h_matrix;
use olc::par::Execution;
use olc::scenario::{Scenario, VariantKind};
use olc::verify::{random_point, run_verification, Analytic, Subject, VerifyOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Gate {
    failures: usize,
}

impl Gate {
    fn report(&mut self, id: u32, passed: bool, detail: String) {
        let verdict = if passed { "PASS" } else { "FAIL" };
        println!("criterion {id}: {verdict}  {detail}");
        if !passed {
            self.failures += 1;
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn run(s: &Scenario) -> SimulationRun {
    simulate(s).unwrap_or_else(|e| panic!("simulation failed: {e}"))
}

fn final_vec(r: &SimulationRun, range: std::ops::Range<usize>) -> Vec<f64> {
    r.samples.last().unwrap().state[range].to_vec()
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Largest violation of the original-network constraints by the physical
/// flows a reduced run ends with: line limits, area schedules and power
/// balance at the eliminated buses.
fn original_constraint_violation(r: &SimulationRun, full: &olc::netmodel::NetworkCase) -> f64 {
    let g = &r.closed_loop.grid;
    let p = DVector::from_column_slice(&final_vec(r, r.closed_loop.layout.flows()));
    let flows = g.to_constrained(&p);
    let mut worst = 0.0f64;
    for e in 0..g.mc() {
        worst = worst.max(flows[e] - g.upper[e]).max(g.lower[e] - flows[e]);
    }
    worst = worst.max(max_abs((&g.boundary * &flows - &g.export).iter().copied()));
    for i in full.zero_buses() {
        let net: f64 = full
            .lines
            .iter()
            .enumerate()
            .map(|(e, l)| match (l.from == i, l.to == i) {
                (true, _) => flows[e],
                (_, true) => -flows[e],
                _ => 0.0,
            })
            .sum();
        worst = worst.max(net.abs());
    }
    worst
}

fn main() -> ExitCode {
    let mut gate = Gate { failures: 0 };

    // Simulations shared by several criteria.
    let (base, base_time) = timed(|| run(&ieee39(VariantKind::Base)));
    let mut swing = ieee39(VariantKind::SwingOnly);
    swing.integrator.t_end = 100.0;
    let swing = run(&swing);
    let mut no_area = ieee39(VariantKind::Base);
    no_area.area_constraints = false;
    let no_area = run(&no_area);
    let mut limited = ieee39(VariantKind::Base);
    limited.thermal_limits = tie_limits(2.6);
    let limited = run(&limited);
    let mut reduced = ieee39(VariantKind::Reduced);
    reduced.thermal_limits = tie_limits(2.6);
    let reduced = run(&reduced);
    let distributed = run(&ieee39(VariantKind::DistributedArea));
    let small = [
        ("two_bus/quadratic", run(&two_bus(QUADRATIC))),
        ("two_bus/tanh", run(&two_bus(TANH))),
        ("three_bus/quadratic", run(&three_bus(QUADRATIC))),
        ("three_bus/tanh", run(&three_bus(TANH))),
    ];

    // 1. Frequency restoration on the 39-bus system.
    {
        let s = &base.summary;
        let at40 = base
            .samples
            .iter()
            .find(|r| (r.t - 40.0).abs() < 1e-9)
            .map(|r| max_abs(r.omega.iter().copied()));
        let w = final_vec(&swing, swing.closed_loop.layout.omega_g());
        let spread = w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - w.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let swing_ok = swing.summary.converged && spread < 1e-6 && swing.summary.final_mean_omega.abs() > 1e-3;
        let passed = s.converged && s.final_max_abs_omega < 1e-4 && swing_ok && base_time.as_secs_f64() < 60.0;
        gate.report(
            1,
            passed,
            format!(
                "base converged={} at t={:.1}s max|w|={:.2e} (at 40 s: {}), swing-only w*={:.5} spread={:.1e}, runtime {:.1}s",
                s.converged,
                s.final_time,
                s.final_max_abs_omega,
                at40.map_or("n/a".into(), |v| format!("{v:.2e}")),
                swing.summary.final_mean_omega,
                spread,
                base_time.as_secs_f64()
            ),
        );
    }

    // 2. Optimality of every converged run and agreement with the oracle.
    {
        let mut worst_kkt = 0.0f64;
        let mut all_converged = true;
        let runs: Vec<(&str, &SimulationRun)> = [
            ("ieee39/base", &base),
            ("ieee39/no-area", &no_area),
            ("ieee39/limited", &limited),
            ("ieee39/reduced", &reduced),
            ("ieee39/distributed", &distributed),
        ]
        .into_iter()
        .chain(small.iter().map(|(n, r)| (*n, r)))
        .collect();
        for (name, r) in &runs {
            all_converged &= r.summary.converged;
            match r.summary.final_kkt_residual {
                Some(k) => worst_kkt = worst_kkt.max(k),
                None => panic!("{name}: no KKT residual"),
            }
        }
        let mut worst_gap = 0.0f64;
        for r in [&base, &small[0].1, &small[1].1, &small[2].1, &small[3].1] {
            let sol = r.optimum.as_ref().unwrap();
            let last = r.samples.last().unwrap();
            worst_gap = worst_gap
                .max(max_abs_diff(&last.d, sol.d.as_slice()))
                .max(max_abs_diff(&final_vec(r, r.closed_loop.layout.lambda()), sol.lambda.as_slice()));
        }
        gate.report(
            2,
            all_converged && worst_kkt < 1e-6 && worst_gap < 1e-5,
            format!("{} runs, max KKT {worst_kkt:.2e}, max (d, lambda) gap to oracle {worst_gap:.2e}", runs.len()),
        );
    }

    // 3. Inter-area schedules.
    {
        let on = max_abs(base.summary.area_export_mismatch.values().copied());
        let off = max_abs(no_area.summary.area_export_mismatch.values().copied());
        gate.report(
            3,
            on < 1e-5 && off > 1e-3,
            format!("areas on: max |Cbar P - Phat| {on:.2e}; areas off: {off:.3}"),
        );
    }

    // 4. Tie-line limits.
    {
        let free = max_abs(base.summary.tie_line_flows.values().copied());
        let capped = max_abs(limited.summary.tie_line_flows.values().copied());
        gate.report(
            4,
            free > 2.6 && capped <= 2.6 + 1e-6 && limited.summary.converged,
            format!("unlimited max |tie| {free:.4}; limited to 2.6: max |tie| {capped:.9}"),
        );
    }

    // 5. Lyapunov monotonicity.
    {
        let all: Vec<&SimulationRun> = [&base, &swing, &no_area, &limited, &reduced, &distributed]
            .into_iter()
            .chain(small.iter().map(|(_, r)| r))
            .collect();
        let worst = all.iter().map(|r| r.summary.max_lyapunov_excess).fold(f64::NEG_INFINITY, f64::max);
        gate.report(
            5,
            worst <= 0.0,
            format!("{} runs, largest per-sample increase beyond the 1e-7/step slack {worst:.2e}", all.len()),
        );
    }

    // 6. Robustness to frequency-gain perturbations.
    {
        let mut s = ieee39(VariantKind::Perturbed);
        s.default_cost = QUADRATIC;
        s.integrator.dt = 1e-3;
        s.integrator.t_end = 3000.0;
        s.integrator.stride = 1000;
        let deltas = [-0.4, -0.2, -0.19, 0.0];
        let report = sweep_delta_a(&s, &deltas, Execution::Parallel).unwrap();
        let e = |da: f64| report.entries.iter().find(|e| e.delta_a == da).unwrap();
        let restored = |da: f64| e(da).converged && e(da).final_max_abs_omega.unwrap() < 1e-4;
        let offset = e(-0.2).converged && e(-0.2).final_max_abs_omega.unwrap() > 1e-3;
        let unstable = !e(-0.4).converged;
        let (lo, hi) = report.stability_interval;
        let interval_ok = (lo + 0.1909).abs() < 1e-4 && (hi - 4.1909).abs() < 1e-4;

        let grid = s.grid().unwrap();
        let costs = s.costs_for(&grid);
        let top = h_matrix_peak(&grid, &costs, (lo, hi), 100);
        gate.report(
            6,
            restored(-0.19) && restored(0.0) && offset && unstable && interval_ok && top <= 1e-9,
            format!(
                "da=0: {:.1e}, da=-0.19: {:.1e}, da=-0.2: w*={:.4}, da=-0.4: {}, interval ({lo:.4}, {hi:.4}), max eig H {top:.1e}",
                e(0.0).final_max_abs_omega.unwrap_or(f64::NAN),
                e(-0.19).final_max_abs_omega.unwrap_or(f64::NAN),
                e(-0.2).final_max_abs_omega.unwrap_or(f64::NAN),
                if e(-0.4).diverged { format!("diverged at t={:.1}s", e(-0.4).final_time) } else { format!("converged={}", e(-0.4).converged) },
            ),
        );
    }

    // 7. Derivative checks.
    {
        let ((passed, detail), elapsed) = timed(|| {
            let mut passed = true;
            let mut worst = Vec::new();
            for (label, cost) in [("tanh", TANH), ("quadratic", QUADRATIC)] {
                let mut s = ieee39(VariantKind::Base);
                s.default_cost = cost;
                let cl = s.closed_loop().unwrap();
                let subject = Subject { grid: &cl.grid, costs: &cl.costs, gains: &cl.gains, case: None };
                let report = run_verification(&subject, &Analytic, &VerifyOptions::default()).unwrap();
                passed &= report.passed;
                for name in ["gradient_fd", "nu_jacobian_fd", "hessian_fd", "field_equivalence"] {
                    let p = report.property(name).unwrap();
                    passed &= !p.skipped;
                    worst.push(format!("{label} {name} {:.1e}", p.max_error));
                }
            }
            (passed, worst.join(", "))
        });
        gate.report(
            7,
            passed && elapsed.as_secs_f64() < 30.0,
            format!("{detail}; runtime {:.1}s", elapsed.as_secs_f64()),
        );
    }

    // 8. Kron reduction.
    {
        let red = reduce(&case("three_bus_zero.json")).unwrap();
        let exact = red.lines.len() == 1
            && (red.lines[0].susceptance - 0.5).abs() < 1e-12
            && red.flow_recovery.len() == 2
            && red.flow_recovery.iter().all(|row| (row[0] - 1.0).abs() < 1e-12);
        let violation = original_constraint_violation(&reduced, &case("ieee39_zero.json"));
        gate.report(
            8,
            exact && reduced.summary.converged && violation <= 1e-6,
            format!(
                "3-bus B#={:.15} A#={:?}; 39-bus reduced: converged={} original-constraint violation {violation:.1e}",
                red.lines[0].susceptance,
                red.flow_recovery.iter().map(|r| r[0]).collect::<Vec<_>>(),
                reduced.summary.converged
            ),
        );
    }

    // 9. Distributed inter-area law.
    {
        let mismatch = max_abs(distributed.summary.area_export_mismatch.values().copied());
        let gap = max_abs_diff(&distributed.samples.last().unwrap().d, &base.samples.last().unwrap().d);
        gate.report(
            9,
            distributed.summary.converged && mismatch < 1e-5 && gap < 1e-5,
            format!("max |Cbar P - Phat| {mismatch:.2e}, load gap to the centralized run {gap:.2e}"),
        );
    }

    if gate.failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", gate.failures);
        ExitCode::FAILURE
    }
}

/// Largest eigenvalue of H over random states and perturbations strictly
/// inside the stability interval.
fn h_matrix_peak(grid: &Grid, costs: &[CostModel], (lo, hi): (f64, f64), samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let slope = costs.iter().map(|c| c.min_slope()).fold(f64::INFINITY, f64::min);
    assert_eq!(stability_bound(grid.min_damping(), slope).unwrap(), (lo, hi));
    (0..samples)
        .map(|_| {
            let (x, y) = random_point(grid, &mut rng);
            let da = DVector::from_element(grid.n(), rng.gen_range(lo..hi) * 0.999);
            let h = h_matrix(grid, costs, &x, &y, &da).unwrap();
            SymmetricEigen::new(h).eigenvalues.max()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

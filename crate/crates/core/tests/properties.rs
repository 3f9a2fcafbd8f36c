mod common;

use common::qp::brute_force;
use common::{case, three_bus, QUADRATIC, TANH};
use nalgebra::DVector;
use olc::controller::{project_positive, stability_bound};
use olc::costs::CostModel;
use olc::dynamics::solve_bus_frequency;
use olc::netmodel::{dc_power_flow, kron_reduce, laplacian_pinv, Grid, NetworkCase};
use olc::oracle::{kkt_residuals, solve_olc, SolverOptions};
use olc::par::Execution;
use olc::scenario::Scenario;
use olc::tolerances::ROOT_RESIDUAL;
use olc::verify::{run_verification, Analytic, Subject, VerifyOptions};
use proptest::prelude::*;
use serde_json::json;

fn cost_model() -> impl Strategy<Value = CostModel> {
    prop_oneof![
        (0.2..5.0f64).prop_map(|b| CostModel::Quadratic { b }),
        (0.2..3.0f64, 0.2..3.0f64).prop_map(|(dmax, m)| CostModel::SaturatingTanh { dmax, m }),
    ]
}

/// A connected random network: a random spanning tree plus extra lines.
#[derive(Debug, Clone)]
struct RandomNet {
    kinds: Vec<&'static str>,
    pin: Vec<f64>,
    lines: Vec<(usize, usize, f64)>,
}

fn random_net(max_buses: usize, zero_buses: bool) -> impl Strategy<Value = RandomNet> {
    (3..=max_buses).prop_flat_map(move |n| {
        let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
        let kinds = prop::collection::vec(
            if zero_buses { 0..3usize } else { 0..2usize },
            n,
        );
        (
            parents,
            prop::collection::vec((0..n, 0..n, 0.5..5.0f64), 0..n),
            prop::collection::vec(0.5..5.0f64, n - 1),
            kinds,
            prop::collection::vec(-1.0..1.0f64, n),
        )
            .prop_map(move |(parents, extra, tree_b, kinds, pin)| {
                let mut lines: Vec<(usize, usize, f64)> = parents
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| (p, k + 1, tree_b[k]))
                    .collect();
                for (a, b, s) in extra {
                    let dup = lines
                        .iter()
                        .any(|&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a));
                    if a != b && !dup {
                        lines.push((a, b, s));
                    }
                }
                // Bus 0 is a generator and the last bus a load so the case
                // can always be balanced.
                let mut kinds: Vec<&'static str> = kinds
                    .iter()
                    .map(|k| ["generator", "load", "zero"][*k])
                    .collect();
                kinds[0] = "generator";
                kinds[n - 1] = "load";
                let pin = pin
                    .iter()
                    .zip(&kinds)
                    .map(|(p, k)| if *k == "zero" { 0.0 } else { *p })
                    .collect();
                RandomNet { kinds, pin, lines }
            })
    })
}

impl RandomNet {
    fn case(&self) -> NetworkCase {
        let buses: Vec<_> = self
            .kinds
            .iter()
            .zip(&self.pin)
            .enumerate()
            .map(|(i, (k, p))| match *k {
                "generator" => json!({"id": i + 1, "kind": k, "M": 1.0, "Pin": p}),
                _ => json!({"id": i + 1, "kind": k, "Pin": p}),
            })
            .collect();
        let lines: Vec<_> = self
            .lines
            .iter()
            .enumerate()
            .map(|(e, &(a, b, s))| json!({"id": e + 1, "from": a + 1, "to": b + 1, "B": s}))
            .collect();
        let text = json!({"baseMVA": 100, "buses": buses, "lines": lines}).to_string();
        NetworkCase::from_json_str(&text).expect("random case is valid")
    }
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn response_inverts_the_marginal_cost(c in cost_model(), t in -0.99..0.99f64) {
        let (lo, hi) = c.domain();
        let d = if hi.is_finite() { t * hi } else { 5.0 * t };
        let xi = c.marginal(d).unwrap();
        prop_assert!((c.load_response(xi) - d).abs() < 1e-12 * d.abs().max(1.0));
        prop_assert!(d > lo && d < hi);
    }

    #[test]
    fn response_is_increasing_with_reciprocal_slope(c in cost_model(), t in -1.0..1.0f64, gap in 1e-3..1.0f64) {
        // Deep in saturation d rounds to within a few ulp of dmax and c''(d)
        // loses all precision, so the identity is only checked where tanh(xi/m)
        // is resolvable; monotonicity is checked on the full range below.
        let a = match c {
            CostModel::SaturatingTanh { m, .. } => 5.0 * m * t,
            CostModel::Quadratic { .. } => 3.0 * t,
        };
        prop_assert!(c.load_response(a + gap) > c.load_response(a));
        let d = c.load_response(a);
        let slope = c.response_slope(a);
        prop_assert!((slope * c.curvature(d).unwrap() - 1.0).abs() < 1e-10);
        prop_assert!(slope >= c.min_slope() * (1.0 - 1e-15));
    }

    #[test]
    fn response_is_nondecreasing_everywhere(c in cost_model(), a in -50.0..50.0f64, gap in 1e-3..10.0f64) {
        let (lo, hi) = c.domain();
        let (x, y) = (c.load_response(a), c.load_response(a + gap));
        prop_assert!(y >= x);
        prop_assert!(x >= lo && y <= hi);
    }

    #[test]
    fn conjugate_is_the_legendre_transform(c in cost_model(), t in -1.0..1.0f64) {
        // The direct form loses precision in saturation for the same reason
        // as the slope identity.
        let xi = match c {
            CostModel::SaturatingTanh { m, .. } => 5.0 * m * t,
            CostModel::Quadratic { .. } => 3.0 * t,
        };
        let d = c.load_response(xi);
        let direct = xi * d - c.cost(d).unwrap();
        prop_assert!((c.conjugate(xi) - direct).abs() < 1e-10);
    }

    #[test]
    fn conjugate_derivative_is_the_response(c in cost_model(), xi in -50.0..50.0f64) {
        let h = 1e-5;
        let fd = (c.conjugate(xi + h) - c.conjugate(xi - h)) / (2.0 * h);
        prop_assert!((fd - c.load_response(xi)).abs() < 1e-6 * xi.abs().max(1.0));
    }

    #[test]
    fn projected_step_keeps_multipliers_nonnegative(
        rho in prop::collection::vec(0.0..2.0f64, 1..8),
        rate_seed in prop::collection::vec(-5.0..5.0f64, 8),
        dt in 1e-4..0.5f64,
    ) {
        let u = dv(&rho);
        let mut a = dv(&rate_seed[..rho.len()]);
        // Any rate that would cross zero is already active; scale it so a
        // forward Euler step lands exactly on or above zero.
        for i in 0..a.len() {
            if u[i] + dt * a[i] < 0.0 {
                a[i] = -u[i] / dt;
            }
        }
        let mask = vec![true; rho.len()];
        let p = project_positive(&a, &u, &mask);
        for i in 0..rho.len() {
            prop_assert!(u[i] + dt * p[i] >= -1e-15);
            if u[i] == 0.0 {
                prop_assert!(p[i] >= 0.0);
            }
        }
    }

    #[test]
    fn incidence_products_are_adjoint(net in random_net(8, false), seed in any::<u64>()) {
        let grid = Grid::base(&net.case()).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        use rand::Rng;
        let p = DVector::from_fn(grid.m(), |_, _| rng.gen_range(-1.0..1.0));
        let v = DVector::from_fn(grid.n(), |_, _| rng.gen_range(-1.0..1.0));
        prop_assert!((grid.c_mul(&p).dot(&v) - p.dot(&grid.ct_mul(&v))).abs() < 1e-12);
        prop_assert!((grid.laplacian_mul(&v) - &grid.laplacian * &v).amax() < 1e-12);
        prop_assert!((grid.constraint_adjoint(&p).dot(&v) - p.dot(&grid.virtual_flows(&v))).abs() < 1e-12);
    }

    #[test]
    fn laplacian_is_a_connected_graph_laplacian(net in random_net(8, false)) {
        let grid = Grid::base(&net.case()).unwrap();
        let l = &grid.laplacian;
        prop_assert!((l - l.transpose()).amax() == 0.0);
        for i in 0..grid.n() {
            prop_assert!(l.row(i).sum().abs() < 1e-12);
        }
        let eig = l.clone().symmetric_eigen();
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        prop_assert!(values[0].abs() < 1e-10);
        prop_assert!(values[1] > 1e-8);
        let pinv = laplacian_pinv(l).unwrap();
        prop_assert!((l * &pinv * l - l).amax() < 1e-9);
    }

    #[test]
    fn kron_reduction_preserves_retained_angles(net in random_net(8, true)) {
        let case = net.case();
        let red = kron_reduce(&case).unwrap();
        let l = &red.laplacian;
        prop_assert!((l - l.transpose()).amax() < 1e-12);
        for i in 0..l.nrows() {
            prop_assert!(l.row(i).sum().abs() < 1e-10);
            for j in 0..l.ncols() {
                if i != j {
                    prop_assert!(l[(i, j)] <= 1e-12);
                }
            }
        }
        // The full DC flow restricted to retained buses solves the reduced
        // problem, and the recovery map rebuilds every original flow.
        let balanced = case.balance_injections().unwrap();
        let full = dc_power_flow(&balanced).unwrap();
        let theta = DVector::from_iterator(red.retained.len(), red.retained.iter().map(|&i| full.angles[i]));
        let p = DVector::from_iterator(red.retained.len(), red.retained.iter().map(|&i| balanced.buses[i].injection));
        prop_assert!((l * &theta - &p).amax() < 1e-9);
        let reduced_flows = DVector::from_fn(red.lines.len(), |e, _| {
            let line = &red.lines[e];
            line.susceptance * (theta[line.from] - theta[line.to])
        });
        prop_assert!((&red.flow_recovery * reduced_flows - &full.flows).amax() < 1e-9);
    }

    #[test]
    fn oracle_matches_brute_force_on_random_networks(
        net in random_net(6, false),
        slopes in prop::collection::vec(0.3..3.0f64, 6),
        step in -1.0..1.0f64,
        limit_line in 0usize..6,
        limit in 0.05..1.0f64,
    ) {
        let case = net.case();
        let mut s = Scenario::new(case);
        let last = net.kinds.len() as i64;
        s.disturbance = vec![(last, step)];
        let line = (limit_line % net.lines.len()) as i64 + 1;
        s.thermal_limits = vec![(line, -limit, limit)];
        let mut grid = s.grid().unwrap();
        grid.area_constraints = false;
        let b = &slopes[..grid.n()];
        let costs: Vec<CostModel> = b.iter().map(|&b| CostModel::Quadratic { b }).collect();
        let gauge = grid.initial_angles.sum();
        let reference = brute_force(&grid, b, gauge);
        match solve_olc(&grid, &costs, &SolverOptions::default()) {
            Ok(sol) => {
                let qp = reference.expect("solver found a point the reference missed");
                prop_assert!((sol.d.clone() - &qp.d).amax() < 1e-8);
                prop_assert!((sol.objective - qp.objective).abs() < 1e-9);
                prop_assert!(kkt_residuals(&grid, &costs, &sol).unwrap().max_residual < 1e-9);
            }
            Err(olc::Error::Infeasible(_)) => prop_assert!(reference.is_none()),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn stability_interval_contains_zero_above_minus_damping(d in 1e-3..5.0f64, s in 1e-3..10.0f64) {
        let (lo, hi) = stability_bound(d, s).unwrap();
        prop_assert!(lo < 0.0 && 0.0 < hi);
        prop_assert!(lo > -d);
    }

    #[test]
    fn bus_frequency_root_has_small_residual(
        c in cost_model(),
        damping in 0.05..2.0f64,
        lambda in -20.0..20.0f64,
        surplus in -20.0..20.0f64,
    ) {
        let w = solve_bus_frequency(Some(&c), damping, lambda, surplus, 0).unwrap();
        let f = surplus - damping * w - c.load_response(lambda + w);
        prop_assert!(f.abs() <= ROOT_RESIDUAL * surplus.abs().max(lambda.abs()).max(1.0));
    }
}

#[test]
fn verification_passes_for_many_seeds() {
    for cost in [QUADRATIC, TANH] {
        let s = three_bus(cost);
        let cl = s.closed_loop().unwrap();
        let subject = Subject {
            grid: &cl.grid,
            costs: &cl.costs,
            gains: &cl.gains,
            case: None,
        };
        for seed in 0..10 {
            let opts = VerifyOptions {
                seed,
                samples: 100,
                fd_samples: 10,
                execution: Execution::Parallel,
            };
            let report = run_verification(&subject, &Analytic, &opts).unwrap();
            assert!(report.passed, "seed {seed}: {:?}", report.properties);
        }
    }
}

#[test]
fn verification_is_independent_of_execution_mode() {
    let mut s = Scenario::new(case("three_bus_zero.json"));
    s.variant = olc::scenario::VariantKind::Reduced;
    let grid = s.grid().unwrap();
    let costs = s.costs_for(&grid);
    let gains = olc::controller::ControllerGains::uniform(&grid, 1.0);
    let c = case("three_bus_zero.json");
    let subject = Subject { grid: &grid, costs: &costs, gains: &gains, case: Some(&c) };
    let run = |execution| {
        let opts = VerifyOptions { seed: 4, samples: 200, fd_samples: 10, execution };
        serde_json::to_string(&run_verification(&subject, &Analytic, &opts).unwrap()).unwrap()
    };
    let par = run(Execution::Parallel);
    assert_eq!(par, run(Execution::Sequential));
    assert!(par.contains("\"passed\":true"));
}

/// Analytic gradient with a deliberately wrong primal Hessian block.
struct CorruptHessian;

impl olc::verify::Derivatives for CorruptHessian {
    fn hessians(
        &self,
        grid: &Grid,
        costs: &[CostModel],
        x: &olc::oracle::Primal,
        y: &olc::oracle::Dual,
    ) -> olc::Result<olc::oracle::Hessians> {
        let mut h = olc::oracle::hessians(grid, costs, x, y)?;
        let n = h.xx.nrows();
        h.xx += nalgebra::DMatrix::<f64>::identity(n, n) * 0.1;
        Ok(h)
    }
}

#[test]
fn verification_catches_a_wrong_hessian() {
    let cl = three_bus(QUADRATIC).closed_loop().unwrap();
    let subject = Subject { grid: &cl.grid, costs: &cl.costs, gains: &cl.gains, case: None };
    let opts = VerifyOptions { samples: 50, fd_samples: 10, ..VerifyOptions::default() };
    let report = run_verification(&subject, &Analytic, &opts).unwrap();
    assert!(report.passed);
    let report = run_verification(&subject, &CorruptHessian, &opts).unwrap();
    assert!(!report.passed);
    let hfd = report.property("hessian_fd").unwrap();
    assert!(!hfd.passed && hfd.max_error > 0.05);
    let failed: Vec<_> = report.properties.iter().filter(|p| !p.passed).map(|p| p.name.as_str()).collect();
    assert_eq!(failed, ["hessian_fd"]);
}

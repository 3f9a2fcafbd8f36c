//! Randomized property checks of the analytic derivatives, the closed-loop
//! field and the network reduction.
//!
//! Each property draws its samples from a ChaCha stream seeded by the run
//! seed, the property index and the sample index, so a report is
//! reproducible whichever execution path evaluated it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::controller::{stability_bound, ClosedLoop, ControllerGains, ControllerVariant};
use crate::costs::CostModel;
use crate::error::Result;
use crate::netmodel::{graph_matrices, kron_reduce, laplacian_solve, NetworkCase};
use crate::netmodel::Grid;
use crate::oracle::{
    grad_xy, h_matrix, hessians, maximize_nu_l, phi_hessian, phi_value, primal_dual_field,
    reduced_lagrangian, Dual, Gradient, Hessians, Primal,
};
use crate::par::Execution;
use crate::tolerances::{
    fd_step, FD_GRADIENT, FD_SECOND_ORDER, FIELD_EQUIVALENCE, SEMIDEFINITE,
};

/// Source of the derivatives under test. The analytic implementation is the
/// default; tests substitute deliberately wrong ones to check that each
/// property isolates its own formula.
pub trait Derivatives: Sync {
    fn gradient(&self, grid: &Grid, costs: &[CostModel], x: &Primal, y: &Dual) -> Result<Gradient> {
        grad_xy(grid, costs, x, y)
    }
    fn hessians(&self, grid: &Grid, costs: &[CostModel], x: &Primal, y: &Dual) -> Result<Hessians> {
        hessians(grid, costs, x, y)
    }
}

pub struct Analytic;

impl Derivatives for Analytic {}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Samples for the cheap properties.
    pub samples: usize,
    /// Samples for the derivative checks that need finite differences over
    /// every coordinate.
    pub fd_samples: usize,
    pub execution: Execution,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            samples: 1000,
            fd_samples: 50,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub skipped: bool,
    pub samples: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

/// What a property needs besides its samples.
pub struct Subject<'a> {
    pub grid: &'a Grid,
    pub costs: &'a [CostModel],
    pub gains: &'a ControllerGains,
    /// Case whose zero-injection buses the reduction property eliminates.
    pub case: Option<&'a NetworkCase>,
}

fn rng_for(seed: u64, property: u64, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(property);
    rng.set_word_pos(sample as u128 * 4096);
    rng
}

/// A random point around the pre-fault operating state.
pub fn random_point(grid: &Grid, rng: &mut impl Rng) -> (Primal, Dual) {
    let n = grid.n();
    let p0 = grid.initial_flows();
    let phi = DVector::from_fn(n, |i, _| grid.initial_angles[i] + rng.gen_range(-0.05..0.05));
    let flows = DVector::from_fn(grid.m(), |e, _| p0[e] + rng.gen_range(-0.5..0.5));
    let rho = |bound: &DVector<f64>, rng: &mut dyn rand::RngCore| {
        DVector::from_fn(grid.mc(), |e, _| {
            if !bound[e].is_finite() || rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..0.5)
            }
        })
    };
    let rho_plus = rho(&grid.upper, rng);
    let rho_minus = rho(&grid.lower, rng);
    let y = Dual {
        lambda: DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5)),
        nu_g: DVector::from_fn(grid.generators.len(), |_, _| rng.gen_range(-0.2..0.2)),
        pi: DVector::from_fn(grid.k(), |_, _| rng.gen_range(-0.5..0.5)),
        rho_plus,
        rho_minus,
    };
    (Primal { phi, flows }, y)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs())) / scale
}

/// Central difference of a vector function.
fn jacobian(v0: &[f64], f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<DMatrix<f64>> {
    let mut cols = Vec::with_capacity(v0.len());
    let mut v = v0.to_vec();
    for j in 0..v0.len() {
        let h = fd_step(v0[j]);
        v[j] = v0[j] + h;
        let up = f(&v)?;
        v[j] = v0[j] - h;
        let down = f(&v)?;
        v[j] = v0[j];
        cols.push(DVector::from_iterator(
            up.len(),
            up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)),
        ));
    }
    let rows = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(rows, v0.len(), |i, j| cols[j][i]))
}

struct Runner<'a> {
    opts: &'a VerifyOptions,
}

impl Runner<'_> {
    /// Evaluates `f` on `count` samples and reduces to the worst error.
    fn run<F>(&self, name: &str, index: u64, count: usize, tol: f64, f: F) -> PropertyResult
    where
        F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync + Send,
    {
        let idx: Vec<usize> = (0..count).collect();
        let seed = self.opts.seed;
        let outcomes = self
            .opts
            .execution
            .map(&idx, |&s| f(&mut rng_for(seed, index, s)));
        let mut max_error = 0.0f64;
        let mut detail = None;
        for (s, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(e) if e.is_finite() => max_error = max_error.max(e),
                Ok(_) => {
                    max_error = f64::INFINITY;
                    detail.get_or_insert(format!("sample {s}: non-finite error"));
                }
                Err(e) => {
                    max_error = f64::INFINITY;
                    detail.get_or_insert(format!("sample {s}: {e}"));
                }
            }
        }
        PropertyResult {
            name: name.into(),
            passed: max_error <= tol,
            skipped: false,
            samples: count,
            max_error,
            tolerance: tol,
            detail,
        }
    }
}

fn skipped(name: &str, tol: f64, why: &str) -> PropertyResult {
    PropertyResult {
        name: name.into(),
        passed: true,
        skipped: true,
        samples: 0,
        max_error: 0.0,
        tolerance: tol,
        detail: Some(why.into()),
    }
}

pub const PROPERTIES: [&str; 10] = [
    "cost_inverse",
    "phi_concavity",
    "gradient_fd",
    "nu_jacobian_fd",
    "hessian_fd",
    "hessian_signs",
    "field_equivalence",
    "h_matrix_structure",
    "h_matrix_nsd",
    "kron_consistency",
];

/// Runs every property against `derivs`.
pub fn run_verification(subject: &Subject, derivs: &dyn Derivatives, opts: &VerifyOptions) -> Result<VerifyReport> {
    let runner = Runner { opts };
    let (grid, costs) = (subject.grid, subject.costs);
    let nx = Primal::dim(grid);
    let mut out = Vec::new();

    out.push(runner.run(PROPERTIES[0], 0, opts.samples, 1e-10, |rng| {
        let i = rng.gen_range(0..grid.n());
        let c = &costs[i];
        let xi = rng.gen_range(-3.0..3.0);
        let d = c.load_response(xi);
        let back = c.marginal(d)?;
        // d'(xi) * c''(d(xi)) = 1
        let inv = c.response_slope(xi) * c.curvature(d)? - 1.0;
        Ok((back - xi).abs().max(inv.abs()))
    }));

    out.push(runner.run(PROPERTIES[1], 1, opts.samples, FD_SECOND_ORDER, |rng| {
        let i = rng.gen_range(0..grid.n());
        let (c, dmp, pin) = (&costs[i], grid.damping[i], grid.injection[i]);
        let v0 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        // Closed-form gradient: dPhi/dlambda = Pin - d(xi), dPhi/dnu = Pin - d(xi) - D nu.
        let grad = |v: &[f64]| -> Result<Vec<f64>> {
            let d = c.load_response(v[0] + v[1]);
            Ok(vec![pin - d, pin - d - dmp * v[1]])
        };
        let fd1 = jacobian(&v0, |w| Ok(vec![phi_value(c, dmp, pin, w[0], w[1])]))?;
        let grad_err = rel_err(fd1.as_slice(), &grad(&v0)?);
        let fd = jacobian(&v0, grad)?;
        let h = phi_hessian(c, dmp, v0[0], v0[1]);
        let hm = DMatrix::from_fn(2, 2, |a, b| h[a][b]);
        let fd_err = rel_err(fd.as_slice(), hm.as_slice()).max(grad_err);
        // Strict concavity: both eigenvalues negative.
        let top = SymmetricEigen::new(hm).eigenvalues.max();
        Ok(if top < 0.0 { fd_err } else { f64::INFINITY })
    }));

    let point_vec = |x: &Primal, y: &Dual| -> Vec<f64> {
        let mut v = x.to_vec();
        v.extend(y.to_vec());
        v
    };
    let split = |v: &[f64]| (Primal::from_slice(grid, &v[..nx]), Dual::from_slice(grid, &v[nx..]));

    out.push(runner.run(PROPERTIES[2], 2, opts.fd_samples, FD_GRADIENT, |rng| {
        let (x, y) = random_point(grid, rng);
        let g = derivs.gradient(grid, costs, &x, &y)?;
        let fd = jacobian(&point_vec(&x, &y), |v| {
            let (a, b) = split(v);
            Ok(vec![reduced_lagrangian(grid, costs, &a, &b)?])
        })?;
        Ok(rel_err(fd.as_slice(), &point_vec(&g.x, &g.y)))
    }));

    out.push(runner.run(PROPERTIES[3], 3, opts.fd_samples, FD_SECOND_ORDER, |rng| {
        let (x, y) = random_point(grid, rng);
        let nu = maximize_nu_l(grid, costs, &x, &y)?;
        let m = grid.m();
        // d nu_L / d P = -W C_L and d nu_l / d lambda_l = -d'/(D + d').
        let mut d_flows = DMatrix::zeros(grid.loads.len(), m);
        let mut d_lambda = DMatrix::zeros(grid.loads.len(), grid.loads.len());
        for (k, &i) in grid.loads.iter().enumerate() {
            let s = costs[i].response_slope(y.lambda[i] + nu[k]);
            let w = 1.0 / (grid.damping[i] + s);
            for e in 0..m {
                d_flows[(k, e)] = -w * grid.incidence[(i, e)];
            }
            d_lambda[(k, k)] = -w * s;
        }
        let fd_p = jacobian(x.flows.as_slice(), |p| {
            let xp = Primal {
                phi: x.phi.clone(),
                flows: DVector::from_column_slice(p),
            };
            Ok(maximize_nu_l(grid, costs, &xp, &y)?.as_slice().to_vec())
        })?;
        let lam_l: Vec<f64> = grid.loads.iter().map(|&i| y.lambda[i]).collect();
        let fd_l = jacobian(&lam_l, |l| {
            let mut yl = y.clone();
            for (k, &i) in grid.loads.iter().enumerate() {
                yl.lambda[i] = l[k];
            }
            Ok(maximize_nu_l(grid, costs, &x, &yl)?.as_slice().to_vec())
        })?;
        Ok(rel_err(fd_p.as_slice(), d_flows.as_slice()).max(rel_err(fd_l.as_slice(), d_lambda.as_slice())))
    }));

    out.push(runner.run(PROPERTIES[4], 4, opts.fd_samples, FD_SECOND_ORDER, |rng| {
        let (x, y) = random_point(grid, rng);
        let h = derivs.hessians(grid, costs, &x, &y)?;
        let fd_xx = jacobian(&x.to_vec(), |v| {
            Ok(grad_xy(grid, costs, &Primal::from_slice(grid, v), &y)?.x.to_vec())
        })?;
        let fd_yy = jacobian(&y.to_vec(), |v| {
            Ok(grad_xy(grid, costs, &x, &Dual::from_slice(grid, v))?.y.to_vec())
        })?;
        Ok(rel_err(fd_xx.as_slice(), h.xx.as_slice()).max(rel_err(fd_yy.as_slice(), h.yy.as_slice())))
    }));

    out.push(runner.run(PROPERTIES[5], 5, opts.samples.min(200), SEMIDEFINITE, |rng| {
        let (x, y) = random_point(grid, rng);
        let h = derivs.hessians(grid, costs, &x, &y)?;
        let low = SymmetricEigen::new(h.xx).eigenvalues.min();
        let high = SymmetricEigen::new(h.yy).eigenvalues.max();
        Ok((-low).max(high).max(0.0))
    }));

    let base = ClosedLoop::new(grid.clone(), costs.to_vec(), subject.gains.clone(), ControllerVariant::Base)?;
    out.push(runner.run(PROPERTIES[6], 6, opts.samples, FIELD_EQUIVALENCE, |rng| {
        let (x, y) = random_point(grid, rng);
        let l = base.layout;
        let mut z = vec![0.0; l.dim()];
        z[l.omega_g()].copy_from_slice(y.nu_g.as_slice());
        z[l.flows()].copy_from_slice(x.flows.as_slice());
        z[l.lambda()].copy_from_slice(y.lambda.as_slice());
        z[l.pi()].copy_from_slice(y.pi.as_slice());
        z[l.rho_plus()].copy_from_slice(y.rho_plus.as_slice());
        z[l.rho_minus()].copy_from_slice(y.rho_minus.as_slice());
        z[l.phi()].copy_from_slice(x.phi.as_slice());
        let ev = base.evaluate(&z)?;
        let (xd, yd) = primal_dual_field(grid, costs, subject.gains, &x, &y)?;
        let mut expect = vec![0.0; l.dim()];
        expect[l.omega_g()].copy_from_slice(yd.nu_g.as_slice());
        expect[l.flows()].copy_from_slice(xd.flows.as_slice());
        expect[l.lambda()].copy_from_slice(yd.lambda.as_slice());
        expect[l.pi()].copy_from_slice(yd.pi.as_slice());
        expect[l.rho_plus()].copy_from_slice(yd.rho_plus.as_slice());
        expect[l.rho_minus()].copy_from_slice(yd.rho_minus.as_slice());
        expect[l.phi()].copy_from_slice(xd.phi.as_slice());
        Ok(rel_err(&ev.rates, &expect))
    }));

    let finite = costs.iter().all(|c| c.has_finite_curvature());
    let interval = if finite {
        let slope = costs.iter().map(|c| c.min_slope()).fold(f64::INFINITY, f64::min);
        Some(stability_bound(grid.min_damping(), slope)?)
    } else {
        None
    };
    let random_delta = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        DVector::from_element(grid.n(), lo + (hi - lo) * rng.gen_range(0.02..0.98))
    };

    match interval {
        None => {
            let why = "cost curvature is unbounded; the robustness matrix is undefined";
            out.push(skipped(PROPERTIES[7], FD_SECOND_ORDER, why));
            out.push(skipped(PROPERTIES[8], SEMIDEFINITE, why));
        }
        Some(bounds) => {
            // The symmetric part of the perturbed field's Jacobian (unit gains,
            // inactive projections) must equal H.
            out.push(runner.run(PROPERTIES[7], 7, opts.fd_samples, FD_SECOND_ORDER, |rng| {
                let (x, y) = random_point(grid, rng);
                let da = random_delta(rng, bounds);
                let h = h_matrix(grid, costs, &x, &y, &da)?;
                let field = |v: &[f64]| -> Result<Vec<f64>> {
                    let (a, b) = split(v);
                    let g = grad_xy(grid, costs, &a, &b)?;
                    let nu = maximize_nu_l(grid, costs, &a, &b)?;
                    let mut out: Vec<f64> = g.x.to_vec().iter().map(|v| -v).collect();
                    let mut gy = g.y.clone();
                    for (k, &i) in grid.loads.iter().enumerate() {
                        gy.lambda[i] += da[i] * nu[k];
                    }
                    for (k, &i) in grid.generators.iter().enumerate() {
                        gy.lambda[i] += da[i] * b.nu_g[k];
                    }
                    out.extend(gy.to_vec());
                    Ok(out)
                };
                let j = jacobian(&point_vec(&x, &y), field)?;
                let sym = (&j + j.transpose()) * 0.5;
                Ok(rel_err(sym.as_slice(), h.as_slice()))
            }));
            out.push(runner.run(PROPERTIES[8], 8, opts.samples.min(200), SEMIDEFINITE, |rng| {
                let (x, y) = random_point(grid, rng);
                let da = random_delta(rng, bounds);
                let h = h_matrix(grid, costs, &x, &y, &da)?;
                Ok(SymmetricEigen::new(h).eigenvalues.max().max(0.0))
            }));
        }
    }

    out.push(match subject.case {
        None => skipped(PROPERTIES[9], 1e-10, "no case with zero-injection buses supplied"),
        Some(case) => {
            let red = kron_reduce(case)?;
            let gm = graph_matrices(case);
            runner.run(PROPERTIES[9], 9, opts.samples, 1e-10, move |rng| {
                let n = case.buses.len();
                let theta_r = DVector::from_fn(red.retained.len(), |_, _| rng.gen_range(-1.0..1.0));
                // Full angles with zero injection at the eliminated buses.
                let mut inj = DVector::zeros(n);
                let reduced_inj = &red.laplacian * &theta_r;
                for (a, &i) in red.retained.iter().enumerate() {
                    inj[i] = reduced_inj[a];
                }
                let theta = laplacian_solve(&gm.laplacian, &inj)?;
                let shift = theta_r[0] - theta[red.retained[0]];
                let theta = theta.add_scalar(shift);
                let direct = gm.incidence.tr_mul(&theta).component_mul(&gm.susceptance);
                let reduced = red.incidence.tr_mul(&theta_r).component_mul(&red.susceptance);
                let recovered = &red.flow_recovery * reduced;
                let angle_err = red
                    .retained
                    .iter()
                    .enumerate()
                    .fold(0.0f64, |m, (a, &i)| m.max((theta[i] - theta_r[a]).abs()));
                Ok(rel_err(recovered.as_slice(), direct.as_slice()).max(angle_err))
            })
        }
    });

    let passed = out.iter().all(|p| p.passed);
    Ok(VerifyReport {
        seed: opts.seed,
        passed,
        properties: out,
    })
}

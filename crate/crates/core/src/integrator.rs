//! Fixed-step RK4 on the projected closed-loop field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances::EQUILIBRIUM;

/// A vector field whose evaluation may also solve algebraic constraints.
pub trait Field {
    fn dim(&self) -> usize;
    /// Writes the rates into `out` and returns the algebraic residual.
    fn rates(&self, z: &[f64], out: &mut [f64]) -> Result<f64>;
    /// Restores hard state constraints after a step.
    fn clamp(&self, z: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Stop once the sup-norm of the field falls below this.
    pub tol: f64,
    /// Record every `stride`-th step (plus the first and last states).
    pub stride: usize,
    /// Abort once any state component exceeds this magnitude.
    pub divergence_limit: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-3,
            t_end: 40.0,
            tol: EQUILIBRIUM,
            stride: 100,
            divergence_limit: 1e6,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidScenario(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidScenario(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if !(self.tol > 0.0) || self.stride == 0 || !(self.divergence_limit > 0.0) {
            return Err(Error::InvalidScenario(
                "tol, stride and divergence limit must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Recorded samples of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Step index of each sample.
    pub step_index: Vec<usize>,
    pub converged: bool,
    /// Field norm (including algebraic residual) at the last state.
    pub final_field_norm: f64,
    pub dt: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn axpy(z: &[f64], a: f64, k: &[f64], out: &mut [f64]) {
    for ((o, zi), ki) in out.iter_mut().zip(z).zip(k) {
        *o = zi + a * ki;
    }
}

struct Stages {
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Stages {
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

fn rk4_from<F: Field>(field: &F, z: &mut [f64], k1: &[f64], dt: f64, s: &mut Stages) -> Result<()> {
    axpy(z, 0.5 * dt, k1, &mut s.tmp);
    field.rates(&s.tmp, &mut s.k2)?;
    axpy(z, 0.5 * dt, &s.k2, &mut s.tmp);
    field.rates(&s.tmp, &mut s.k3)?;
    axpy(z, dt, &s.k3, &mut s.tmp);
    field.rates(&s.tmp, &mut s.k4)?;
    for i in 0..z.len() {
        z[i] += dt / 6.0 * (k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
    field.clamp(z);
    Ok(())
}

/// One RK4 step followed by the clamp.
pub fn step<F: Field>(field: &F, z: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = field.dim();
    let mut k1 = vec![0.0; n];
    field.rates(z, &mut k1)?;
    let mut out = z.to_vec();
    rk4_from(field, &mut out, &k1, dt, &mut Stages::new(n))?;
    Ok(out)
}

/// Integrates until `t_end` or until the field vanishes. At least one step
/// is always taken, so a run started at equilibrium reports convergence at
/// `t = dt`.
pub fn integrate<F: Field>(field: &F, z0: &[f64], config: &IntegratorConfig) -> Result<Trajectory> {
    config.validate()?;
    let n = field.dim();
    if z0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: z0.len(),
        });
    }
    let steps = config.steps();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![z0.to_vec()],
        step_index: vec![0],
        converged: false,
        final_field_norm: f64::NAN,
        dt: config.dt,
    };
    let mut z = z0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut stages = Stages::new(n);
    for s in 0..=steps {
        let residual = field.rates(&z, &mut k1)?;
        let norm = sup_norm(&k1).max(residual);
        traj.final_field_norm = norm;
        if s > 0 && (norm < config.tol || s == steps) {
            traj.converged = norm < config.tol;
            if *traj.step_index.last().unwrap() != s {
                traj.times.push(s as f64 * config.dt);
                traj.states.push(z.clone());
                traj.step_index.push(s);
            }
            return Ok(traj);
        }
        if steps == 0 {
            return Ok(traj);
        }
        rk4_from(field, &mut z, &k1, config.dt, &mut stages)?;
        let t = (s + 1) as f64 * config.dt;
        if let Some(bad) = z.iter().find(|v| !v.is_finite() || v.abs() > config.divergence_limit) {
            return Err(Error::Divergence {
                t,
                reason: format!("state component reached {bad:e}"),
            });
        }
        if (s + 1) % config.stride == 0 && s + 1 < steps {
            traj.times.push(t);
            traj.states.push(z.clone());
            traj.step_index.push(s + 1);
        }
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Damped oscillator `x' = y, y' = -x - y`.
    struct Oscillator;

    impl Field for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rates(&self, z: &[f64], out: &mut [f64]) -> Result<f64> {
            out[0] = z[1];
            out[1] = -z[0] - z[1];
            Ok(0.0)
        }
        fn clamp(&self, _: &mut [f64]) {}
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Linear decay has the exact solution e^{-t}.
        struct Decay;
        impl Field for Decay {
            fn dim(&self) -> usize {
                1
            }
            fn rates(&self, z: &[f64], out: &mut [f64]) -> Result<f64> {
                out[0] = -z[0];
                Ok(0.0)
            }
            fn clamp(&self, _: &mut [f64]) {}
        }
        let err = |dt: f64| {
            let mut z = vec![1.0];
            for _ in 0..(1.0 / dt).round() as usize {
                z = step(&Decay, &z, dt).unwrap();
            }
            (z[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn equilibrium_start_stops_after_one_step() {
        let cfg = IntegratorConfig::default();
        let traj = integrate(&Oscillator, &[0.0, 0.0], &cfg).unwrap();
        assert!(traj.converged);
        assert_eq!(traj.times, vec![0.0, cfg.dt]);
    }

    #[test]
    fn samples_are_strided_and_include_the_end() {
        let cfg = IntegratorConfig {
            dt: 0.01,
            t_end: 1.0,
            stride: 30,
            tol: 1e-30,
            ..Default::default()
        };
        let traj = integrate(&Oscillator, &[1.0, 0.0], &cfg).unwrap();
        assert!(!traj.converged);
        assert_eq!(traj.step_index, vec![0, 30, 60, 90, 100]);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn divergence_is_reported() {
        struct Blowup;
        impl Field for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn rates(&self, z: &[f64], out: &mut [f64]) -> Result<f64> {
                out[0] = 5.0 * z[0];
                Ok(0.0)
            }
            fn clamp(&self, _: &mut [f64]) {}
        }
        let cfg = IntegratorConfig {
            dt: 0.01,
            t_end: 100.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&Blowup, &[1.0], &cfg),
            Err(Error::Divergence { .. })
        ));
    }
}

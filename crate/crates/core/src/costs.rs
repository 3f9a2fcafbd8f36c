//! Strongly convex load disutilities and the load response they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

/// Disutility `c_i` of a controllable load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum CostModel {
    /// `c(d) = d^2 / (2b)`.
    #[serde(rename = "quadratic")]
    Quadratic { b: f64 },
    /// Response `d(xi) = dmax * tanh(xi / m)`, saturating at `+-dmax`.
    #[serde(rename = "tanh")]
    SaturatingTanh {
        #[serde(default = "one")]
        dmax: f64,
        #[serde(default = "one")]
        m: f64,
    },
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::SaturatingTanh { dmax: 1.0, m: 1.0 }
    }
}

/// `ln cosh x` without overflow.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CostModel::Quadratic { b } => b > 0.0 && b.is_finite(),
            CostModel::SaturatingTanh { dmax, m } => {
                dmax > 0.0 && m > 0.0 && dmax.is_finite() && m.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!(
                "cost parameters must be positive and finite: {self:?}"
            )))
        }
    }

    /// Closed domain `[lo, hi]` of the disutility.
    pub fn domain(&self) -> (f64, f64) {
        match *self {
            CostModel::Quadratic { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            CostModel::SaturatingTanh { dmax, .. } => (-dmax, dmax),
        }
    }

    fn check_domain(&self, d: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if d.is_nan() || d < lo || d > hi {
            Err(Error::Domain {
                value: d,
                bound: hi,
            })
        } else {
            Ok(())
        }
    }

    /// `c(d)`. The saturating cost is `+inf` on the boundary of its domain.
    pub fn cost(&self, d: f64) -> Result<f64> {
        self.check_domain(d)?;
        Ok(match *self {
            CostModel::Quadratic { b } => d * d / (2.0 * b),
            CostModel::SaturatingTanh { dmax, m } => {
                if d.abs() == dmax {
                    return Ok(f64::INFINITY);
                }
                let r = d / dmax;
                m * (d * r.atanh() + 0.5 * dmax * (1.0 - r * r).ln())
            }
        })
    }

    /// `c'(d)`.
    pub fn marginal(&self, d: f64) -> Result<f64> {
        self.check_domain(d)?;
        Ok(match *self {
            CostModel::Quadratic { b } => d / b,
            CostModel::SaturatingTanh { dmax, m } => m * (d / dmax).atanh(),
        })
    }

    /// `c''(d)`.
    pub fn curvature(&self, d: f64) -> Result<f64> {
        self.check_domain(d)?;
        Ok(match *self {
            CostModel::Quadratic { b } => 1.0 / b,
            CostModel::SaturatingTanh { dmax, m } => m * dmax / ((dmax - d) * (dmax + d)),
        })
    }

    /// `d(xi) = c'^{-1}(xi)`.
    pub fn load_response(&self, xi: f64) -> f64 {
        match *self {
            CostModel::Quadratic { b } => b * xi,
            CostModel::SaturatingTanh { dmax, m } => dmax * (xi / m).tanh(),
        }
    }

    /// `d'(xi) = 1 / c''(d(xi))`.
    pub fn response_slope(&self, xi: f64) -> f64 {
        match *self {
            CostModel::Quadratic { b } => b,
            CostModel::SaturatingTanh { dmax, m } => dmax / m * sech2(xi / m),
        }
    }

    /// Convex conjugate `c*(xi) = xi d(xi) - c(d(xi))`, evaluated stably deep
    /// into saturation.
    pub fn conjugate(&self, xi: f64) -> f64 {
        match *self {
            CostModel::Quadratic { b } => 0.5 * b * xi * xi,
            CostModel::SaturatingTanh { dmax, m } => m * dmax * ln_cosh(xi / m),
        }
    }

    /// `(alpha, L)` with `alpha <= c'' <= L` over the domain.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        match *self {
            CostModel::Quadratic { b } => (1.0 / b, 1.0 / b),
            CostModel::SaturatingTanh { dmax, m } => (m / dmax, f64::INFINITY),
        }
    }

    /// Lower bound `1/L` on the response slope (zero when `L` is infinite).
    pub fn min_slope(&self) -> f64 {
        1.0 / self.curvature_bounds().1
    }

    pub fn has_finite_curvature(&self) -> bool {
        self.curvature_bounds().1.is_finite()
    }
}

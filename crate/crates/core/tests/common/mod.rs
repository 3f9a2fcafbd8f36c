#![allow(dead_code)]

pub mod qp;

use std::path::PathBuf;

use olc::costs::CostModel;
use olc::netmodel::NetworkCase;
use olc::scenario::{Scenario, VariantKind};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn case(name: &str) -> NetworkCase {
    NetworkCase::load(data(name)).expect("bundled case loads")
}

pub const QUADRATIC: CostModel = CostModel::Quadratic { b: 1.0 };
pub const TANH: CostModel = CostModel::SaturatingTanh { dmax: 1.0, m: 1.0 };

/// 2-bus case with a -0.2 step at the load.
pub fn two_bus(cost: CostModel) -> Scenario {
    let mut s = Scenario::new(case("two_bus.json"));
    s.disturbance = vec![(2, -0.2)];
    s.default_cost = cost;
    s.integrator.t_end = 200.0;
    s
}

/// 3-bus path with a -0.3 step at bus 3 and a 1.2 p.u. limit on line 2.
pub fn three_bus(cost: CostModel) -> Scenario {
    let mut s = Scenario::new(case("three_bus.json"));
    s.disturbance = vec![(3, -0.3)];
    s.default_cost = cost;
    s.thermal_limits = vec![(2, -1.2, 1.2)];
    s.integrator.t_end = 200.0;
    s
}

/// The 39-bus scenario: -2 p.u. at bus 29, D = 0.2, unit gains.
pub fn ieee39(variant: VariantKind) -> Scenario {
    let name = match variant {
        VariantKind::Reduced => "ieee39_zero.json",
        _ => "ieee39.json",
    };
    let mut s = Scenario::new(case(name));
    s.disturbance = vec![(29, -2.0)];
    s.variant = variant;
    s.integrator.dt = 5e-4;
    s.integrator.t_end = 200.0;
    s
}

pub fn tie_limits(limit: f64) -> Vec<(i64, f64, f64)> {
    [1, 3, 42].iter().map(|&id| (id, -limit, limit)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

//! Scenario files: which case, which disturbance, which controller.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Deserialize;

use crate::controller::{ClosedLoop, CommGraph, ControllerGains, ControllerVariant};
use crate::costs::CostModel;
use crate::error::{read_file, Error, Result};
use crate::integrator::IntegratorConfig;
use crate::netmodel::{Grid, NetworkCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKind {
    SwingOnly,
    Base,
    Perturbed,
    Reduced,
    DistributedArea,
}

impl std::str::FromStr for VariantKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "swing-only" => VariantKind::SwingOnly,
            "base" => VariantKind::Base,
            "perturbed" => VariantKind::Perturbed,
            "reduced" => VariantKind::Reduced,
            "distributed-area" => VariantKind::DistributedArea,
            other => {
                return Err(Error::InvalidScenario(format!(
                    "unknown variant '{other}' (expected base, perturbed, reduced, distributed-area or swing-only)"
                )))
            }
        })
    }
}

impl VariantKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VariantKind::SwingOnly => "swing-only",
            VariantKind::Base => "base",
            VariantKind::Perturbed => "perturbed",
            VariantKind::Reduced => "reduced",
            VariantKind::DistributedArea => "distributed-area",
        }
    }
}

/// Scalar gains; each applies uniformly to its class of controller states.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct GainSpec {
    pub zeta_lambda: f64,
    pub chi_phi: f64,
    pub zeta_pi: f64,
    pub zeta_rho: f64,
    pub chi_gamma: f64,
}

impl Default for GainSpec {
    fn default() -> Self {
        GainSpec {
            zeta_lambda: 1.0,
            chi_phi: 1.0,
            zeta_pi: 1.0,
            zeta_rho: 1.0,
            chi_gamma: 1.0,
        }
    }
}

impl GainSpec {
    pub fn build(&self, grid: &Grid) -> ControllerGains {
        let mut g = ControllerGains::uniform(grid, 1.0);
        g.zeta_lambda.fill(self.zeta_lambda);
        g.chi_phi.fill(self.chi_phi);
        g.zeta_pi.fill(self.zeta_pi);
        g.zeta_rho_plus.fill(self.zeta_rho);
        g.zeta_rho_minus.fill(self.zeta_rho);
        g.zeta_pi_edge = self.zeta_pi;
        g.chi_gamma = self.chi_gamma;
        g
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ScenarioFile {
    case: Option<String>,
    #[serde(default)]
    disturbance: BTreeMap<String, f64>,
    cost: Option<CostModel>,
    #[serde(default)]
    costs: BTreeMap<String, CostModel>,
    variant: Option<String>,
    delta_a: Option<f64>,
    #[serde(default)]
    gains: GainSpec,
    #[serde(default)]
    thermal_limits: BTreeMap<String, [Option<f64>; 2]>,
    area_constraints: Option<bool>,
    integrator: Option<IntegratorConfig>,
    comm_graph: Option<BTreeMap<String, Vec<[i64; 2]>>>,
    damping: Option<f64>,
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub case_path: Option<PathBuf>,
    pub case: NetworkCase,
    /// `(bus id, step change of P_in)`.
    pub disturbance: Vec<(i64, f64)>,
    pub default_cost: CostModel,
    pub bus_costs: Vec<(i64, CostModel)>,
    pub variant: VariantKind,
    pub delta_a: f64,
    pub gains: GainSpec,
    /// `(line id, lower, upper)`.
    pub thermal_limits: Vec<(i64, f64, f64)>,
    pub area_constraints: bool,
    pub integrator: IntegratorConfig,
    /// `(area id, line id, line id)`; `None` selects the default ring.
    pub comm_links: Option<Vec<(i64, i64, i64)>>,
    pub damping: Option<f64>,
}

fn parse_id(s: &str, what: &str) -> Result<i64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidScenario(format!("{what} key '{s}' is not an integer id")))
}

impl Scenario {
    /// Base-law scenario on a case with default settings.
    pub fn new(case: NetworkCase) -> Self {
        Scenario {
            case_path: None,
            case,
            disturbance: Vec::new(),
            default_cost: CostModel::default(),
            bus_costs: Vec::new(),
            variant: VariantKind::Base,
            delta_a: 0.0,
            gains: GainSpec::default(),
            thermal_limits: Vec::new(),
            area_constraints: true,
            integrator: IntegratorConfig::default(),
            comm_links: None,
            damping: None,
        }
    }

    /// Reads a scenario file; its `case` path is resolved relative to the
    /// scenario's directory unless `case_override` is given.
    pub fn load(path: impl AsRef<Path>, case_override: Option<&Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_file(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, dir, case_override)
    }

    pub fn from_json_str(text: &str, base_dir: &Path, case_override: Option<&Path>) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let case_path = match (case_override, &file.case) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => base_dir.join(p),
            (None, None) => {
                return Err(Error::InvalidScenario(
                    "no case given (set \"case\" in the scenario or pass --case)".into(),
                ))
            }
        };
        let case = NetworkCase::load(&case_path)?;
        let mut s = Scenario::new(case);
        s.case_path = Some(case_path);
        for (k, v) in &file.disturbance {
            s.disturbance.push((parse_id(k, "disturbance")?, *v));
        }
        if let Some(c) = file.cost {
            s.default_cost = c;
        }
        for (k, c) in &file.costs {
            s.bus_costs.push((parse_id(k, "costs")?, *c));
        }
        if let Some(v) = &file.variant {
            s.variant = v.parse()?;
        }
        s.delta_a = file.delta_a.unwrap_or(0.0);
        s.gains = file.gains;
        for (k, [lo, hi]) in &file.thermal_limits {
            s.thermal_limits.push((
                parse_id(k, "thermalLimits")?,
                lo.unwrap_or(f64::NEG_INFINITY),
                hi.unwrap_or(f64::INFINITY),
            ));
        }
        s.area_constraints = file.area_constraints.unwrap_or(true);
        if let Some(cfg) = file.integrator {
            s.integrator = cfg;
        }
        if let Some(graph) = &file.comm_graph {
            let mut links = Vec::new();
            for (area, pairs) in graph {
                let a = parse_id(area, "commGraph")?;
                links.extend(pairs.iter().map(|&[x, y]| (a, x, y)));
            }
            s.comm_links = Some(links);
        }
        s.damping = file.damping;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for &(id, dp) in &self.disturbance {
            if self.case.bus_index(id).is_none() {
                return Err(Error::InvalidScenario(format!("disturbance bus {id} does not exist")));
            }
            if !dp.is_finite() {
                return Err(Error::InvalidScenario(format!("disturbance at bus {id} is not finite")));
            }
        }
        for &(id, _) in &self.bus_costs {
            if self.case.bus_index(id).is_none() {
                return Err(Error::InvalidScenario(format!("cost given for unknown bus {id}")));
            }
        }
        for &(id, lo, hi) in &self.thermal_limits {
            if self.case.line_index(id).is_none() {
                return Err(Error::InvalidScenario(format!("thermal limit on unknown line {id}")));
            }
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidScenario(format!("line {id}: limits are not ordered")));
            }
        }
        if let Some(d) = self.damping {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidScenario("damping override must be positive".into()));
            }
        }
        self.default_cost.validate()?;
        for (_, c) in &self.bus_costs {
            c.validate()?;
        }
        self.integrator.validate()
    }

    fn prepared_case(&self) -> NetworkCase {
        let mut case = self.case.clone();
        if let Some(d) = self.damping {
            for b in case.buses.iter_mut().filter(|b| b.is_active()) {
                b.damping = d;
            }
        }
        case
    }

    /// Grid for the scenario's variant with limits, area switch and
    /// disturbance applied.
    pub fn grid(&self) -> Result<Grid> {
        let case = self.prepared_case();
        let mut grid = match self.variant {
            VariantKind::Reduced => Grid::reduced(&case)?.0,
            _ => Grid::base(&case)?,
        };
        for &(id, lo, hi) in &self.thermal_limits {
            grid.set_limits(id, lo, hi)?;
        }
        grid.area_constraints = self.area_constraints && grid.k() > 0;
        grid.apply_disturbance(&self.disturbance)?;
        Ok(grid)
    }

    pub fn costs_for(&self, grid: &Grid) -> Vec<CostModel> {
        grid.bus_ids
            .iter()
            .map(|id| {
                self.bus_costs
                    .iter()
                    .rev()
                    .find(|(b, _)| b == id)
                    .map_or(self.default_cost, |(_, c)| *c)
            })
            .collect()
    }

    pub fn closed_loop(&self) -> Result<ClosedLoop> {
        let grid = self.grid()?;
        let costs = self.costs_for(&grid);
        let gains = self.gains.build(&grid);
        let variant = match self.variant {
            VariantKind::SwingOnly => ControllerVariant::SwingOnly,
            VariantKind::Base => ControllerVariant::Base,
            VariantKind::Reduced => ControllerVariant::Reduced,
            VariantKind::Perturbed => ControllerVariant::Perturbed {
                delta_a: DVector::from_element(grid.n(), self.delta_a),
            },
            VariantKind::DistributedArea => ControllerVariant::DistributedArea {
                comm: match &self.comm_links {
                    Some(links) => CommGraph::from_links(&grid, links)?,
                    None => CommGraph::ring(&grid),
                },
            },
        };
        ClosedLoop::new(grid, costs, gains, variant)
    }
}

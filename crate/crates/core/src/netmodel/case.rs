use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};

/// Damping applied when a case file leaves `D` out.
pub const DEFAULT_DAMPING: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Generator,
    Load,
    #[serde(rename = "zero")]
    ZeroInjection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: i64,
    pub kind: BusKind,
    pub inertia: f64,
    pub damping: f64,
    pub injection: f64,
}

impl Bus {
    /// Whether the bus carries damping and a controllable load.
    pub fn is_active(&self) -> bool {
        self.kind != BusKind::ZeroInjection
    }
}

/// A directed line between two bus indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: i64,
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Line {
    pub fn is_limited(&self) -> bool {
        self.lower.is_finite() || self.upper.is_finite()
    }
}

/// A control area; `buses` holds bus indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Area {
    pub id: i64,
    pub buses: Vec<usize>,
    pub export: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub areas: Vec<Area>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    #[serde(rename = "baseMVA")]
    base_mva: f64,
    buses: Vec<BusRecord>,
    lines: Vec<LineRecord>,
    #[serde(default)]
    areas: Vec<AreaRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRecord {
    id: i64,
    kind: BusKind,
    #[serde(rename = "M", default)]
    m: Option<f64>,
    #[serde(rename = "D", default)]
    d: Option<f64>,
    #[serde(rename = "Pin", default)]
    pin: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    id: i64,
    from: i64,
    to: i64,
    #[serde(rename = "B")]
    b: f64,
    #[serde(rename = "Pmin", default)]
    pmin: Option<f64>,
    #[serde(rename = "Pmax", default)]
    pmax: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AreaRecord {
    id: i64,
    buses: Vec<i64>,
    #[serde(rename = "Phat", default)]
    phat: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidCase(msg.into())
}

impl NetworkCase {
    /// Reads and validates a JSON case file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&read_file(path.as_ref())?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CaseFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    fn from_file(file: CaseFile) -> Result<Self> {
        if !(file.base_mva > 0.0) {
            return Err(invalid("baseMVA must be positive"));
        }
        let mut index = HashMap::new();
        let mut buses = Vec::with_capacity(file.buses.len());
        for (k, rec) in file.buses.iter().enumerate() {
            if index.insert(rec.id, k).is_some() {
                return Err(invalid(format!("duplicate bus id {}", rec.id)));
            }
            buses.push(bus_from_record(rec)?);
        }
        if buses.is_empty() {
            return Err(invalid("case has no buses"));
        }
        let bus_index = |id: i64| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| invalid(format!("unknown bus id {id}")))
        };

        let mut line_ids = BTreeSet::new();
        let mut pairs = BTreeSet::new();
        let mut lines = Vec::with_capacity(file.lines.len());
        for rec in &file.lines {
            if !line_ids.insert(rec.id) {
                return Err(invalid(format!("duplicate line id {}", rec.id)));
            }
            let (from, to) = (bus_index(rec.from)?, bus_index(rec.to)?);
            if from == to {
                return Err(invalid(format!("line {} is a self-loop", rec.id)));
            }
            if pairs.contains(&(to, from)) {
                return Err(invalid(format!(
                    "antiparallel edge: line {} ({} -> {}) reverses an existing line",
                    rec.id, rec.from, rec.to
                )));
            }
            if !pairs.insert((from, to)) {
                return Err(invalid(format!(
                    "duplicate edge {} -> {} (line {})",
                    rec.from, rec.to, rec.id
                )));
            }
            if !(rec.b > 0.0) || !rec.b.is_finite() {
                return Err(invalid(format!(
                    "nonpositive susceptance {} on line {}",
                    rec.b, rec.id
                )));
            }
            let lower = rec.pmin.unwrap_or(f64::NEG_INFINITY);
            let upper = rec.pmax.unwrap_or(f64::INFINITY);
            if lower > upper || lower.is_nan() || upper.is_nan() {
                return Err(invalid(format!("line {} has Pmin > Pmax", rec.id)));
            }
            lines.push(Line {
                id: rec.id,
                from,
                to,
                susceptance: rec.b,
                lower,
                upper,
            });
        }

        let mut assigned = vec![None; buses.len()];
        let mut area_ids = BTreeSet::new();
        let mut areas = Vec::with_capacity(file.areas.len());
        let mut missing_export = Vec::new();
        for rec in &file.areas {
            if !area_ids.insert(rec.id) {
                return Err(invalid(format!("duplicate area id {}", rec.id)));
            }
            let mut members = Vec::with_capacity(rec.buses.len());
            for &id in &rec.buses {
                let i = bus_index(id)?;
                if let Some(other) = assigned[i].replace(rec.id) {
                    return Err(invalid(format!(
                        "bus {id} belongs to areas {other} and {}",
                        rec.id
                    )));
                }
                members.push(i);
            }
            if rec.phat.is_none() {
                missing_export.push(areas.len());
            }
            areas.push(Area {
                id: rec.id,
                buses: members,
                export: rec.phat.unwrap_or(0.0),
            });
        }

        let mut case = NetworkCase {
            base_mva: file.base_mva,
            buses,
            lines,
            areas,
        };
        case.check_connected()?;
        if !missing_export.is_empty() {
            let balanced = case.balance_injections()?;
            let flow = super::dc_power_flow(&balanced)?;
            let cbar = super::graph_matrices(&case).area_boundary;
            let exports = &cbar * &flow.flows;
            for k in missing_export {
                case.areas[k].export = exports[k];
            }
        }
        Ok(case)
    }

    /// Serializes back to the JSON case schema.
    pub fn to_json_string(&self) -> Result<String> {
        let file = CaseFile {
            base_mva: self.base_mva,
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id,
                    kind: b.kind,
                    m: (b.kind != BusKind::ZeroInjection).then_some(b.inertia),
                    d: (b.kind != BusKind::ZeroInjection).then_some(b.damping),
                    pin: b.injection,
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineRecord {
                    id: l.id,
                    from: self.buses[l.from].id,
                    to: self.buses[l.to].id,
                    b: l.susceptance,
                    pmin: l.lower.is_finite().then_some(l.lower),
                    pmax: l.upper.is_finite().then_some(l.upper),
                })
                .collect(),
            areas: self
                .areas
                .iter()
                .map(|a| AreaRecord {
                    id: a.id,
                    buses: a.buses.iter().map(|&i| self.buses[i].id).collect(),
                    phat: Some(a.export),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn bus_index(&self, id: i64) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn line_index(&self, id: i64) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn load_buses(&self) -> Vec<usize> {
        self.indices_of(BusKind::Load)
    }

    pub fn generator_buses(&self) -> Vec<usize> {
        self.indices_of(BusKind::Generator)
    }

    pub fn zero_buses(&self) -> Vec<usize> {
        self.indices_of(BusKind::ZeroInjection)
    }

    fn indices_of(&self, kind: BusKind) -> Vec<usize> {
        (0..self.buses.len())
            .filter(|&i| self.buses[i].kind == kind)
            .collect()
    }

    /// Lines whose endpoints sit on different sides of some area boundary.
    pub fn tie_lines(&self) -> Vec<usize> {
        let cbar = super::graph_matrices(self).area_boundary;
        (0..self.lines.len())
            .filter(|&e| (0..self.areas.len()).any(|k| cbar[(k, e)] != 0.0))
            .collect()
    }

    /// Spreads the injection mismatch evenly over the load buses.
    pub fn balance_injections(&self) -> Result<Self> {
        let loads = self.load_buses();
        let mismatch: f64 = self.buses.iter().map(|b| b.injection).sum();
        let mut out = self.clone();
        if mismatch == 0.0 {
            return Ok(out);
        }
        if loads.is_empty() {
            return Err(invalid("cannot balance injections: no load buses"));
        }
        let share = mismatch / loads.len() as f64;
        for &i in &loads {
            out.buses[i].injection -= share;
        }
        // Push the rounding remainder onto the last load bus.
        let residual: f64 = out.buses.iter().map(|b| b.injection).sum();
        out.buses[*loads.last().unwrap()].injection -= residual;
        Ok(out)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(invalid(format!(
                "disconnected graph: bus {} is unreachable",
                self.buses[i].id
            ))),
            None => Ok(()),
        }
    }
}

fn bus_from_record(rec: &BusRecord) -> Result<Bus> {
    let damping = rec.d.unwrap_or(DEFAULT_DAMPING);
    let inertia = rec.m.unwrap_or(0.0);
    match rec.kind {
        BusKind::Generator if !(inertia > 0.0) => Err(invalid(format!(
            "generator bus {} needs M > 0",
            rec.id
        ))),
        BusKind::Load | BusKind::ZeroInjection if inertia != 0.0 => Err(invalid(format!(
            "bus {} has inertia but is not a generator",
            rec.id
        ))),
        BusKind::Generator | BusKind::Load if !(damping > 0.0) => Err(invalid(format!(
            "bus {} needs D > 0",
            rec.id
        ))),
        BusKind::ZeroInjection if rec.pin != 0.0 => Err(invalid(format!(
            "zero-injection bus {} has nonzero Pin",
            rec.id
        ))),
        BusKind::ZeroInjection if rec.d.is_some_and(|d| d != 0.0) => Err(invalid(format!(
            "zero-injection bus {} cannot have damping",
            rec.id
        ))),
        _ if !rec.pin.is_finite() => Err(invalid(format!("bus {} has non-finite Pin", rec.id))),
        kind => Ok(Bus {
            id: rec.id,
            kind,
            inertia,
            damping: if kind == BusKind::ZeroInjection { 0.0 } else { damping },
            injection: rec.pin,
        }),
    }
}

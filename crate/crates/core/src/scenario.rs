//! Scenario files.
//!
//! A scenario is one TOML document holding the bus data, optional line data,
//! the disturbance budget, the agents' bids and the procurement mode. See
//! `scenarios/case_study.toml` for a complete example.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::cost::{CostCurve, Segment};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Grid, GridSpec, Line};
use crate::h2::Kappa;
use crate::planner::Agent;
use crate::robust::DisturbanceBudget;

pub const FORMAT_VERSION: u32 = 1;

const CASE_STUDY: &str = include_str!("../scenarios/case_study.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Timescale {
    Planning,
    DayAhead,
}

impl fmt::Display for Timescale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Timescale::Planning => "planning",
            Timescale::DayAhead => "day-ahead",
        })
    }
}

/// Procurement mode: soft trade-off weight or hard performance target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Gamma(f64),
    GammaBar(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    /// 1-based bus number.
    pub id: u32,
    /// Residual inertia; `None` marks a load bus without inertia states.
    pub m0: Option<f64>,
    pub d: Option<f64>,
    /// Disturbance strength for single-scenario `h2` evaluations.
    pub pi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineRecord {
    pub from: u32,
    pub to: u32,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioAgent {
    pub id: String,
    /// Bus number as written in the file.
    pub bus: u32,
    pub bid: CostCurve,
    pub true_cost: Option<CostCurve>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub timescale: Timescale,
    pub notes: Option<String>,
    pub kappa: Kappa,
    pub budget: DisturbanceBudget,
    pub mode: Option<Mode>,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    pub agents: Vec<ScenarioAgent>,
}

impl Scenario {
    /// Buses carrying inertia states, in file order.
    pub fn inertia_buses(&self) -> impl Iterator<Item = &BusRecord> {
        self.buses.iter().filter(|b| b.m0.is_some())
    }

    /// Residual inertia over the inertia buses.
    pub fn m0(&self) -> Vec<f64> {
        self.inertia_buses().filter_map(|b| b.m0).collect()
    }

    /// Bus numbers of the inertia buses; entry `i` labels `m0()[i]`.
    pub fn bus_ids(&self) -> Vec<u32> {
        self.inertia_buses().map(|b| b.id).collect()
    }

    /// Position of bus `id` among the inertia buses.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.inertia_buses().position(|b| b.id == id)
    }

    /// Agents with bids as curves and buses as inertia-bus indices.
    pub fn agents(&self) -> Vec<Agent> {
        let index: HashMap<u32, usize> = self
            .bus_ids()
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, i))
            .collect();
        self.agents
            .iter()
            .map(|a| Agent::new(a.id.clone(), index[&a.bus], a.bid.clone()))
            .collect()
    }

    pub fn true_costs(&self) -> Option<Vec<CostCurve>> {
        self.agents.iter().map(|a| a.true_cost.clone()).collect()
    }

    /// Budget with the scenario's scaling convention folded in.
    pub fn effective_budget(&self) -> DisturbanceBudget {
        self.budget.with_kappa(self.kappa)
    }

    /// Per-bus disturbance strengths, or a uniform split of the budget.
    pub fn pi(&self) -> Vec<f64> {
        let given: Option<Vec<f64>> = self.inertia_buses().map(|b| b.pi).collect();
        given.unwrap_or_else(|| {
            let n = self.inertia_buses().count();
            vec![self.budget.pi_tot() / n as f64; n]
        })
    }

    pub fn has_topology(&self) -> bool {
        !self.lines.is_empty() || self.buses.iter().any(|b| b.d.is_some())
    }

    /// Grid over the inertia buses, if the scenario carries topology.
    pub fn grid(&self) -> Result<Option<Grid>> {
        if !self.has_topology() {
            return Ok(None);
        }
        let mut d = Vec::new();
        for b in self.inertia_buses() {
            match b.d {
                Some(x) => d.push(x),
                None => {
                    return Err(Error::Scenario(format!(
                        "bus {}: topology requires damping `d` on every inertia bus",
                        b.id
                    )))
                }
            }
        }
        let mut lines = Vec::with_capacity(self.lines.len());
        for l in &self.lines {
            let (Some(from), Some(to)) = (self.bus_index(l.from), self.bus_index(l.to)) else {
                return Err(Error::Scenario(format!(
                    "line ({}, {}) must connect inertia buses",
                    l.from, l.to
                )));
            };
            lines.push(Line {
                from,
                to,
                susceptance: l.b,
            });
        }
        build_grid(GridSpec {
            lines,
            m0: self.m0(),
            d,
            labels: self.bus_ids().iter().map(u32::to_string).collect(),
        })
        .map(Some)
    }

    /// Checks every cross-field invariant; parsing already guarantees these.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Scenario(msg));
        if self.name.trim().is_empty() {
            return err("field `name` must not be empty".into());
        }
        match self.mode {
            Some(Mode::Gamma(g)) if !(g > 0.0 && g.is_finite()) => {
                return err(format!("field `gamma` must be positive, got {g}"))
            }
            Some(Mode::GammaBar(g)) if !(g > 0.0 && g.is_finite()) => {
                return err(format!("field `gamma_bar` must be positive, got {g}"))
            }
            _ => {}
        }

        let mut ids = HashSet::new();
        for b in &self.buses {
            if b.id == 0 {
                return err("bus ids are 1-based; found id 0".into());
            }
            if !ids.insert(b.id) {
                return err(format!("duplicate bus id {}", b.id));
            }
            if let Some(m) = b.m0 {
                if !(m > 0.0 && m.is_finite()) {
                    return err(format!(
                        "bus {}: field `m0` must be positive, got {m}",
                        b.id
                    ));
                }
            } else if b.d.is_some() || b.pi.is_some() {
                return err(format!(
                    "bus {}: `d` and `pi` need an inertia state (`m0`)",
                    b.id
                ));
            }
            if let Some(d) = b.d {
                if !(d > 0.0 && d.is_finite()) {
                    return err(format!("bus {}: field `d` must be positive, got {d}", b.id));
                }
            }
            if let Some(p) = b.pi {
                if !(p >= 0.0 && p.is_finite()) {
                    return err(format!(
                        "bus {}: field `pi` must be non-negative, got {p}",
                        b.id
                    ));
                }
            }
        }
        if self.inertia_buses().next().is_none() {
            return err("no bus has residual inertia `m0`".into());
        }
        let with_pi = self.inertia_buses().filter(|b| b.pi.is_some()).count();
        if with_pi != 0 && with_pi != self.inertia_buses().count() {
            return err("`pi` must be given on every inertia bus or on none".into());
        }
        let pi_sum: f64 = self.inertia_buses().filter_map(|b| b.pi).sum();
        if pi_sum > self.budget.pi_tot() * (1.0 + 1e-12) {
            return err(format!(
                "per-bus `pi` sums to {pi_sum}, above the budget {}",
                self.budget.pi_tot()
            ));
        }

        let mut agent_ids = HashSet::new();
        for a in &self.agents {
            if a.id.is_empty() {
                return err("agent id must not be empty".into());
            }
            if !agent_ids.insert(a.id.as_str()) {
                return err(format!("duplicate agent id \"{}\"", a.id));
            }
            if !ids.contains(&a.bus) {
                return err(format!("agent \"{}\": unknown bus {}", a.id, a.bus));
            }
            if self.bus_index(a.bus).is_none() {
                return err(format!(
                    "agent \"{}\": bus {} has no inertia state (`m0`)",
                    a.id, a.bus
                ));
            }
            if let Some(tc) = &a.true_cost {
                if a.bid.cap() > tc.cap() * (1.0 + 1e-12) {
                    return err(format!(
                        "agent \"{}\": bid capacity {} exceeds true capacity {}",
                        a.id,
                        a.bid.cap(),
                        tc.cap()
                    ));
                }
            }
        }
        let with_truth = self.agents.iter().filter(|a| a.true_cost.is_some()).count();
        if with_truth != 0 && with_truth != self.agents.len() {
            return err("`true_cost` must be given for every agent or for none".into());
        }

        self.grid()?;
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    format_version: u32,
    name: String,
    timescale: Timescale,
    notes: Option<String>,
    #[serde(default)]
    kappa: Kappa,
    gamma: Option<f64>,
    gamma_bar: Option<f64>,
    disturbance: RawDisturbance,
    #[serde(default)]
    bus: Vec<Spanned<RawBus>>,
    #[serde(default)]
    line: Vec<Spanned<RawLine>>,
    #[serde(default)]
    agent: Vec<Spanned<RawAgent>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisturbance {
    set: String,
    pi_tot: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBus {
    id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    m0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pi: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    from: u32,
    to: u32,
    b: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    id: String,
    bus: u32,
    bid: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_cost: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct OutScenario<'a> {
    format_version: u32,
    name: &'a str,
    timescale: Timescale,
    #[serde(skip_serializing_if = "Option::is_none")]
    notes: Option<&'a str>,
    kappa: Kappa,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_bar: Option<f64>,
    disturbance: RawDisturbance,
    bus: Vec<RawBus>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    line: Vec<RawLine>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    agent: Vec<RawAgent>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())]
        .bytes()
        .filter(|&c| c == b'\n')
        .count()
        + 1
}

fn curve_from_pairs(pairs: &[[f64; 2]]) -> Result<CostCurve> {
    CostCurve::new(
        pairs
            .iter()
            .map(|&[width, price]| Segment { width, price })
            .collect(),
    )
}

fn pairs_from_curve(curve: &CostCurve) -> Vec<[f64; 2]> {
    curve
        .segments()
        .iter()
        .map(|s| [s.width, s.price])
        .collect()
}

/// Parse and validate scenario text; `origin` prefixes diagnostics.
pub fn parse_scenario_str(src: &str, origin: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(src)
        .map_err(|e| Error::Scenario(format!("{origin}: {}", e.to_string().trim_end())))?;
    let at = |offset: usize, msg: String| {
        Error::Scenario(format!("{origin}: line {}: {msg}", line_of(src, offset)))
    };

    if raw.format_version != FORMAT_VERSION {
        return Err(Error::Scenario(format!(
            "{origin}: field `format_version`: unsupported version {} (expected {FORMAT_VERSION})",
            raw.format_version
        )));
    }
    if raw.disturbance.set != "budget" {
        return Err(Error::Scenario(format!(
            "{origin}: field `disturbance.set`: unsupported set \"{}\" (only \"budget\")",
            raw.disturbance.set
        )));
    }
    let budget = DisturbanceBudget::new(raw.disturbance.pi_tot)
        .map_err(|e| Error::Scenario(format!("{origin}: field `disturbance.pi_tot`: {e}")))?;
    let mode = match (raw.gamma, raw.gamma_bar) {
        (Some(_), Some(_)) => {
            return Err(Error::Scenario(format!(
                "{origin}: mode error: `gamma` and `gamma_bar` are mutually exclusive"
            )))
        }
        (Some(g), None) => Some(Mode::Gamma(g)),
        (None, Some(g)) => Some(Mode::GammaBar(g)),
        (None, None) => None,
    };

    let buses: Vec<BusRecord> = raw
        .bus
        .iter()
        .map(|s| {
            let b = s.get_ref();
            BusRecord {
                id: b.id,
                m0: b.m0,
                d: b.d,
                pi: b.pi,
            }
        })
        .collect();
    let bus_ids: HashSet<u32> = buses.iter().map(|b| b.id).collect();

    let mut lines = Vec::with_capacity(raw.line.len());
    for s in &raw.line {
        let l = s.get_ref();
        for end in [l.from, l.to] {
            if !bus_ids.contains(&end) {
                return Err(at(s.span().start, format!("line: unknown bus {end}")));
            }
        }
        lines.push(LineRecord {
            from: l.from,
            to: l.to,
            b: l.b,
        });
    }

    let mut agents = Vec::with_capacity(raw.agent.len());
    for s in &raw.agent {
        let a = s.get_ref();
        let here = |msg: String| at(s.span().start, format!("agent \"{}\": {msg}", a.id));
        if !bus_ids.contains(&a.bus) {
            return Err(here(format!("field `bus`: unknown bus {}", a.bus)));
        }
        let bid = curve_from_pairs(&a.bid).map_err(|e| here(format!("field `bid`: {e}")))?;
        let true_cost = a
            .true_cost
            .as_deref()
            .map(curve_from_pairs)
            .transpose()
            .map_err(|e| here(format!("field `true_cost`: {e}")))?;
        agents.push(ScenarioAgent {
            id: a.id.clone(),
            bus: a.bus,
            bid,
            true_cost,
        });
    }

    let scenario = Scenario {
        name: raw.name,
        timescale: raw.timescale,
        notes: raw.notes,
        kappa: raw.kappa,
        budget,
        mode,
        buses,
        lines,
        agents,
    };
    scenario.validate().map_err(|e| match e {
        Error::Scenario(msg) => Error::Scenario(format!("{origin}: {msg}")),
        other => Error::Scenario(format!("{origin}: {other}")),
    })?;
    Ok(scenario)
}

/// Read, parse and validate a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let src =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario_str(&src, &path.display().to_string())
}

/// Serialize to the file format; parsing the result gives back `scenario`.
pub fn to_toml_string(scenario: &Scenario) -> Result<String> {
    let (gamma, gamma_bar) = match scenario.mode {
        Some(Mode::Gamma(g)) => (Some(g), None),
        Some(Mode::GammaBar(g)) => (None, Some(g)),
        None => (None, None),
    };
    let out = OutScenario {
        format_version: FORMAT_VERSION,
        name: &scenario.name,
        timescale: scenario.timescale,
        notes: scenario.notes.as_deref(),
        kappa: scenario.kappa,
        gamma,
        gamma_bar,
        disturbance: RawDisturbance {
            set: "budget".into(),
            pi_tot: scenario.budget.pi_tot(),
        },
        bus: scenario
            .buses
            .iter()
            .map(|b| RawBus {
                id: b.id,
                m0: b.m0,
                d: b.d,
                pi: b.pi,
            })
            .collect(),
        line: scenario
            .lines
            .iter()
            .map(|l| RawLine {
                from: l.from,
                to: l.to,
                b: l.b,
            })
            .collect(),
        agent: scenario
            .agents
            .iter()
            .map(|a| RawAgent {
                id: a.id.clone(),
                bus: a.bus,
                bid: pairs_from_curve(&a.bid),
                true_cost: a.true_cost.as_ref().map(pairs_from_curve),
            })
            .collect(),
    };
    toml::to_string(&out).map_err(|e| Error::Scenario(format!("cannot serialize scenario: {e}")))
}

/// The embedded twelve-bus, three-region case study.
pub fn case_study() -> Scenario {
    parse_scenario_str(CASE_STUDY, "case_study.toml").expect("embedded case study is valid")
}

/// Source text of the embedded case study.
pub fn case_study_source() -> &'static str {
    CASE_STUDY
}

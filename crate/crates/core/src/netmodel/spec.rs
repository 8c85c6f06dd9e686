//! Declarative system description and its JSON configuration schema.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::NetError;
use crate::dynamics::{GfcParams, SgParams};
use crate::phasor::PerUnitBase;

/// Modeling framework.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    /// Network and stator electromagnetics kept as differential equations.
    #[default]
    Spc,
    /// Algebraic Y-bus network, stator transients neglected, static loads.
    Qpc,
}

impl Framework {
    pub fn as_str(self) -> &'static str {
        match self {
            Framework::Spc => "spc",
            Framework::Qpc => "qpc",
        }
    }
}

impl std::str::FromStr for Framework {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spc" => Ok(Framework::Spc),
            "qpc" => Ok(Framework::Qpc),
            other => Err(format!("unknown framework `{other}` (expected spc or qpc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: u32,
    pub base_kv: f64,
    pub kind: BusKind,
    pub area: u32,
    /// Fixed shunt capacitor bank, Mvar at 1 pu voltage (positive = capacitive).
    #[serde(default)]
    pub shunt_mvar: f64,
}

/// Transmission line, pu on the system base. `b` is the total charging susceptance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b: f64,
    /// Number of series pi-sections; tie lines fall back to `defaults.tie_sections`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sections: Option<usize>,
    /// Counted in the inter-area tie-line flow.
    #[serde(default)]
    pub tie: bool,
}

/// Two-winding transformer, pu on the system base, off-nominal tap on the `from` side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transformer {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    #[serde(default = "one")]
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadModel {
    /// Constant impedance folded into the Y-bus.
    Static,
    /// Constant impedance realized as a series R-L branch with current states.
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub bus: u32,
    pub p_mw: f64,
    pub q_mvar: f64,
    /// Absent means: dynamic under SPC, static under QPC.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<LoadModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MachineKind {
    Sg,
    Gfc,
}

/// A generating unit. SGs sit on their terminal bus; GFCs sit on the
/// high-voltage bus and carry their own step-up transformer in `gfc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Machine {
    pub id: String,
    pub bus: u32,
    pub kind: MachineKind,
    pub rating_mva: f64,
    /// Active power dispatch. Ignored for the angle-reference machine.
    pub p_mw: f64,
    /// Regulated voltage magnitude (SG terminal or GFC filter capacitor).
    pub v_pu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gfc: Option<GfcParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sg: Option<SgParams>,
}

impl Machine {
    pub fn gfc_params(&self) -> Option<&GfcParams> {
        self.gfc.as_ref()
    }

    pub fn sg_params(&self) -> Option<&SgParams> {
        self.sg.as_ref()
    }
}

/// Default block. Every field has a documented fallback so an empty
/// `defaults` object is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Defaults {
    pub s_base_mva: f64,
    pub f_base_hz: f64,
    /// pi-sections used for tie lines without an explicit count.
    pub tie_sections: usize,
    /// Shunt susceptance (pu) given to network buses that would otherwise
    /// carry no capacitance, so every bus voltage is a state under SPC.
    pub stray_b: f64,
    pub pf_tolerance: f64,
    pub pf_max_iter: usize,
    pub pade_order: usize,
    pub gfc: GfcParams,
    pub sg: SgParams,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            s_base_mva: 100.0,
            f_base_hz: 60.0,
            tie_sections: 2,
            stray_b: 0.05,
            pf_tolerance: 1e-8,
            pf_max_iter: 30,
            pade_order: 2,
            gfc: GfcParams::default(),
            sg: SgParams::default(),
        }
    }
}

/// Validated system description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default)]
    pub case: String,
    /// Free-form description of the case and its data assumptions.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    pub framework: Framework,
    #[serde(default)]
    pub defaults: Defaults,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub transformers: Vec<Transformer>,
    #[serde(default)]
    pub loads: Vec<Load>,
    pub machines: Vec<Machine>,
}

fn one() -> f64 {
    1.0
}

/// Bundled configurations, embedded so that every front end sees the same data.
pub mod bundled {
    pub const CASE1: &str = include_str!("../../cases/case1.json");
    pub const CASE2: &str = include_str!("../../cases/case2.json");
    pub const CASE3: &str = include_str!("../../cases/case3.json");
    pub const CASE4: &str = include_str!("../../cases/case4.json");

    pub fn all() -> [(&'static str, &'static str); 4] {
        [
            ("case1", CASE1),
            ("case2", CASE2),
            ("case3", CASE3),
            ("case4", CASE4),
        ]
    }

    pub fn by_name(name: &str) -> Option<&'static str> {
        all().into_iter().find(|(n, _)| *n == name).map(|(_, s)| s)
    }
}

/// Parses and validates a JSON configuration document.
pub fn parse_system(document: &str) -> Result<SystemSpec, NetError> {
    let mut spec: SystemSpec =
        serde_json::from_str(document).map_err(|e| NetError::Schema(e.to_string()))?;
    spec.fill_defaults();
    spec.validate()?;
    Ok(spec)
}

impl SystemSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("SystemSpec serializes")
    }

    pub fn base(&self) -> PerUnitBase {
        let kv = self.buses.first().map_or(230.0, |b| b.base_kv);
        PerUnitBase {
            s_base: self.defaults.s_base_mva,
            v_base: kv,
            f_base: self.defaults.f_base_hz,
        }
    }

    pub fn omega_base(&self) -> f64 {
        2.0 * PI * self.defaults.f_base_hz
    }

    /// Copies the default parameter blocks onto machines that do not carry
    /// their own, and pins tie-line section counts.
    fn fill_defaults(&mut self) {
        for m in &mut self.machines {
            match m.kind {
                MachineKind::Gfc => {
                    m.gfc.get_or_insert_with(|| self.defaults.gfc.clone());
                    m.sg = None;
                }
                MachineKind::Sg => {
                    m.sg.get_or_insert_with(|| self.defaults.sg.clone());
                    m.gfc = None;
                }
            }
        }
        for br in &mut self.branches {
            if br.sections.is_none() {
                br.sections = Some(if br.tie { self.defaults.tie_sections } else { 1 });
            }
        }
    }

    fn validate(&self) -> Result<(), NetError> {
        let d = &self.defaults;
        if !(d.s_base_mva > 0.0 && d.f_base_hz > 0.0) {
            return Err(NetError::Schema("defaults: bases must be positive".into()));
        }
        if d.stray_b < 0.0 {
            return Err(NetError::NegativeImpedance("defaults.stray_b".into()));
        }
        if self.buses.is_empty() {
            return Err(NetError::Schema("buses: at least one bus required".into()));
        }
        let mut ids = BTreeSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return Err(NetError::Schema(format!("buses: duplicate id {}", b.id)));
            }
            if b.base_kv <= 0.0 {
                return Err(NetError::Schema(format!("buses: bus {} base_kv must be positive", b.id)));
            }
        }
        let known = |id: u32, what: &str| -> Result<(), NetError> {
            if ids.contains(&id) {
                Ok(())
            } else {
                Err(NetError::Schema(format!("{what}: unknown bus {id}")))
            }
        };
        for (k, br) in self.branches.iter().enumerate() {
            known(br.from, "branches")?;
            known(br.to, "branches")?;
            if br.r < 0.0 || br.x < 0.0 || br.b < 0.0 {
                return Err(NetError::NegativeImpedance(format!("branches[{k}] {}-{}", br.from, br.to)));
            }
            if br.x <= 0.0 {
                return Err(NetError::Schema(format!("branches[{k}]: x must be positive")));
            }
            if br.sections == Some(0) {
                return Err(NetError::Schema(format!("branches[{k}]: sections must be >= 1")));
            }
        }
        for (k, t) in self.transformers.iter().enumerate() {
            known(t.from, "transformers")?;
            known(t.to, "transformers")?;
            if t.r < 0.0 || t.x < 0.0 {
                return Err(NetError::NegativeImpedance(format!("transformers[{k}] {}-{}", t.from, t.to)));
            }
            if t.x <= 0.0 || t.ratio <= 0.0 {
                return Err(NetError::Schema(format!("transformers[{k}]: x and ratio must be positive")));
            }
        }
        for l in &self.loads {
            known(l.bus, "loads")?;
        }
        let mut machine_bus = BTreeMap::new();
        let mut machine_ids = BTreeSet::new();
        for m in &self.machines {
            known(m.bus, "machines")?;
            if !machine_ids.insert(m.id.as_str()) {
                return Err(NetError::Schema(format!("machines: duplicate id {}", m.id)));
            }
            if machine_bus.insert(m.bus, m.id.as_str()).is_some() {
                return Err(NetError::DuplicateMachine(m.bus));
            }
            if m.rating_mva <= 0.0 {
                return Err(NetError::Schema(format!("machines: {} rating must be positive", m.id)));
            }
            if m.v_pu <= 0.0 {
                return Err(NetError::Schema(format!("machines: {} v_pu must be positive", m.id)));
            }
            match m.kind {
                MachineKind::Gfc => m.gfc.as_ref().expect("filled").validate(&m.id)?,
                MachineKind::Sg => m.sg.as_ref().expect("filled").validate(&m.id)?,
            }
        }
        let mut slack = 0;
        for b in &self.buses {
            let has_machine = machine_bus.contains_key(&b.id);
            match b.kind {
                BusKind::Slack => {
                    slack += 1;
                    if !has_machine {
                        return Err(NetError::NoAngleReference);
                    }
                }
                BusKind::Pv if !has_machine => {
                    return Err(NetError::Schema(format!("buses: PV bus {} has no machine", b.id)))
                }
                BusKind::Pq if has_machine => {
                    return Err(NetError::Schema(format!("buses: machine on PQ bus {}", b.id)))
                }
                _ => {}
            }
        }
        if slack == 0 {
            return Err(NetError::NoAngleReference);
        }
        if slack > 1 {
            return Err(NetError::Schema("buses: exactly one slack bus allowed".into()));
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<(), NetError> {
        let index: BTreeMap<u32, usize> = self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        let edges = self
            .branches
            .iter()
            .map(|b| (b.from, b.to))
            .chain(self.transformers.iter().map(|t| (t.from, t.to)));
        for (f, t) in edges {
            let (f, t) = (index[&f], index[&t]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for &j in &adj[k] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(k) => Err(NetError::Disconnected(self.buses[k].id)),
            None => Ok(()),
        }
    }

    pub fn bus(&self, id: u32) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn area_of(&self, machine: &Machine) -> u32 {
        self.bus(machine.bus).map_or(0, |b| b.area)
    }

    pub fn gfc_count(&self) -> usize {
        self.machines.iter().filter(|m| m.kind == MachineKind::Gfc).count()
    }

    pub fn sg_count(&self) -> usize {
        self.machines.iter().filter(|m| m.kind == MachineKind::Sg).count()
    }

    pub fn reference_machine(&self) -> Option<&Machine> {
        let slack = self.buses.iter().find(|b| b.kind == BusKind::Slack)?;
        self.machines.iter().find(|m| m.bus == slack.id)
    }

    /// Sets the droop-loop delay on every GFC.
    pub fn set_tau_p(&mut self, tau: f64) {
        self.defaults.gfc.tau_p = tau;
        for m in &mut self.machines {
            if let Some(g) = m.gfc.as_mut() {
                g.tau_p = tau;
            }
        }
    }

    /// Applies `f` to every GFC parameter block (including the default one).
    pub fn map_gfc(&mut self, mut f: impl FnMut(&mut GfcParams)) {
        f(&mut self.defaults.gfc);
        for m in &mut self.machines {
            if let Some(g) = m.gfc.as_mut() {
                f(g);
            }
        }
    }

    pub fn load_model(&self, load: &Load) -> LoadModel {
        load.model.unwrap_or(match self.framework {
            Framework::Spc => LoadModel::Dynamic,
            Framework::Qpc => LoadModel::Static,
        })
    }
}

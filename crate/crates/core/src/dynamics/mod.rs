//! Component dynamic models and the assembler that composes them into one
//! residual `dx/dt = f(x, u, x_delayed)`.
//!
//! Machines are modeled in their own rotating d-q frames; the network and
//! loads live in a D-Q frame rotating at nominal speed. The framework
//! decides how the network and the SG stators are represented:
//!
//! | component | QPC | SPC |
//! |-----------|-----|-----|
//! | SG stator | algebraic | current state pair |
//! | network   | Y-bus solve | R-L / shunt-C states |
//! | loads     | static admittance | series R-L states |
//! | GFC       | identical | identical |

pub mod gfc;
pub mod network;
pub mod sg;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub use gfc::{Gfc, GfcParams};
pub use network::{LoadBranch, QpcNetwork, SpcNetwork};
pub use sg::{Sg, SgParams};

use crate::netmodel::grid::Grid;
use crate::netmodel::{Framework, LoadModel, MachineKind, PowerFlowSolution, SystemSpec};

#[derive(Debug, Error)]
pub enum DynError {
    #[error("machine {0}: terminal condition infeasible at equilibrium")]
    InfeasibleTerminal(String),
    #[error("load {0}: a dynamic (series R-L) load needs inductive reactive power")]
    CapacitiveDynamicLoad(String),
    #[error("QPC network Y-matrix is singular (islanded node?)")]
    SingularYBus,
    #[error("unit mismatch: {0}")]
    UnitMismatch(String),
    #[error("duplicate machine at bus {0}")]
    DuplicateMachine(u32),
    #[error("power flow does not belong to this system: {0}")]
    ForeignPowerFlow(String),
}

/// Metadata for one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateMeta {
    pub name: String,
    /// Machine id, or `net` for network states, or `pade` for delay states.
    pub owner: String,
    pub area: Option<u32>,
}

/// A delayed signal feeding the residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayTap {
    pub machine: String,
    /// Tapped state index.
    pub source: usize,
    /// Seconds.
    pub delay: f64,
}

/// An output is a state read straight from `x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputDef {
    pub name: String,
    pub state: usize,
}

#[derive(Debug, Clone)]
pub enum NetworkModel {
    Spc(SpcNetwork),
    Qpc(QpcNetwork),
}

#[derive(Debug, Clone)]
pub struct AssembledModel {
    pub framework: Framework,
    pub omega_b: f64,
    pub f_base: f64,
    pub states: Vec<StateMeta>,
    pub taps: Vec<DelayTap>,
    pub inputs: Vec<String>,
    pub outputs: Vec<OutputDef>,
    pub gfcs: Vec<Gfc>,
    pub sgs: Vec<Sg>,
    pub network: NetworkModel,
    /// Machine ids in configuration order, with their areas.
    pub machines: Vec<(String, MachineKind, u32)>,
}

/// Equilibrium point of an assembled model.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
    pub framework: Framework,
}

impl OperatingPoint {
    /// Values of every tap source at equilibrium (the delay-line history).
    pub fn delayed(&self, model: &AssembledModel) -> Vec<f64> {
        model.taps.iter().map(|t| self.x0[t.source]).collect()
    }
}

/// Builds the executable model. Constant-impedance loads take their
/// impedance from the power-flow voltage so both frameworks reproduce the
/// power-flow operating point.
pub fn assemble(spec: &SystemSpec, pf: &PowerFlowSolution) -> Result<AssembledModel, DynError> {
    let framework = spec.framework;
    let omega_b = spec.omega_base();
    let s_base = spec.defaults.s_base_mva;
    let grid = Grid::network(spec);
    if pf.grid.network_nodes != grid.nodes.len()
        || pf.grid.nodes[..grid.nodes.len()] != grid.nodes[..]
    {
        return Err(DynError::ForeignPowerFlow("network node sets differ".into()));
    }
    let mut seen_bus = std::collections::BTreeSet::new();
    for m in &spec.machines {
        if !seen_bus.insert(m.bus) {
            return Err(DynError::DuplicateMachine(m.bus));
        }
    }
    for br in &spec.branches {
        let kv = |id| spec.bus(id).map(|b| b.base_kv);
        if kv(br.from) != kv(br.to) {
            return Err(DynError::UnitMismatch(format!(
                "line {}-{} joins buses with different base kV",
                br.from, br.to
            )));
        }
    }

    let mut states = Vec::new();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut taps = Vec::new();
    let mut gfcs = Vec::new();
    let mut sgs = Vec::new();
    let mut machines = Vec::new();

    for m in &spec.machines {
        let node = grid.node_of_bus(m.bus).expect("validated");
        let area = spec.area_of(m);
        let offset = states.len();
        let input = inputs.len();
        inputs.push(format!("{}.dPref", m.id));
        machines.push((m.id.clone(), m.kind, area));
        match m.kind {
            MachineKind::Gfc => {
                let params = m.gfc.clone().expect("filled");
                for name in gfc::STATE_NAMES {
                    states.push(StateMeta {
                        name: format!("{}.{name}", m.id),
                        owner: m.id.clone(),
                        area: Some(area),
                    });
                }
                for (name, k) in [("vdc", gfc::VDC), ("itd", gfc::IT), ("itq", gfc::IT + 1)] {
                    outputs.push(OutputDef {
                        name: format!("{}.{name}", m.id),
                        state: offset + k,
                    });
                }
                let tap = taps.len();
                taps.push(DelayTap {
                    machine: m.id.clone(),
                    source: offset + gfc::PF,
                    delay: params.tau_p,
                });
                gfcs.push(Gfc {
                    id: m.id.clone(),
                    params,
                    offset,
                    node,
                    area,
                    input,
                    tap: Some(tap),
                    scale: m.rating_mva / s_base,
                    omega_b,
                    p_star: 0.0,
                    v_star: 1.0,
                });
            }
            MachineKind::Sg => {
                let params = m.sg.clone().expect("filled");
                for name in &sg::STATE_NAMES[..sg::state_count(framework)] {
                    states.push(StateMeta {
                        name: format!("{}.{name}", m.id),
                        owner: m.id.clone(),
                        area: Some(area),
                    });
                }
                outputs.push(OutputDef {
                    name: format!("{}.omega", m.id),
                    state: offset + sg::OMEGA,
                });
                sgs.push(Sg {
                    id: m.id.clone(),
                    params,
                    framework,
                    offset,
                    node,
                    area,
                    input,
                    scale: m.rating_mva / s_base,
                    omega_b,
                    v_ref: 1.0,
                    p_ref: 0.0,
                });
            }
        }
    }

    let mut dynamic_loads = Vec::new();
    let mut static_loads = Vec::new();
    for (k, l) in spec.loads.iter().enumerate() {
        let s = Complex64::new(l.p_mw, l.q_mvar) / s_base;
        if s.norm() == 0.0 {
            continue;
        }
        let node = grid.node_of_bus(l.bus).expect("validated");
        let branch = LoadBranch::from_power(format!("load{}@{}", k + 1, l.bus), node, s, pf.voltages[node]);
        match (framework, spec.load_model(l)) {
            (Framework::Spc, LoadModel::Dynamic) => dynamic_loads.push(branch),
            _ => static_loads.push(branch),
        }
    }

    let network = match framework {
        Framework::Spc => {
            let net = SpcNetwork::new(grid, omega_b, states.len(), dynamic_loads, static_loads)?;
            for (k, br) in net.grid.branches.iter().enumerate() {
                for ax in ["D", "Q"] {
                    states.push(StateMeta {
                        name: format!("net.i[{}].{ax}", br.label),
                        owner: "net".into(),
                        area: Some(net.grid.nodes[br.from].area),
                    });
                }
                debug_assert_eq!(states.len(), net.branch_state(k) + 2);
            }
            for node in &net.grid.nodes {
                for ax in ["D", "Q"] {
                    states.push(StateMeta {
                        name: format!("net.v[{}].{ax}", node.label),
                        owner: "net".into(),
                        area: Some(node.area),
                    });
                }
            }
            for ld in &net.dynamic_loads {
                for ax in ["D", "Q"] {
                    states.push(StateMeta {
                        name: format!("net.i[{}].{ax}", ld.label),
                        owner: "net".into(),
                        area: Some(net.grid.nodes[ld.node].area),
                    });
                }
            }
            NetworkModel::Spc(net)
        }
        Framework::Qpc => {
            let norton: Vec<(usize, Complex64)> = sgs.iter().map(|g| (g.node, g.norton_admittance())).collect();
            NetworkModel::Qpc(QpcNetwork::new(grid, static_loads, &norton)?)
        }
    };

    let mut model = AssembledModel {
        framework,
        omega_b,
        f_base: spec.defaults.f_base_hz,
        states,
        taps,
        inputs,
        outputs,
        gfcs,
        sgs,
        network,
        machines,
    };
    // set-points come from the dispatch; the states computed here are discarded
    let mut scratch = vec![0.0; model.n_states()];
    model.initialize_components(pf, &mut scratch)?;
    Ok(model)
}

impl AssembledModel {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    pub fn state_names(&self) -> Vec<String> {
        self.states.iter().map(|s| s.name.clone()).collect()
    }

    fn node_count(&self) -> usize {
        match &self.network {
            NetworkModel::Spc(n) => n.grid.nodes.len(),
            NetworkModel::Qpc(n) => n.grid.nodes.len(),
        }
    }

    pub fn network_grid(&self) -> &Grid {
        match &self.network {
            NetworkModel::Spc(n) => &n.grid,
            NetworkModel::Qpc(n) => &n.grid,
        }
    }

    /// Same model with every delay tap removed (droop uses the undelayed
    /// filtered power).
    pub fn without_delay_taps(&self) -> AssembledModel {
        let mut m = self.clone();
        m.taps.clear();
        for g in &mut m.gfcs {
            g.tap = None;
        }
        m
    }

    /// Node voltages in the network frame for state `x`.
    pub fn node_voltages(&self, x: &[f64]) -> Vec<Complex64> {
        match &self.network {
            NetworkModel::Spc(net) => net.voltages(x),
            NetworkModel::Qpc(net) => net.solve(&self.injections(x)),
        }
    }

    fn injections(&self, x: &[f64]) -> Vec<Complex64> {
        let mut inj = vec![Complex64::new(0.0, 0.0); self.node_count()];
        for g in &self.gfcs {
            inj[g.node] += g.injection(x);
        }
        for g in &self.sgs {
            inj[g.node] += g.injection(x);
        }
        inj
    }

    fn tap_value(&self, g: &Gfc, delayed: &[f64]) -> Option<f64> {
        g.tap.map(|k| delayed[k])
    }

    /// Evaluates `dx = f(x, u, delayed)`. `delayed[k]` is the value of tap
    /// `k`'s source state at `t - delay_k`.
    pub fn eval(&self, x: &[f64], u: &[f64], delayed: &[f64], dx: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_states());
        let inj = self.injections(x);
        let v = match &self.network {
            NetworkModel::Spc(net) => {
                net.residual(x, &inj, dx);
                net.voltages(x)
            }
            NetworkModel::Qpc(net) => net.solve(&inj),
        };
        for g in &self.gfcs {
            g.residual(x, v[g.node], u[g.input], self.tap_value(g, delayed), dx);
        }
        for g in &self.sgs {
            g.residual(x, v[g.node], u[g.input], dx);
        }
    }

    /// Convenience wrapper returning a fresh derivative vector.
    pub fn residual(&self, x: &[f64], u: &[f64], delayed: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.n_states()];
        self.eval(x, u, delayed, &mut dx);
        dx
    }

    /// Droop frequency of every GFC, pu.
    pub fn gfc_frequencies(&self, x: &[f64], u: &[f64], delayed: &[f64]) -> Vec<f64> {
        self.gfcs
            .iter()
            .map(|g| g.omega_c(x, u[g.input], self.tap_value(g, delayed)))
            .collect()
    }

    fn initialize_components(&mut self, pf: &PowerFlowSolution, x: &mut [f64]) -> Result<(), DynError> {
        for g in &mut self.gfcs {
            let cap = pf
                .grid
                .node_by_label(&format!("{}.vc", g.id))
                .ok_or_else(|| DynError::ForeignPowerFlow(g.id.clone()))?;
            g.initialize(pf.voltages[cap], pf.voltages[g.node], x)?;
        }
        for g in &mut self.sgs {
            let d = pf.machine(&g.id).ok_or_else(|| DynError::ForeignPowerFlow(g.id.clone()))?;
            let v = pf.voltages[g.node];
            let i_sys = (Complex64::new(d.p, d.q) / v).conj();
            g.initialize(v, i_sys, x)?;
        }
        if let NetworkModel::Spc(net) = &self.network {
            net.initialize(&pf.voltages[..net.grid.nodes.len()], x);
        }
        Ok(())
    }

    /// Back-solves every state so the model starts at rest: integrators
    /// hold their steady outputs and the delay history equals the steady value.
    pub fn initialize_states(&self, pf: &PowerFlowSolution) -> Result<OperatingPoint, DynError> {
        let mut scratch = self.clone();
        let mut x0 = vec![0.0; self.n_states()];
        scratch.initialize_components(pf, &mut x0)?;
        Ok(OperatingPoint {
            x0,
            u0: vec![0.0; self.n_inputs()],
            framework: self.framework,
        })
    }

    /// Infinity norm of the residual at the operating point.
    pub fn equilibrium_residual(&self, op: &OperatingPoint) -> f64 {
        let d = op.delayed(self);
        self.residual(&op.x0, &op.u0, &d).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sets the droop delay of every GFC (and its tap).
    pub fn set_tau_p(&mut self, tau: f64) {
        for g in &mut self.gfcs {
            g.params.tau_p = tau;
            if let Some(k) = g.tap {
                self.taps[k].delay = tau;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::spec::{bundled, parse_system};
    use crate::netmodel::{initialize_states, Prepared};
    use crate::phasor::rotate;

    fn prepared(case: &str, fw: Framework) -> Prepared {
        let mut spec = parse_system(bundled::by_name(case).unwrap()).unwrap();
        spec.framework = fw;
        initialize_states(&spec).unwrap()
    }

    fn perturbed(p: &Prepared, scale: f64) -> Vec<f64> {
        p.op
            .x0
            .iter()
            .enumerate()
            .map(|(k, v)| v + scale * (((k * 7919) % 101) as f64 / 101.0 - 0.5))
            .collect()
    }

    #[test]
    fn every_case_starts_at_equilibrium() {
        for (case, _) in bundled::all() {
            for fw in [Framework::Spc, Framework::Qpc] {
                let p = prepared(case, fw);
                let r = p.model.equilibrium_residual(&p.op);
                assert!(r <= 1e-8, "{case} {fw:?}: {r:e}");
            }
        }
    }

    #[test]
    fn spc_adds_network_and_stator_states() {
        for (case, _) in bundled::all() {
            let spc = prepared(case, Framework::Spc);
            let qpc = prepared(case, Framework::Qpc);
            let NetworkModel::Spc(net) = &spc.model.network else { panic!() };
            let extra = 2 * (net.grid.branches.len() + net.grid.nodes.len() + net.dynamic_loads.len()) + 2 * spc.model.sgs.len();
            assert_eq!(spc.model.n_states(), qpc.model.n_states() + extra, "{case}");
        }
    }

    #[test]
    fn io_layout() {
        let p = prepared("case4", Framework::Spc);
        assert_eq!((p.model.n_inputs(), p.model.n_outputs()), (4, 12));
        assert_eq!(p.model.taps.len(), 4);
        let p = prepared("case1", Framework::Qpc);
        assert_eq!(p.model.n_inputs(), 4);
        assert_eq!(p.model.gfcs.len(), 2);
        assert_eq!(p.model.sgs.len(), 2);
    }

    #[test]
    fn assemble_is_deterministic() {
        let a = prepared("case3", Framework::Spc);
        let b = prepared("case3", Framework::Spc);
        assert_eq!(a.model.states, b.model.states);
        assert_eq!(a.op, b.op);
    }

    #[test]
    fn frameworks_share_the_operating_point() {
        let spc = prepared("case2", Framework::Spc);
        let qpc = prepared("case2", Framework::Qpc);
        for (k, meta) in qpc.model.states.iter().enumerate() {
            let j = spc.model.state_index(&meta.name).unwrap();
            assert!((qpc.op.x0[k] - spc.op.x0[j]).abs() <= 1e-8, "{}", meta.name);
        }
        let (vs, vq) = (spc.model.node_voltages(&spc.op.x0), qpc.model.node_voltages(&qpc.op.x0));
        for (a, b) in vs.iter().zip(&vq) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn droop_identity() {
        let p = prepared("case4", Framework::Qpc);
        for g in &p.model.gfcs {
            let w = g.omega_c(&p.op.x0, 0.0, Some(g.p_star));
            assert_eq!(w, g.params.omega_star);
        }
    }

    #[test]
    fn zero_delay_passthrough() {
        let p = prepared("case4", Framework::Spc);
        let mut m = p.model.clone();
        m.set_tau_p(0.0);
        let x = perturbed(&p, 1e-3);
        let delayed: Vec<f64> = m.taps.iter().map(|t| x[t.source]).collect();
        let a = m.residual(&x, &p.op.u0, &delayed);
        let b = m.without_delay_taps().residual(&x, &p.op.u0, &[]);
        assert_eq!(a, b);
    }

    #[test]
    fn spc_network_conserves_power() {
        for case in ["case1", "case4"] {
            let p = prepared(case, Framework::Spc);
            let x = perturbed(&p, 1e-2);
            let d = p.op.delayed(&p.model);
            let dx = p.model.residual(&x, &p.op.u0, &d);
            let NetworkModel::Spc(net) = &p.model.network else { panic!() };
            let v = net.voltages(&x);
            let inj = p.model.injections(&x);
            let supplied: f64 = v.iter().zip(&inj).map(|(v, i)| (v * i.conj()).re).sum();
            let balance = net.dissipation(&x) + net.stored_energy_rate(&x, &dx);
            assert!((supplied - balance).abs() < 1e-9 * supplied.abs().max(1.0), "{case}: {supplied} vs {balance}");
        }
    }

    #[test]
    fn global_rotation_symmetry() {
        for (case, fw) in [("case4", Framework::Spc), ("case1", Framework::Spc), ("case2", Framework::Qpc)] {
            let p = prepared(case, fw);
            let m = &p.model;
            let x = perturbed(&p, 1e-3);
            let d = p.op.delayed(m);
            let delta = 0.7;
            let mut xr = x.clone();
            for g in &m.gfcs {
                xr[g.offset + gfc::THETA] += delta;
            }
            for g in &m.sgs {
                xr[g.offset + sg::DELTA] += delta;
            }
            let mut net_pairs = Vec::new();
            if let NetworkModel::Spc(net) = &m.network {
                net_pairs.extend((0..net.n_states() / 2).map(|k| net.offset + 2 * k));
            }
            for &s in &net_pairs {
                let z = rotate(Complex64::new(x[s], x[s + 1]), -delta);
                xr[s] = z.re;
                xr[s + 1] = z.im;
            }
            let a = m.residual(&x, &p.op.u0, &d);
            let b = m.residual(&xr, &p.op.u0, &d);
            let mut k = 0;
            while k < a.len() {
                if net_pairs.contains(&k) {
                    let (na, nb) = (a[k].hypot(a[k + 1]), b[k].hypot(b[k + 1]));
                    assert!((na - nb).abs() < 1e-10 * na.max(1.0), "{case} pair {k}");
                    k += 2;
                } else {
                    assert!((a[k] - b[k]).abs() < 1e-10 * a[k].abs().max(1.0), "{case} state {}", m.states[k].name);
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn sg_speed_is_still_at_rest() {
        for fw in [Framework::Spc, Framework::Qpc] {
            let p = prepared("case2", fw);
            let dx = p.model.residual(&p.op.x0, &p.op.u0, &p.op.delayed(&p.model));
            for g in &p.model.sgs {
                assert!(dx[g.offset + sg::OMEGA].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lone_unloaded_converter_runs_at_nominal_speed() {
        let doc = r#"{
          "framework": "spc",
          "buses": [{"id": 1, "base_kv": 230, "kind": "slack", "area": 1},
                    {"id": 2, "base_kv": 230, "kind": "pq", "area": 1}],
          "branches": [{"from": 1, "to": 2, "r": 0.001, "x": 0.01, "b": 0.01}],
          "machines": [{"id": "GFC1", "bus": 1, "kind": "gfc", "rating_mva": 100, "p_mw": 0, "v_pu": 1.0}]
        }"#;
        let p = initialize_states(&parse_system(doc).unwrap()).unwrap();
        assert!(p.model.equilibrium_residual(&p.op) < 1e-8);
        let w = p.model.gfc_frequencies(&p.op.x0, &p.op.u0, &p.op.delayed(&p.model));
        assert_eq!(w, vec![1.0]);
        let NetworkModel::Spc(net) = &p.model.network else { panic!() };
        let i = Complex64::new(p.op.x0[net.branch_state(0)], p.op.x0[net.branch_state(0) + 1]);
        assert!(i.norm() < 0.01, "{i}");
    }
}

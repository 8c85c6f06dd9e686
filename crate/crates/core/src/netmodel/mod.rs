//! System description, configuration ingestion, power flow and equilibrium
//! initialization.

pub mod grid;
pub mod powerflow;
pub mod spec;

use thiserror::Error;

pub use grid::Grid;
pub use powerflow::{run_power_flow, PowerFlowReport, PowerFlowSolution};
pub use spec::{
    bundled, parse_system, Branch, Bus, BusKind, Defaults, Framework, Load, LoadModel, Machine, MachineKind,
    SystemSpec, Transformer,
};

use crate::dynamics::{assemble, AssembledModel, DynError, OperatingPoint};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("network is disconnected: bus {0} unreachable")]
    Disconnected(u32),
    #[error("no angle reference: exactly one slack bus hosting a machine is required")]
    NoAngleReference,
    #[error("negative impedance in {0}")]
    NegativeImpedance(String),
    #[error("duplicate machine at bus {0}")]
    DuplicateMachine(u32),
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    NotConverged { iterations: usize, mismatch: f64 },
    #[error("power-flow Jacobian is singular")]
    SingularJacobian,
    #[error(transparent)]
    Dynamics(#[from] DynError),
}

/// Power flow, assembled model and equilibrium for one specification.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: SystemSpec,
    pub pf: PowerFlowSolution,
    pub model: AssembledModel,
    pub op: OperatingPoint,
}

/// Runs power flow, assembles the model in `spec.framework` and back-solves
/// the equilibrium.
pub fn initialize_states(spec: &SystemSpec) -> Result<Prepared, NetError> {
    let pf = run_power_flow(spec)?;
    let model = assemble(spec, &pf)?;
    let op = model.initialize_states(&pf)?;
    Ok(Prepared {
        spec: spec.clone(),
        pf,
        model,
        op,
    })
}

impl Prepared {
    /// Same specification rebuilt under another framework (sharing the power flow).
    pub fn with_framework(&self, framework: Framework) -> Result<Prepared, NetError> {
        let mut spec = self.spec.clone();
        spec.framework = framework;
        let model = assemble(&spec, &self.pf)?;
        let op = model.initialize_states(&self.pf)?;
        Ok(Prepared {
            spec,
            pf: self.pf.clone(),
            model,
            op,
        })
    }
}

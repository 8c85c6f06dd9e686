use std::fmt;

use ssolab::modal_id::ModalIdError;
use ssolab::netmodel::NetError;
use ssolab::report::ReportError;
use ssolab::smallsignal::SmallSignalError;
use ssolab::timedomain::TimeDomainError;
use ssolab::dynamics::DynError;

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed input, write failures.
    Usage(String),
    /// Non-convergence, divergence, failed numerics.
    Numeric(String),
    /// The model contradicts itself (equilibrium, singular network).
    Consistency(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Consistency(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) | CliError::Consistency(m) => f.write_str(m),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        let msg = format!("netmodel: {e}");
        match e {
            NetError::NotConverged { .. } | NetError::SingularJacobian => CliError::Numeric(msg),
            NetError::Dynamics(DynError::InfeasibleTerminal(_) | DynError::SingularYBus | DynError::ForeignPowerFlow(_) | DynError::UnitMismatch(_)) => {
                CliError::Consistency(msg)
            }
            _ => CliError::Usage(msg),
        }
    }
}

impl From<SmallSignalError> for CliError {
    fn from(e: SmallSignalError) -> Self {
        let msg = format!("smallsignal: {e}");
        match e {
            SmallSignalError::NotEquilibrium(_) | SmallSignalError::Defective | SmallSignalError::MissingObservable(_) => CliError::Consistency(msg),
            SmallSignalError::NonFiniteJacobian(_) | SmallSignalError::Eigen(_) => CliError::Numeric(msg),
            SmallSignalError::NegativeDelay(_) | SmallSignalError::PadeOrder(_) | SmallSignalError::BadGrid => CliError::Usage(msg),
        }
    }
}

impl From<TimeDomainError> for CliError {
    fn from(e: TimeDomainError) -> Self {
        CliError::Usage(format!("timedomain: {e}"))
    }
}

impl From<ModalIdError> for CliError {
    fn from(e: ModalIdError) -> Self {
        let msg = format!("modal-id: {e}");
        match e {
            ModalIdError::IllConditioned(_) => CliError::Numeric(msg),
            _ => CliError::Usage(msg),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Usage(format!("report: {e}"))
    }
}

//! Small-signal and time-domain analysis of subsynchronous oscillations in
//! grids with droop-controlled grid-forming converters (GFCs).
//!
//! The pipeline is: [`netmodel`] (configuration, power flow, equilibrium)
//! → [`dynamics`] (component models in either framework) →
//! [`smallsignal`] (linearization with Padé-rationalized droop delay,
//! modes, participation, mode shapes, σ_max response, delay sweeps,
//! grouping classification) and [`timedomain`] (nonlinear simulation with
//! true delay buffers) → [`modal_id`] (Prony / matrix-pencil ringdown
//! identification).

pub mod dynamics;
pub mod modal_id;
pub mod netmodel;
pub mod phasor;
pub mod report;
pub mod smallsignal;
pub mod timedomain;

pub use netmodel::{Framework, SystemSpec};

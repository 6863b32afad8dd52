//! Diagnostics recomputed from simulation output: energy ledger, trajectory
//! separation, weak-form residuals, incompressibility, blow-up monitor and
//! Green-function audits.

mod blowup;
mod energy;
mod green_audit;
mod incompress;
mod separation;
mod weakform;

pub use blowup::{blowup_monitor, BlowupReport};
pub use energy::{energy_audit, energy_bound_check, k_tau, BoundCheck, EnergyLedger, EnergySample, LedgerRecorder};
pub use green_audit::{audit_green, grounded_potential_audit, GreenAudit};
pub use incompress::incompressibility_probe;
pub use separation::{jitter_positions, phi_functional, phi_growth_check, phi_series, PhiGrowth, PhiSample};
pub use weakform::{test_function_library, weakform_residual, BumpTestFunction, ResidualRecord, TestFunction};

use thiserror::Error;

use crate::fields::FieldError;
use crate::flow::FlowError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("time grids do not match: {0}")]
    GridMismatch(String),
    #[error("paired families do not match: {0}")]
    PairMismatch(String),
    #[error("test function support violation: {0}")]
    SupportViolation(String),
    #[error("stencil tracer reflected during the probe window")]
    StencilReflected,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

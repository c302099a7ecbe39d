//! Dissipative dynamics of a single qubit resonantly (or dispersively) coupled
//! to a cavity mode holding a mesoscopic coherent field.
//!
//! Three layers are provided and cross-checked against each other:
//!
//! * [`lindblad`]: exact master-equation integration on a truncated Fock space,
//! * [`mcwf`]: quantum-jump (Monte-Carlo wave function) trajectories and
//!   deterministic parallel ensemble averages,
//! * [`analytic`]: closed-form Rabi collapse/revival signals, decoherence
//!   factors and related coefficients.
//!
//! [`experiments`] drives all three for the standard parameter presets.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod hilbert;
pub mod lindblad;
pub mod mcwf;
pub mod operator;
pub mod signal;

pub use error::{Error, Result};
pub use hamiltonian::{Frame, SystemParams};
pub use hilbert::{DensityMatrix, GBParams, JointState, Truncation};
pub use lindblad::{ChannelKind, JumpChannel, TimeGrid};
pub use operator::OperatorMatrix;
pub use signal::{Observable, Series, SignalRecord};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Version string embedded in run metadata.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

//! Perfect discrimination between unitary operations.
//!
//! The crate builds and certifies discrimination schemes for a pair of
//! unitaries `U`, `V` that differ by more than a global phase:
//!
//! * [`spectral`]: the spectral arc `theta(U^dagger V)` and single-use
//!   discrimination when the arc reaches `pi`;
//! * [`sequential`]: interleaved schemes `U X_N U ... X_1 U` that reach
//!   orthogonality with `ceil(pi / theta) - 1` auxiliary operations;
//! * [`locality`], [`compiler`], [`protocol`]: for two-qudit operators held
//!   by two parties, protocols that use only local operations, product inputs
//!   and classical communication;
//! * [`verify`]: independent simulation of any protocol.

pub mod compiler;
pub mod config;
pub mod error;
pub mod gates;
pub mod locality;
pub mod matrix;
pub mod optimize;
pub mod protocol;
pub mod refine;
pub mod sequential;
pub mod spectral;
pub mod verify;

pub use config::Config;
pub use error::{Error, Result};
pub use matrix::{
    phase_distance, random_unitary, tensor, unitary_eig, PureState, Tensor, Tolerances,
    UnitaryOperator,
};

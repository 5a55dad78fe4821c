//! Simulation and verification toolkit for the harness process with external
//! data (the non-homogeneous harmonic crystal).
//!
//! * [`lattice`]: sites, boxes, kernels, parameters, height fields.
//! * [`hamiltonian`]: energy, local means, conditional laws, gradient.
//! * [`ground_state`]: harmonic ground states and killed-walk kernels.
//! * [`dynamics`]: forward heat-bath simulation on Poisson epochs.
//! * [`dual`]: backward walk weights and the four-term reconstruction.
//! * [`gibbs`]: exact Gaussian Gibbs measure in finite volume.
//! * [`verify`]: acceptance checks built from the above.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual;
pub mod dynamics;
pub mod error;
pub mod gibbs;
pub mod ground_state;
pub mod hamiltonian;
pub mod lattice;
pub mod rng;
pub mod stencil;
pub mod verify;

pub use error::{Error, Result};
pub use lattice::{HeightField, Kernel, LatticeBox, ModelParams, Site};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

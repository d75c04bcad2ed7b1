//! Periodic orbits of convex Hamiltonian systems through Clarke's dual
//! action principle.
//!
//! The crate evaluates the dual action functional on truncated Fourier
//! loops, reduces it to finitely many modes, locates and indexes its
//! critical points, assembles the filtered mod-2 Morse complex of the
//! reduced functional and computes the minimal action of closed
//! characteristics on the boundary of smooth convex bodies.

// Input checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action_functionals;
pub mod capacity;
pub mod convex_model;
pub mod critical_points;
pub mod error;
pub mod loop_fourier;
pub mod morse_complex;
pub mod numerics;
pub mod reduction;
pub mod spectral_index;

pub use error::{Error, Result};

/// Version of this crate, embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

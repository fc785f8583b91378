//! Numerical laboratory for the q-oscillator evolution operator on the
//! Kagomé lattice.

// Links the BLAS backend used by ndarray's matrix products.
extern crate blas_src;

pub mod ansatz;
pub mod cli;
pub mod config;
pub mod error;
pub mod evolution;
pub mod lattice;
pub mod linalg;
pub mod qfock;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};

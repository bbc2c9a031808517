//! Time- and clock-dependent quantum hydrodynamics on a grid.

pub mod error;
pub mod factorization;
pub mod hydro;
pub mod io;
pub mod model;
pub mod numgrid;
pub mod propagator;
pub mod trajectories;
pub mod tridiag;

pub use error::{Error, Result};

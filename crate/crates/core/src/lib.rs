//! Velocity-tracking boundary control of the 2D incompressible Navier–Stokes
//! equations with Navier slip walls, discretized on a MAC staggered grid.

pub mod adjoint;
pub mod control;
pub mod error;
pub mod exec;
pub mod fields;
pub mod io;
pub mod lifting;
pub mod linearized;
pub mod linalg;
pub mod mesh;
pub mod samples;
pub mod state;
mod stencil;
pub mod verify;

pub use error::{Result, SlipError};

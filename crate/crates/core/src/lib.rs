//! Numerical laboratory for front propagation in time-periodic
//! reaction-diffusion equations `u_t = u_xx + f(t, u)` on the line.
//!
//! The crate is organised bottom-up:
//!
//! * [`nonlinearity`] defines the reaction term and a catalog of families.
//! * [`ode`] and [`periodic`] handle the spatially homogeneous problem:
//!   Poincaré maps, periodic solutions, their stability and basins.
//! * [`pde`] is the finite-difference IMEX integrator producing trajectories.
//! * [`front`] measures level sets, speeds, zero numbers and steepness.
//! * [`terrace`] assembles the minimal propagating terrace and checks the
//!   convergence statements against simulation data.
//! * [`supersub`] builds explicit comparison functions and certifies their
//!   differential inequalities on a grid.

pub mod error;
pub mod front;
pub mod interp;
pub mod nonlinearity;
pub mod ode;
pub mod pde;
pub mod periodic;
pub mod stats;
pub mod supersub;
pub mod terrace;

pub use error::{LabError, Result};
pub use nonlinearity::{Family, NonlinearitySpec};

//! Adaptive 2D mesh generation by a local equidistribution principle.
//!
//! A mesh `x(ξ,η), y(ξ,η)` over the unit square is found such that the scaled
//! arc-length forms of a test function are constant along coordinate lines.
//! The nonlinear finite-difference system is solved either on the whole domain
//! (Newton with a dense LU) or by an overlapping Schwarz iteration over strips
//! in ξ, with Dirichlet, linear Robin, or nonlinear Robin transmission
//! conditions at the artificial interfaces.

pub mod assembly;
pub mod cli;
pub mod error;
pub mod grid;
pub mod monitor;
pub mod nsolve;
pub mod quality;
pub mod schwarz;

pub use error::{Error, Result};

//! Self-similar profiles of the sublinear heat equation `u_t - Δu = u|u|^{p-1}`, `0 < p < 1`.
//!
//! Profiles `w(η)`, `η = |x|/√t`, solve a singular second-order ODE. The crate
//! computes them, checks their qualitative behaviour (energy decay, tail
//! bounds, oscillation, decay rates, continuous dependence), rebuilds the PDE
//! solutions they generate, and runs the regularised comparison problems
//! behind the oscillation argument.

pub mod cpplus;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod ivp;
pub mod model;
pub mod pde;
pub mod quadrature;

pub use error::{Error, Result};
pub use ivp::{integrate, picard_solve, LocalTrace, MethodTag, SolutionTrace};
pub use model::{Params, PhasePoint, WindowMode};

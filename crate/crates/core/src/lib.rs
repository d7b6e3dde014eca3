//! Numerical laboratory for competitive Lotka–Volterra reaction–diffusion systems.
//!
//! The crate is organised by the kind of question asked of the model
//! `u_t = D Δu + f(u)` with `f_i(u) = u_i (1 - Σ_j a_ij u_j)`:
//!
//! | module       | contents                                                        |
//! |--------------|-----------------------------------------------------------------|
//! | [`model`]    | reaction term, Jacobian, equilibria, invariant regions, conditions |
//! | [`scalar`]   | single-species steady states: energy, time map, KISS size, shooting |
//! | [`kinetics`] | spatially homogeneous ODE, limit cycles, Floquet multipliers     |
//! | [`pde`]      | method-of-lines solver on intervals and radial disks             |
//! | [`analysis`] | flatness estimates, decay fits, periodicity, ω-limit classification |
//!
//! [`ode`], [`quadrature`] and [`linalg`] hold the numerical kernels shared by
//! the modules above.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod kinetics;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod pde;
pub mod quadrature;
pub mod scalar;

pub use error::{Error, Result};
pub use model::CompetitionModel;

pub use nalgebra::Complex;
pub use nalgebra::DMatrix;

/// Complex number type used for eigenvalues and multipliers.
pub type C64 = nalgebra::Complex<f64>;

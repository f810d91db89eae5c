//! Power-series solution of stochastic Hamilton–Jacobi–Bellman equations with
//! bilinear noise, plus the Riccati solvers, finite-horizon integrator and Monte
//! Carlo verifier built around it.

pub mod error;
pub mod fixtures;
pub mod hjb;
pub mod io;
pub mod linalg;
pub mod lqr;
pub mod poly;
pub mod sare;
pub mod sde;
pub mod sdre;

pub use error::{Error, Result};

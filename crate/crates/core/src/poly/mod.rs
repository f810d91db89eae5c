//! Floating-point algebra of homogeneous multivariate polynomials.
//!
//! [`HomPoly`] is one homogeneous degree; [`PolySeries`] stacks several degrees
//! into a truncated Taylor series. Vector-valued maps are plain `Vec<PolySeries>`.
//! All coefficient vectors and operator matrices use the graded-lex order of
//! [`enumerate_basis`].

mod compiled;
mod hom;
mod index;
mod series;

pub use compiled::{CompiledMap, Scratch};
pub use hom::{HomPoly, PRUNE_RELATIVE};
pub use index::{basis_len, enumerate_basis, Basis, MultiIndex};
pub use series::{PolySeries, VecSeries};

/// Default cap on the highest polynomial degree carried by the series solver.
pub const DEFAULT_DEGREE_CAP: usize = 6;

//! Density transport along bracket-generating distributions on periodic grids.
//!
//! Fields live on uniform periodic grids over 2- and 3-tori. A [`Frame`] of
//! symbolic vector fields spans the horizontal distribution; the modules
//! build on it the sub-Laplacian and its Poisson problem ([`solver`]), the
//! horizontal Moser flow between equal-mass densities ([`moser`]), normal
//! geodesics and Hamilton-Jacobi characteristics ([`geodesic`]), and the
//! heat flow with its entropy and Wasserstein diagnostics ([`heat`]).

pub mod cg;
pub mod distribution;
pub mod error;
pub mod expr;
pub mod flow;
pub mod geodesic;
pub mod grid;
pub mod heat;
pub mod interp;
pub mod io;
pub mod moser;
pub mod ops;
pub mod solver;

pub use distribution::{Frame, SymbolicField};
pub use error::{Error, Result};
pub use flow::FlowMap;
pub use grid::{inner, inner_vector, integrate, Density, Grid, ScalarField, Stencil, VectorField};
pub use interp::Interpolation;

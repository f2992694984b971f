//! Numerical laboratory for the Dirichlet problem of prescribed-mean-curvature
//! graphs built by flowing a base domain along a Killing field.
//!
//! The ambient space is a warped product `g + rho^2 dz^2` over a 2-dimensional
//! base chart `(M, g)` with warping factor `rho > 0`. A graph of a function
//! `u` over a bounded domain has prescribed mean curvature `H(x, z)` exactly
//! when `u` solves a quasilinear elliptic equation; this crate discretizes
//! that equation on structured grids, checks the solvability hypotheses
//! (flow monotonicity of `H`, a Ricci slope bound, and a Serrin-type boundary
//! condition), solves by damped Newton inside a continuation loop over the
//! curvature scaling, and certifies explicit super/subsolution barriers and
//! the a-priori bounds they imply on computed solutions.
//!
//! Module map:
//! - [`geometry`]: base chart, warping factor, ambient curvature quantities.
//! - [`mesh`]: structured grid over a polyline-bounded domain, fast-marching
//!   distance field, nearest boundary point, parallel-hypersurface curvature.
//! - [`fields`]: scalar fields on grid nodes and boundary data.
//! - [`conditions`]: hypothesis checkers with pointwise margins.
//! - [`operator`]: residual, Jacobian, and the transformed assembly path.
//! - [`band`]: banded LU with partial pivoting for the Newton linear solves.
//! - [`solver`]: damped Newton, sigma-continuation, uniqueness/comparison probes.
//! - [`barriers`]: boundary-gradient and height barriers with certification.
//! - [`io`]: grid CSV and report serialization helpers.

pub mod band;
pub mod barriers;
pub mod conditions;
pub mod fields;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod operator;
pub mod solver;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

//! Solver for the two-dimensional weighted least gradient problem
//!
//! Computes minimizers of the weighted total variation `∫ k(x) |Du|` over BV functions with a
//! prescribed boundary trace `g`, on smooth strictly star-shaped planar domains with a smooth
//! positive weight `k`. The solve is by reduction to optimal transport: the tangential derivative
//! `f = ∂g/∂τ` of the boundary datum splits into nonnegative boundary measures `f⁺, f⁻`, which are
//! matched at minimal cost under the geodesic distance of the conformal metric `k²(dx² + dy²)`.
//! Level lines of the solution are exactly the transport geodesics ("rays") of an optimal plan,
//! the gradient direction is the quarter-turn of the ray field, and the weighted length density
//! carried by the rays (the transport density σ) equals `|Du|` as a measure.
//!
//! The crate provides, per module:
//!
//! * [`domain`] — boundary curves (circle, ellipse, smooth polar graphs), arclength tables,
//!   normals, and point containment.
//! * [`weight`] — conformal weight families (constant, radial bump, bilinear grid samples) with
//!   values, gradients, and global bounds.
//! * [`metric`] — geodesics of the conformal metric: initial-value shooting, two-point connection
//!   by Dijkstra-seeded angle bisection, eikonal distance fields by fast marching, and Jacobian
//!   fans of boundary-to-point geodesic families.
//! * [`boundary`] — piecewise-analytic boundary data, their tangential derivative measures,
//!   positive/negative splitting, equal-mass quantization to atoms, and a numeric certificate of
//!   uniform geodesic convexity.
//! * [`transport`] — exact transportation simplex with deterministic pivoting and dual extraction,
//!   a non-crossing cyclic matching solver, Kantorovich potentials, Monge maps, and geodesic ray
//!   construction with a pairwise crossing counter.
//! * [`density`] — rasterization of plans into transport densities and flows on Cartesian grids,
//!   weak divergence residuals, and L^p norms with boundary-collar accounting.
//! * [`reconstruct`] — recovery of the BV minimizer from the flow (Poisson least squares) and from
//!   the ray structure (nested-ray sweep), plus W^{1,p}-style norms.
//! * [`verify`] — numeric checks of the structure theory: Jacobian lower bounds, L^p ratio and
//!   boundedness studies under refinement, dual-field admissibility, and stability ladders.
//! * [`pipeline`] — configuration schema, end-to-end orchestration, and deterministic artifact
//!   export used by the `geolgp` command-line binary.
//!
//! Determinism is a design constraint throughout: given one configuration (including its seed),
//! every artifact byte is reproducible, independent of thread count.

pub mod boundary;
pub mod config;
pub mod density;
pub mod domain;
pub mod error;
pub mod geom;
pub mod grid;
pub mod metric;
pub mod pipeline;
pub mod reconstruct;
pub mod transport;
pub mod verify;
pub mod weight;

#[cfg(any(test, feature = "testutil"))]
pub mod testutil;

pub use error::{Error, Result};

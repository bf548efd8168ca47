//! Crate-wide error type.
//!
//! Variants distinguish the three failure classes that callers react to differently: malformed
//! input (configuration/schema problems, rejected before any numerics run), domain errors on
//! otherwise valid input (queries outside a field's support, precondition violations), and solver
//! failures (iterations that did not converge, geometry that contradicts an assumption). The CLI
//! maps schema errors to exit code 2 and solver failures to exit code 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration or input file violates the schema (unknown keys, bad ranges, missing files).
    #[error("schema: {0}")]
    Schema(String),

    /// A query point lies outside the support of the queried field.
    #[error("out of domain: {0}")]
    OutOfDomain(String),

    /// A precondition on otherwise well-formed input does not hold.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Positive and negative boundary masses differ beyond tolerance.
    #[error("boundary measure imbalance {imbalance:.3e} exceeds tolerance {tol:.1e}")]
    MassImbalance { imbalance: f64, tol: f64 },

    /// An iterative solve ran out of iterations. Carries the best candidate found so far.
    #[error("no convergence in {what}: best candidate miss {miss:.3e}, length {length:.6e}")]
    NoConvergence { what: String, miss: f64, length: f64 },

    /// Two geodesics of comparable length join the same endpoints; the connecting geodesic is not
    /// unique at shooting resolution.
    #[error("multiple geodesics between endpoints: lengths {0:.6e} and {1:.6e}")]
    MultiGeodesic(f64, f64),

    /// A geodesic between the given endpoints leaves the domain: the domain is not geodesically
    /// convex for this weight.
    #[error("geodesic convexity violation: {0}")]
    ConvexityViolation(String),

    /// A combinatorial or linear-programming solve failed.
    #[error("solver: {0}")]
    Solver(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code for the CLI: 2 for schema violations, 3 for everything that failed after the
    /// configuration was accepted.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

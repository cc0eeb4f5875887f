//! Eigenvalue asymptotics of the magnetic Neumann Laplacian on the unit ball.
//!
//! The crate computes the universal constants of the de Gennes and Montgomery
//! model operators, runs the order-by-order perturbation expansion of the
//! lowest eigenvalue in powers of B^{-1/6}, solves the angular-momentum
//! sectors of the ball operator at finite field strength, and derives the
//! third critical field.

pub mod error;
pub mod ballsolver;
pub mod criticalfield;
pub mod degennes;
pub mod grusin;
pub mod montgomery;
pub mod numkit;
pub mod reference;

pub use error::{Error, Result};
pub use numkit::{Boundary, EigenPair, Grid1D, GroundState1D, SymTridiag};

/// Crate version, echoed into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Self-contained numerical kernels.

mod dense;
mod extrap;
mod grid;
mod lanczos;
mod scalar;
mod tridiag;

pub use dense::dense_lowest;
pub use extrap::{loglog_slope, polyfit, quad_trapezoid, richardson, richardson_with_error, PolyFit};
pub use grid::{BorderedResolvent, Boundary, Grid1D, GroundState1D, LineOperator};
pub use lanczos::{lanczos_lowest, norm_estimate, symmetry_probe, DenseSym, MassSymmetrized, SparseSymOp};
pub use scalar::{find_root, minimize_scalar, try_find_root, try_find_root_with, try_minimize_scalar, ScalarMin};
pub use tridiag::{tridiag_lowest, EigenPair, SpdTridiagFactor, SymTridiag};

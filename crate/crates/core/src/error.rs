use thiserror::Error;

/// Failures raised by the numerical pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("inverse iteration did not converge for eigenvalue {index} (value {value:.6e}) after {iterations} sweeps")]
    InverseIteration {
        index: usize,
        value: f64,
        iterations: usize,
    },

    #[error("Lanczos did not converge in {iterations} steps; best Ritz values {ritz:?}, residuals {residuals:?}")]
    LanczosNotConverged {
        iterations: usize,
        ritz: Vec<f64>,
        residuals: Vec<f64>,
    },

    #[error("no interior minimum in [{lo}, {hi}]: function is monotone {direction}")]
    MonotoneBracket {
        lo: f64,
        hi: f64,
        direction: &'static str,
    },

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {flo:.3e}, f(hi) = {fhi:.3e})")]
    NoSignChange { lo: f64, hi: f64, flo: f64, fhi: f64 },

    #[error("domain too short: {0}; enlarge the truncation length")]
    TailClip(String),

    #[error("bordered system is singular (pivot {pivot:.3e})")]
    SingularBordered { pivot: f64 },

    #[error("fit residual {residual:.3e} exceeds {limit:.1e}: {context}")]
    FitResidual {
        residual: f64,
        limit: f64,
        context: String,
    },

    #[error("solvability residual {residual:.3e} at level {level}")]
    Solvability { level: usize, residual: f64 },

    #[error("sector window [{lo}, {hi}] does not contain the minimizer (found at m = {m})")]
    WindowEdge { lo: i64, hi: i64, m: i64 },

    #[error("coordinate factor nonpositive on the grid: {0}")]
    Geometry(String),

    #[error("trial residual {value:.3e} exceeds 1 at B = {b:.3e}")]
    TrialResidual { b: f64, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

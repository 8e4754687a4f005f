use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Bad parameters or malformed input.
    #[error("invalid input: {0}")]
    Config(String),

    /// Custom potential queried beyond its table with no tail model.
    #[error("tail undeclared: U({index}) lies beyond the table and no tail model is declared")]
    TailUndeclared { index: u64 },

    /// `||Q||_1 = inf`; periodic boundary laws and GGMs are undefined.
    #[error("not summable: periodic boundary laws undefined ({witness})")]
    NotSummable { witness: String },

    /// A series could not be certified within the radius cap.
    #[error("series not certified: {0}")]
    Uncertified(String),

    /// The norm pair is outside the good set; the contraction has no certificate.
    #[error("outside good set: no contraction certificate (gamma={gamma}, delta={delta}, d={d})")]
    OutsideGoodSet { gamma: f64, delta: f64, d: u32 },

    /// Iteration limit exhausted.
    #[error("no convergence after {iterations} iterations (last step {last_step:e})")]
    MaxIterations { iterations: usize, last_step: f64 },

    /// Periodic iteration fell onto the free state or failed local certification.
    #[error("no certified non-trivial solution: {0}")]
    NoNontrivialSolution(String),

    /// A bisection search never met its target on the scanned interval.
    #[error("no threshold in range [{lo}, {hi}]")]
    NoThresholdInRange { lo: f64, hi: f64 },

    /// Too much probability fell outside a truncation window.
    #[error("window too small: leaked mass {leaked:e} exceeds {tolerance:e}; try a window of at least {required}")]
    WindowTooSmall { leaked: f64, tolerance: f64, required: usize },

    /// Internal consistency check failed (e.g. series vs. closed form).
    #[error("consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::TailUndeclared { .. } => 2,
            Error::OutsideGoodSet { .. } => 4,
            _ => 3,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::TailUndeclared { .. } => "tail_undeclared",
            Error::NotSummable { .. } => "not_summable",
            Error::Uncertified(_) => "uncertified",
            Error::OutsideGoodSet { .. } => "outside_good_set",
            Error::MaxIterations { .. } => "max_iterations",
            Error::NoNontrivialSolution(_) => "no_nontrivial_solution",
            Error::NoThresholdInRange { .. } => "no_threshold_in_range",
            Error::WindowTooSmall { .. } => "window_too_small",
            Error::Consistency(_) => "consistency",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("maximum number of integration steps ({0}) exceeded")]
    TooManySteps(usize),

    #[error("condition on (A, B) drifted: residual {residual:e} exceeds {bound:e} at t = {t}")]
    Cond1Drift { t: f64, residual: f64, bound: f64 },

    #[error("|det A| = {0:e} is below the invertibility threshold")]
    SingularA(f64),

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("Taylor order {order} unsupported: {reason}")]
    UnsupportedOrder { order: usize, reason: String },

    #[error("potential carries no decay metadata")]
    MissingDecayMetadata,

    #[error("coefficient support of {entries} entries exceeds the budget of {budget}")]
    SupportOverflow { entries: u64, budget: u64 },

    #[error("hierarchy was not integrated with p-resolved parts")]
    NotPResolved,

    #[error("norm profile is degenerate: corrections grow from the first order (hbar too large)")]
    DegenerateProfile,

    #[error("grid too coarse: refinement changed the result by {relative_change:.3e}")]
    GridTooCoarse { relative_change: f64 },

    #[error("empty kappa window: 6 lambda + 2 v tau = {lower} >= 1/T' = {upper}")]
    EmptyWindow { lower: f64, upper: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("boundary mass {0:e} exceeds the leakage threshold")]
    LeakageDetected(f64),

    #[error("Lyapunov fit degenerate ({reason}); fitted lambda = {lambda}")]
    FitDegenerate { lambda: f64, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

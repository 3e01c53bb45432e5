use thiserror::Error;

/// Domain errors shared across the crate.
///
/// Every variant maps onto a stable machine-readable code (see [`HenonError::code`])
/// used by the CLI error records and the C ABI.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HenonError {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("orbit left the representable affine range at step {step}")]
    EscapedRange { step: usize },
    #[error("point is the indeterminacy point {0} of the projective extension")]
    Indeterminate(&'static str),
    #[error("green function did not stabilize (last estimate {estimate:e})")]
    GreenUndecided { estimate: f64 },
    #[error("stable direction not contracting at n = {n} (ratio {ratio:e})")]
    NotContracting { n: usize, ratio: f64 },
    #[error("orbit is not a saddle (|lambda_s| = {lambda_s_abs}, |lambda_u| = {lambda_u_abs})")]
    NonSaddle { lambda_s_abs: f64, lambda_u_abs: f64 },
    #[error("series order {order}: linear system condition {condition:e} exceeds 1e12")]
    ResonanceConditioning { order: usize, condition: f64 },
    #[error("estimated error {estimated_error:e} at {bits} mantissa bits{}; raise the precision", n.map(|n| format!(" (n = {n})")).unwrap_or_default())]
    PrecisionExhausted { estimated_error: f64, bits: u32, n: Option<usize> },
    #[error("rescaling factor vanished at n = {n}")]
    DegenerateRescale { n: usize },
    #[error("pipeline produced {successes} successful iterates (need 3): {reason}")]
    PipelineFailed { successes: usize, reason: String },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(String),
}

impl HenonError {
    pub fn code(&self) -> &'static str {
        match self {
            HenonError::InvalidMap(_) => "invalid-map",
            HenonError::EscapedRange { .. } => "escaped-representable-range",
            HenonError::Indeterminate(_) => "indeterminate-point",
            HenonError::GreenUndecided { .. } => "green-undecided",
            HenonError::NotContracting { .. } => "not-contracting",
            HenonError::NonSaddle { .. } => "non-saddle",
            HenonError::ResonanceConditioning { .. } => "resonance-like-conditioning",
            HenonError::PrecisionExhausted { .. } => "precision-exhausted",
            HenonError::DegenerateRescale { .. } => "degenerate-rescale",
            HenonError::PipelineFailed { .. } => "pipeline-failed",
            HenonError::Parse(_) => "parse-error",
            HenonError::Usage(_) => "usage-error",
            HenonError::Io(_) => "io-error",
        }
    }

    /// Usage-class errors exit with status 1, domain errors with status 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            HenonError::Parse(_) | HenonError::Usage(_) | HenonError::InvalidMap(_)
        )
    }
}

impl From<std::io::Error> for HenonError {
    fn from(e: std::io::Error) -> Self {
        HenonError::Io(e.to_string())
    }
}

pub type Result<T, E = HenonError> = std::result::Result<T, E>;

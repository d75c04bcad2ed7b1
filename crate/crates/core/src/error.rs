use thiserror::Error;

/// Failures raised by the numerical pipeline.
///
/// Every variant names the condition that a caller can act on. Variants that
/// come from a specific stage are wrapped with [`Error::at`] so reports can
/// show which module and operation produced them.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("Newton iteration for the conjugate did not converge (residual {residual:.3e}, |w| = {w_norm:.3e})")]
    NewtonDivergence { residual: f64, w_norm: f64 },

    #[error("Hessian lost positive definiteness (smallest sampled eigenvalue {min_eigenvalue:.3e})")]
    ConvexityLoss { min_eigenvalue: f64 },

    #[error("no spectrum oracle is attached to this domain")]
    SpectrumUnavailable,

    #[error("loop has nonzero mean (|mean| = {norm:.3e})")]
    NonzeroMean { norm: f64 },

    #[error("loop has coefficients on modes that are not allowed here (mode {mode})")]
    BadModeSupport { mode: i64 },

    #[error("loop is not a critical point (residual {residual:.3e}, tolerance {tolerance:.1e})")]
    NotCritical { residual: f64, tolerance: f64 },

    #[error("lift is inconsistent: conjugate gradient minus loop deviates from a constant by {deviation:.3e}")]
    LiftInconsistent { deviation: f64 },

    #[error("tail functional lost coercivity (nonpositive curvature along a Newton direction)")]
    CoercivityViolation,

    #[error("tail Hessian is numerically singular")]
    TailSingular,

    #[error("search did not converge from seed {seed} (final gradient norm {gradient:.3e})")]
    NoConvergence { seed: usize, gradient: f64 },

    #[error("critical point is degenerate (nullity {nullity}) in a configuration declared nondegenerate")]
    DegenerateOrbit { nullity: usize },

    #[error("every start collapsed to the constant loop")]
    OnlyConstantFound,

    #[error("minimum value must be negative, got {value:.6e}")]
    BadSign { value: f64 },

    #[error("eigenvalue counts changed when the Fourier cutoff was doubled ({coarse:?} vs {fine:?})")]
    WindowTooSmall { coarse: (usize, usize, usize), fine: (usize, usize, usize) },

    #[error("symplectic path is degenerate at the endpoint (|det(I - Z(1))| = {margin:.3e})")]
    DegeneratePath { margin: f64 },

    #[error("flow line left the bounding ball of radius {radius:.3e} above the lowest critical level")]
    NonConvergentFlow { radius: f64 },

    #[error("connecting-orbit counts changed under mesh refinement")]
    BasinInstability,

    #[error("no index-0 generator with action in (-{epsilon}, {epsilon})")]
    MissingMinimum { epsilon: f64 },

    #[error("capacity runs disagree: {candidates:?}")]
    NoConsensus { candidates: Vec<f64> },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{module}::{operation}: {source}")]
    At {
        module: &'static str,
        operation: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach module and operation provenance. Already-tagged errors keep the
    /// innermost tag.
    pub fn at(self, module: &'static str, operation: &'static str) -> Self {
        match self {
            Error::At { .. } => self,
            other => Error::At { module, operation, source: Box::new(other) },
        }
    }

    /// The error with provenance stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short stable name of the root variant, used in reports.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::NewtonDivergence { .. } => "NewtonDivergence",
            Error::ConvexityLoss { .. } => "ConvexityLoss",
            Error::SpectrumUnavailable => "SpectrumUnavailable",
            Error::NonzeroMean { .. } => "NonzeroMean",
            Error::BadModeSupport { .. } => "BadModeSupport",
            Error::NotCritical { .. } => "NotCritical",
            Error::LiftInconsistent { .. } => "LiftInconsistent",
            Error::CoercivityViolation => "CoercivityViolation",
            Error::TailSingular => "TailSingular",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DegenerateOrbit { .. } => "DegenerateOrbit",
            Error::OnlyConstantFound => "OnlyConstantFound",
            Error::BadSign { .. } => "BadSign",
            Error::WindowTooSmall { .. } => "WindowTooSmall",
            Error::DegeneratePath { .. } => "DegeneratePath",
            Error::NonConvergentFlow { .. } => "NonConvergentFlow",
            Error::BasinInstability => "BasinInstability",
            Error::MissingMinimum { .. } => "MissingMinimum",
            Error::NoConsensus { .. } => "NoConsensus",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Unsupported(_) => "Unsupported",
            Error::At { .. } => unreachable!(),
        }
    }

    /// Whether the error is a validation problem with the inputs rather than
    /// a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(self.root(), Error::InvalidInput(_) | Error::Unsupported(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

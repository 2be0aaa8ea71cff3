use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("boundary dimension {0} is below 3")]
    DimensionTooLow(usize),
    #[error("bad radial grid: {0}")]
    BadGrid(String),
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
    #[error("non-finite samples in {0}")]
    NonFinite(String),
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),
    #[error("quadrature degree {given} below required {required}")]
    QuadratureTooCoarse { given: usize, required: usize },
    #[error("wedge degree {0} exceeds stored range")]
    DegreeOverflow(usize),
    #[error("exterior derivative on degree {0} is not supported")]
    DegreeUnsupported(usize),
    #[error("operator has no boundary limit: {0}")]
    NoBoundaryLimit(String),
    #[error("leading indicial coefficient is singular")]
    SingularLeadingCoefficient,
    #[error("indicial root on the critical line Re s = {0}")]
    RootOnCriticalLine(f64),
    #[error("boundary data has a normal component")]
    NormalComponentPresent,
    #[error("gauge element is not unitary (residual {0:e})")]
    NotUnitary(f64),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("weight {delta} outside Fredholm window ({lo}, {hi})")]
    WeightOutsideWindow { delta: f64, lo: f64, hi: f64 },
    #[error("ill-conditioned system (condition estimate {0:e})")]
    IllConditioned(f64),
    #[error("Newton iteration diverged: {0}")]
    NewtonDiverged(String),
    #[error("kernel detected: smallest singular values {0:?}")]
    KernelDetected(Vec<f64>),
    #[error("field too small on fit window")]
    FieldTooSmall,
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config value out of range: {0}")]
    OutOfRange(String),
    #[error("missing required config entry `{0}`")]
    MissingRequired(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionTooLow(_) => "DimensionTooLow",
            Error::BadGrid(_) => "BadGrid",
            Error::DegreeMismatch(_) => "DegreeMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::UnsupportedDimension(_) => "UnsupportedDimension",
            Error::QuadratureTooCoarse { .. } => "QuadratureTooCoarse",
            Error::DegreeOverflow(_) => "DegreeOverflow",
            Error::DegreeUnsupported(_) => "DegreeUnsupported",
            Error::NoBoundaryLimit(_) => "NoBoundaryLimit",
            Error::SingularLeadingCoefficient => "SingularLeadingCoefficient",
            Error::RootOnCriticalLine(_) => "RootOnCriticalLine",
            Error::NormalComponentPresent => "NormalComponentPresent",
            Error::NotUnitary(_) => "NotUnitary",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::LinearSolveFailure(_) => "LinearSolveFailure",
            Error::WeightOutsideWindow { .. } => "WeightOutsideWindow",
            Error::IllConditioned(_) => "IllConditioned",
            Error::NewtonDiverged(_) => "NewtonDiverged",
            Error::KernelDetected(_) => "KernelDetected",
            Error::FieldTooSmall => "FieldTooSmall",
            Error::UnknownKey(_) => "UnknownKey",
            Error::OutOfRange(_) => "OutOfRange",
            Error::MissingRequired(_) => "MissingRequired",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

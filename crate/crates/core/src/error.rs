use thiserror::Error;

/// Every failure the library can report. Variants map onto CLI exit codes
/// through [`Error::exit_code`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state outside EOS validity region: {0}")]
    StateOutsideValidity(String),
    #[error("shift {shift:?} exceeds subdomain margin on axis {axis}")]
    ShiftExceedsMargin { shift: [isize; 3], axis: usize },
    #[error("empty domain")]
    EmptyDomain,
    #[error("filter scale {ell} unresolved: needs at least {min}")]
    ScaleUnresolved { ell: f64, min: f64 },
    #[error("filter scale {ell} exceeds available margin {margin}")]
    ScaleExceedsMargin { ell: f64, margin: f64 },
    #[error("operation requires viscous data (eps > 0)")]
    RequiresViscousData,
    #[error("test function support exceeds the valid region of the field")]
    SupportExceedsValidRegion,
    #[error("no admissible shock solution: {0}")]
    NoAdmissibleSolution(String),
    #[error("shock profile shooting failed: {0}")]
    ShootingFailed(String),
    #[error("CFL violation: {0}")]
    CflViolation(String),
    #[error("negative density or pressure at t = {t}, cell {cell}: rho = {rho}, p = {p}")]
    NegativeDensityOrPressure { t: f64, cell: usize, rho: f64, p: f64 },
    #[error("wave would shock at t = {t_shock} inside the window ending at {t_end}")]
    WouldShockInWindow { t_shock: f64, t_end: f64 },
    #[error("insufficient scaling range: {0}")]
    InsufficientScalingRange(String),
    #[error("series does not converge: {0}")]
    NonConvergentSeries(String),
    #[error("scan needs at least two parameter values")]
    InsufficientScan,
    #[error("run unresolved: {0}")]
    UnresolvedRun(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    /// Process exit code used by the CLI: 2 for configuration problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Format(_) | Error::Io(_) | Error::InvalidInput(_) => 2,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

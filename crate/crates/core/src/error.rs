use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("hypothesis error: {0}")]
    Hypothesis(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("range error: z = {z} outside barrier range [{lo}, {hi}] at t = {t}")]
    Range { z: f64, lo: f64, hi: f64, t: f64 },
    #[error("positivity error: u = {value} at node {node}, t = {t}")]
    Positivity { value: f64, node: usize, t: f64 },
    #[error("monotonicity error: phi' = {slope} <= 0 at s = {s}, t = {t}")]
    Monotonicity { slope: f64, s: f64, t: f64 },
    #[error("division error: beta vanishes at s = {s}, t = {t}")]
    Division { s: f64, t: f64 },
    #[error("stability error: dt = {dt} exceeds CFL limit {limit}")]
    Stability { dt: f64, limit: f64 },
    #[error("divergence: non-finite value at node {node}, t = {t}")]
    Divergence { node: usize, t: f64 },
    #[error("barrier construction lost monotonicity at t = {t}")]
    Construction { t: f64 },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit status for the error class: 2 for configuration and
    /// domain failures, 3 for numerical failures, 1 for a failed barrier
    /// hypothesis detected while checking.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Config(_)
            | Error::Hypothesis(_)
            | Error::Parameter(_)
            | Error::Range { .. }
            | Error::Positivity { .. }
            | Error::Parse { .. }
            | Error::Io(_) => 2,
            Error::Monotonicity { .. } | Error::Division { .. } => 1,
            Error::Stability { .. } | Error::Divergence { .. } | Error::Construction { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Hypothesis(_) => "hypothesis",
            Error::Parameter(_) => "parameter",
            Error::Range { .. } => "range",
            Error::Positivity { .. } => "positivity",
            Error::Monotonicity { .. } => "monotonicity",
            Error::Division { .. } => "division",
            Error::Stability { .. } => "stability",
            Error::Divergence { .. } => "divergence",
            Error::Construction { .. } => "construction",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

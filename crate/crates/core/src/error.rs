use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported Bessel order 2*nu = {twice_nu}")]
    UnsupportedOrder { twice_nu: i32 },

    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("unknown kernel id `{id}` (supported: {supported})")]
    UnknownKernel { id: String, supported: String },

    #[error("spatial route infeasible: truncation radius {needed} exceeds cap {cap}; use the Poisson route")]
    RouteInfeasible { needed: usize, cap: usize },

    #[error("lattice sum truncation: requested tolerance {requested:e} unreachable under cap, achieved bound {achieved:e}")]
    Truncation { requested: f64, achieved: f64 },

    #[error("corrupted symbol grid: non-positive value {value:e} at node {index}")]
    CorruptedGrid { index: usize, value: f64 },

    #[error("aliasing control failed at grid size {grid_size}: achieved {achieved:e}, requested {requested:e}")]
    Aliasing { grid_size: usize, achieved: f64, requested: f64 },

    #[error("quadrature budget exceeded: achieved error estimate {estimate:e}, target {target:e}")]
    Accuracy { estimate: f64, target: f64 },

    #[error("insufficient data: {usable} usable samples, need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },

    #[error("point lies outside the safe evaluation window: {0}")]
    OutOfWindow(String),

    #[error("ill-posed interpolation: symbol value {value:e} is not positive")]
    IllPosed { value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures caused by an accuracy budget rather than bad input.
    pub fn is_accuracy_failure(&self) -> bool {
        matches!(
            self,
            Error::Truncation { .. }
                | Error::Aliasing { .. }
                | Error::Accuracy { .. }
                | Error::InsufficientData { .. }
                | Error::RouteInfeasible { .. }
                | Error::IllPosed { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("density is not normalized (integral = {integral})")]
    NotNormalized { integral: f64 },

    #[error("density is negative at {count} grid points")]
    NegativeDensity { count: usize },

    #[error("reference density vanishes where the density is positive ({count} points)")]
    UnsupportedReference { count: usize },

    #[error("density under-resolved: {count} of {total} grid points sit on the floor inside the support")]
    UnderResolved { count: usize, total: usize },

    #[error("grid of {points} points exceeds the dense-quadrature limit of {limit}; use the Fokker-Planck solver")]
    GridTooLarge { points: usize, limit: usize },

    #[error("kernel standard deviation {sigma} exceeds one sixth of the box length {length}")]
    KernelTooWide { sigma: f64, length: f64 },

    #[error("numerical divergence at step {step}")]
    Divergence { step: usize },

    #[error("phase under-resolved: winding {accumulated} is {distance} away from an integer")]
    PhaseUnderResolved { accumulated: f64, distance: f64 },

    #[error("wave field has nodes at {count} of {total} grid points")]
    TooManyNodes { count: usize, total: usize },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("functional `{0}` does not provide functional derivatives")]
    MissingDerivative(String),

    #[error("perturbation does not vanish at the path endpoints")]
    PerturbationAtEndpoints,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not unimodular (det = {det})")]
    NonUnimodular { det: f64 },
    #[error("{0} did not converge")]
    DecompositionFailure(&'static str),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("index set {indices:?} is not invariant under k -> {d} - k")]
    AsymmetricTheta { d: usize, indices: Vec<usize> },
    #[error("enumeration would exceed the element budget of {cap}")]
    BudgetExceeded { cap: usize },
    #[error("conjugacy-class enumeration needs a presentation asserted free")]
    NotFree,
    #[error("bad index: {0}")]
    BadIndex(String),
    #[error("root gap alpha_{k} = {value:e} is below tolerance")]
    InsufficientGap { k: usize, value: f64 },
    #[error("flags are defined over different index sets or dimensions")]
    ThetaMismatch,
    #[error("matrix is not proximal at index {k}")]
    NotProximal { k: usize },
    #[error("flags are not transverse at index {k} (witness {witness:e})")]
    NotTransverse { k: usize, witness: f64 },
    #[error("functional is negative on a fraction {fraction} of the sampled limit cone")]
    NegativePhiOnCone { fraction: f64 },
    #[error("regression window is empty: {0}")]
    WindowEmpty(String),
    #[error("exponent s = {s} is not above the critical exponent estimate {delta}")]
    SubcriticalS { s: f64, delta: f64 },
    #[error("point is on or outside the boundary of the domain")]
    BoundaryPoint,
    #[error("generators do not preserve a supported quadratic form")]
    UnsupportedFamily,
    #[error("covering counts saturate on too many scales")]
    DegenerateScales,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonUnimodular { .. } => "NonUnimodular",
            Error::DecompositionFailure(_) => "DecompositionFailure",
            Error::SingularSystem(_) => "SingularSystem",
            Error::AsymmetricTheta { .. } => "AsymmetricTheta",
            Error::BudgetExceeded { .. } => "BudgetExceeded",
            Error::NotFree => "NotFree",
            Error::BadIndex(_) => "BadIndex",
            Error::InsufficientGap { .. } => "InsufficientGap",
            Error::ThetaMismatch => "ThetaMismatch",
            Error::NotProximal { .. } => "NotProximal",
            Error::NotTransverse { .. } => "NotTransverse",
            Error::NegativePhiOnCone { .. } => "NegativePhiOnCone",
            Error::WindowEmpty(_) => "WindowEmpty",
            Error::SubcriticalS { .. } => "SubcriticalS",
            Error::BoundaryPoint => "BoundaryPoint",
            Error::UnsupportedFamily => "UnsupportedFamily",
            Error::DegenerateScales => "DegenerateScales",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Crate-wide error type with stable, machine-readable codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("MissingSpot: no spot price for asset `{0}`")]
    MissingSpot(String),
    #[error("MissingDiscountFactor: no discount factor for maturity {0}")]
    MissingDiscountFactor(u32),
    #[error("NegativeValue: {0}")]
    NegativeValue(String),
    #[error("ConflictingDuplicate: quotes ({asset}, t={maturity}, k={strike}) with prices {a} and {b}")]
    ConflictingDuplicate {
        asset: String,
        maturity: u32,
        strike: f64,
        a: f64,
        b: f64,
    },
    #[error("StrikeZeroMismatch: strike-0 quote price {price} differs from spot {spot} for `{asset}`")]
    StrikeZeroMismatch { asset: String, price: f64, spot: f64 },
    #[error("UnknownAsset: asset `{0}` not present in the surface")]
    UnknownAsset(String),
    #[error("InvalidPsi: {0}")]
    InvalidPsi(String),
    #[error("MeanMismatch: psi values at 0 differ: {0} vs {1}")]
    MeanMismatch(f64, f64),
    #[error("EmptyInput: {0}")]
    EmptyInput(String),
    #[error("ArbitragePresent: surface fails the no-arbitrage check ({0})")]
    ArbitragePresent(String),
    #[error("SupportBoundTooSmall: L={have} but need at least {need}")]
    SupportBoundTooSmall { have: f64, need: f64 },
    #[error("InfeasibleDespiteCheck: the LP is infeasible although the arbitrage check passed; likely a tolerance mismatch")]
    InfeasibleDespiteCheck,
    #[error("UnsupportedInstrument: {0}")]
    UnsupportedInstrument(String),
    #[error("PathBudgetExceeded: exact formulation needs {need} variables (budget {budget}); use the approximate solver")]
    PathBudgetExceeded { need: usize, budget: usize },
    #[error("NodeBudgetExceeded: lattice formulation needs {need} variables (budget {budget}); increase eps or the budget")]
    NodeBudgetExceeded { need: usize, budget: usize },
    #[error("DimensionLimitExceeded: {0}")]
    DimensionLimitExceeded(String),
    #[error("Infeasible: the given prices admit no distribution (static arbitrage)")]
    Infeasible,
    #[error("Unbounded: the linear program is unbounded")]
    Unbounded,
    #[error("NumericalFailure: {0}")]
    NumericalFailure(String),
    #[error("InvalidInput: {0}")]
    InvalidInput(String),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable code, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingSpot(_) => "MissingSpot",
            Error::MissingDiscountFactor(_) => "MissingDiscountFactor",
            Error::NegativeValue(_) => "NegativeValue",
            Error::ConflictingDuplicate { .. } => "ConflictingDuplicate",
            Error::StrikeZeroMismatch { .. } => "StrikeZeroMismatch",
            Error::UnknownAsset(_) => "UnknownAsset",
            Error::InvalidPsi(_) => "InvalidPsi",
            Error::MeanMismatch(..) => "MeanMismatch",
            Error::EmptyInput(_) => "EmptyInput",
            Error::ArbitragePresent(_) => "ArbitragePresent",
            Error::SupportBoundTooSmall { .. } => "SupportBoundTooSmall",
            Error::InfeasibleDespiteCheck => "InfeasibleDespiteCheck",
            Error::UnsupportedInstrument(_) => "UnsupportedInstrument",
            Error::PathBudgetExceeded { .. } => "PathBudgetExceeded",
            Error::NodeBudgetExceeded { .. } => "NodeBudgetExceeded",
            Error::DimensionLimitExceeded(_) => "DimensionLimitExceeded",
            Error::Infeasible => "Infeasible",
            Error::Unbounded => "Unbounded",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or infeasible configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A delegation structure violates its invariants (cycle, bad edge, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// No voter is eligible to cast a vote.
    #[error("degenerate election: no electors")]
    DegenerateElection,

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("similarity undefined for a zero-norm vector")]
    UndefinedSimilarity,

    /// No sweep row fits inside the cost budget.
    #[error("no threshold fits within cost budget {budget}")]
    BudgetInfeasible { budget: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

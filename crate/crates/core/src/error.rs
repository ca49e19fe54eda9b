use thiserror::Error;

/// Reasons Bob declares an error and quits. All of them count as `J = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    /// `|Ebar| < n(1 - eps1 - delta)`.
    TooFewUnerased,
    /// `|E| < n(eps1 - delta)`.
    TooFewErased,
    /// The key-material slices do not fit in what is left of `Ebar` after sampling `G`.
    GtildeTooSmall,
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AbortReason::TooFewUnerased => "too few unerased symbols",
            AbortReason::TooFewErased => "too few erased symbols",
            AbortReason::GtildeTooSmall => "unerased remainder too small for key material",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("size mismatch: {0}")]
    Size(String),
    #[error("index sets overlap at {0}")]
    Disjointness(usize),
    #[error("invalid index set: {0}")]
    IndexSet(String),
    #[error("extractor backend: {0}")]
    Backend(String),
    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),
    #[error("invalid channel parameters: {0}")]
    Channel(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("protocol aborted: {0}")]
    Aborted(AbortReason),
    #[error("oracle scale limit exceeded: {0}")]
    OracleScale(String),
    #[error("invalid parameter: {0}")]
    Param(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

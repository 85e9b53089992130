use thiserror::Error;

/// Which admissibility bound on ε a parameter set violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum EpsBound {
    /// ε < (2γ)^(−1/α)
    PassageWidth,
    /// ε < |ℓ₋| and ε < ℓ₊
    IntervalLength,
    /// ε < γ^(−1/(α+1−β))
    RoomFit,
    /// ε < min{γ, 1/γ}
    Coupling,
}

impl std::fmt::Display for EpsBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EpsBound::PassageWidth => "eps < (2 gamma)^(-1/alpha)",
            EpsBound::IntervalLength => "eps < min(|ell_minus|, ell_plus)",
            EpsBound::RoomFit => "eps < gamma^(-1/(alpha+1-beta))",
            EpsBound::Coupling => "eps < min(gamma, 1/gamma)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("epsilon = {eps} violates {bound} (limit {limit})")]
    EpsTooLarge { eps: f64, bound: EpsBound, limit: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("{0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for rejected input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParam { .. }
            | Error::EpsTooLarge { .. }
            | Error::Degenerate(_)
            | Error::Dimension(_)
            | Error::Json(_) => 2,
            Error::Io(_) => 2,
            _ => 3,
        }
    }

    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

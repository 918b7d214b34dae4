use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The stacked observability matrix does not have full column rank over
    /// the requested window, so the attacker does not hold enough data.
    #[error("observability matrix is rank deficient (rank {rank} < {n})")]
    RankDeficient { rank: usize, n: usize },

    #[error("no support of size <= {q_max} reproduces the observations")]
    NoSolution { q_max: usize },

    #[error("Gram matrix is numerically singular (reciprocal condition {rcond:.3e})")]
    SingularGram { rcond: f64 },

    #[error("shifted covariance Sigma0 - sigma_v^2 I is numerically singular (reciprocal condition {rcond:.3e})")]
    SingularShiftedGram { rcond: f64 },

    #[error("ensemble autocorrelation is numerically singular (reciprocal condition {rcond:.3e})")]
    SingularEnsemble { rcond: f64 },

    #[error("input sequence is not persistently exciting (Toeplitz rank {rank} < {required})")]
    NotPersistentlyExciting { rank: usize, required: usize },

    #[error("Hankel matrix has numerical rank {rank}, below the assumed order {n_assumed}")]
    HankelRankDeficient { rank: usize, n_assumed: usize },

    #[error("state matrix has rank {rank} < {n}; feedback gain is not identifiable")]
    RankDeficientStates { rank: usize, n: usize },

    #[error("the selected observed set V_H is empty")]
    EmptyH,

    #[error("noise family {0} is not supported here")]
    UnsupportedFamily(String),

    #[error("weight matrix is not symmetric positive semidefinite: {0}")]
    NotPsd(String),

    #[error("unknown node id {0}")]
    UnknownNode(usize),
}

impl Error {
    /// True for failures caused by ill-conditioned or insufficient data
    /// rather than malformed arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::NoSolution { .. }
                | Error::SingularGram { .. }
                | Error::SingularShiftedGram { .. }
                | Error::SingularEnsemble { .. }
                | Error::NotPersistentlyExciting { .. }
                | Error::HankelRankDeficient { .. }
                | Error::RankDeficientStates { .. }
        )
    }
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

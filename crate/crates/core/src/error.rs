use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("matrix is rank deficient (smallest/largest singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("subspaces do not define a projector (|det(Psi^T Phi)| = {det:.3e})")]
    SingularPairing { det: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("state became non-finite at t = {time}")]
    NonFiniteState { time: f64 },

    #[error("reduced model blew up on trajectory {trajectory} at t = {time}")]
    BlowUp { trajectory: usize, time: f64 },

    #[error("system matrix is not Hurwitz (max real eigenvalue part {max_real:.3e})")]
    NotHurwitz { max_real: f64 },

    #[error("Gramian is numerically singular (sigma_r/sigma_1 = {ratio:.3e})")]
    NearSingularGramian { ratio: f64 },

    #[error("line search failed after {evaluations} evaluations at iteration {iteration}")]
    LineSearchFailed { iteration: usize, evaluations: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),
}

impl Error {
    /// Errors caused by numerics (blow-up, line search) rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteState { .. }
                | Error::BlowUp { .. }
                | Error::LineSearchFailed { .. }
                | Error::SingularPairing { .. }
                | Error::NearSingularGramian { .. }
        )
    }
}

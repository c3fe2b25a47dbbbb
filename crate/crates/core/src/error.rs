use thiserror::Error;

pub type Result<T> = std::result::Result<T, QslError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QslError {
    /// Malformed or out-of-contract input (dimension mismatch, NaN, bad density, ...).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("matrix is not Hermitian: max |A - A^dag| = {deviation:.3e}")]
    Hermiticity { deviation: f64 },

    #[error("time {t} is outside the domain [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },

    /// Eigenvalue cluster lost its gap somewhere in `[t_start, t_end]`.
    #[error("spectral degeneracy in time window [{t_start}, {t_end}]: {detail}")]
    Degeneracy {
        t_start: f64,
        t_end: f64,
        detail: String,
    },

    #[error("projector invariant violated: {0}")]
    Projector(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The supplied reference state does not solve the Schrödinger equation.
    #[error("reference solution residual {residual:.3e} exceeds {tolerance:.3e} at t = {t}")]
    ReferenceSolution {
        t: f64,
        residual: f64,
        tolerance: f64,
    },
}

impl QslError {
    pub fn input(msg: impl Into<String>) -> Self {
        QslError::Input(msg.into())
    }

    /// Time window the failure refers to, when there is one.
    pub fn time_window(&self) -> Option<(f64, f64)> {
        match self {
            QslError::Domain { t, .. } => Some((*t, *t)),
            QslError::Degeneracy { t_start, t_end, .. } => Some((*t_start, *t_end)),
            QslError::ReferenceSolution { t, .. } => Some((*t, *t)),
            _ => None,
        }
    }
}

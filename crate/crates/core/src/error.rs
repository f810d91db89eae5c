use thiserror::Error;

use crate::hjb::InvertibilityCertificate;

/// Errors produced by the solvers and file readers in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid problem data: {0}")]
    InvalidData(String),

    #[error("pair (F - alpha/2 I, G) is not stabilizable: uncontrollable mode at {mode}")]
    Stabilizability { mode: String },

    #[error("pair (Q^1/2, F - alpha/2 I) is not detectable: unobservable mode at {mode}")]
    Detectability { mode: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degree-{degree} operator is singular (smallest singular value {})", certificate.smallest_singular_value)]
    OperatorSingular {
        degree: usize,
        certificate: Box<InvertibilityCertificate>,
    },

    #[error("solution escaped to infinity between t = {t_lo} and t = {t_hi}")]
    Divergence { t_lo: f64, t_hi: f64 },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degree {degree}: {source}")]
    AtDegree {
        degree: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_degree(self, degree: usize) -> Self {
        Error::AtDegree {
            degree,
            source: Box::new(self),
        }
    }

    /// Strips iteration/degree annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } | Error::AtDegree { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

use crate::campaign::AnalysisError;
use crate::fitness::FitnessError;
use crate::lattice::LatticeError;
use crate::neutronics::NeutronicsError;
use crate::symgen::SymgenError;

/// Error type for the search drivers and campaign helpers.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Neutronics(#[from] NeutronicsError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error(transparent)]
    Symgen(#[from] SymgenError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record in {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;
use wittenlab::arrhenius::ArrheniusError;
use wittenlab::bottleneck::BottleneckError;
use wittenlab::landscapes::LandscapeError;
use wittenlab::spectra::SpectraError;
use wittenlab::svtoolkit::SvError;
use wittenlab::{FieldError, PrefactorError};

use crate::config::ConfigError;

/// Process exit codes. 1 is reserved for "ran fine, a threshold failed".
pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const INPUT: i32 = 3;
    pub const FIELD: i32 = 4;
    pub const WINDOW: i32 = 5;
    pub const SPECTRAL: i32 = 6;
    pub const FIT: i32 = 7;
    pub const PREFACTOR: i32 = 8;
    pub const OUTPUT: i32 = 9;
    pub const TOOLKIT: i32 = 10;
    pub const INTERNAL: i32 = 70;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: FieldError },
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Window(#[from] ArrheniusError),
    #[error(transparent)]
    Spectral(SpectraError),
    #[error("fit failed: {0}")]
    Fit(SpectraError),
    #[error(transparent)]
    Prefactor(#[from] PrefactorError),
    #[error(transparent)]
    Bottleneck(#[from] BottleneckError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Toolkit(#[from] SvError),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => exit::USAGE,
            CliError::Landscape(LandscapeError::Unknown(_) | LandscapeError::Param { .. }) => exit::USAGE,
            CliError::Read { .. } | CliError::Input { .. } => exit::INPUT,
            CliError::Landscape(_) | CliError::Field(_) | CliError::Bottleneck(_) => exit::FIELD,
            CliError::Window(_) => exit::WINDOW,
            CliError::Spectral(_) => exit::SPECTRAL,
            CliError::Fit(_) => exit::FIT,
            CliError::Prefactor(_) => exit::PREFACTOR,
            CliError::Write { .. } => exit::OUTPUT,
            CliError::Toolkit(_) => exit::TOOLKIT,
        }
    }
}

//! Library side of the `multiaxis` binary. Every subcommand is a plain
//! function returning an [`Outcome`] so it can be driven from tests.

pub mod app;
pub mod bench;
pub mod commands;
pub mod config;
pub mod files;
pub mod manifest;
pub mod methods;

use std::path::PathBuf;

use multiaxis::Error as CoreError;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const PREPROCESSING: i32 = 3;
    pub const NON_CONVERGENCE: i32 = 4;
    pub const BENCH_FAILED: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.root() {
                CoreError::Preprocessing(_) => exit::PREPROCESSING,
                CoreError::NonConvergence { .. } => exit::NON_CONVERGENCE,
                _ => exit::INPUT,
            },
            CliError::Io { .. } | CliError::Input(_) => exit::INPUT,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// What a successful command reports back to `main`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub outdir: Option<PathBuf>,
    pub messages: Vec<String>,
}

impl Outcome {
    pub fn ok(outdir: Option<PathBuf>) -> Self {
        Outcome {
            exit_code: exit::OK,
            outdir,
            messages: Vec::new(),
        }
    }
}

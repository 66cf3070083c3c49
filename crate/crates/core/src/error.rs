use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the tensor, codec, sampler and backend layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch on {axis} axis: expected {expected}, got {actual}")]
    Shape {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("outside function domain: {0}")]
    Domain(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("backend contract violated: expected dims {expected:?}, got {actual:?}")]
    Contract {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("malformed tensor dump: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Stage of an edit run, used to tag failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Enhance,
    Condition,
    Noise,
    Denoise,
    Decode,
    Select,
    Refine,
    Output,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Phase::Enhance => "enhance",
            Phase::Condition => "condition",
            Phase::Noise => "noise",
            Phase::Denoise => "denoise",
            Phase::Decode => "decode",
            Phase::Select => "select",
            Phase::Refine => "refine",
            Phase::Output => "output",
        };
        f.write_str(name)
    }
}

/// A pipeline failure tagged with the phase that produced it.
#[derive(Debug, Error)]
#[error("{phase} phase failed: {source}")]
pub struct PipelineError {
    pub phase: Phase,
    #[source]
    pub source: Error,
}

impl PipelineError {
    pub fn new(phase: Phase, source: Error) -> Self {
        Self { phase, source }
    }
}

/// Attach a phase to a fallible result.
pub(crate) trait InPhase<T> {
    fn in_phase(self, phase: Phase) -> Result<T, PipelineError>;
}

impl<T> InPhase<T> for Result<T> {
    fn in_phase(self, phase: Phase) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::new(phase, e))
    }
}

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box sizes must be positive and finite (h={h}, w={w}, l={l})")]
    NonPositiveSize { h: f64, w: f64, l: f64 },
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("non-finite coordinate")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("scene needs at least {min} agents, got {got}")]
    TooFewAgents { min: usize, got: usize },
    #[error("scene needs at least one object")]
    NoObjects,
    #[error("could not place object {index} without overlap after {attempts} attempts")]
    PlacementFailed { index: usize, attempts: usize },
    #[error("agent {0} is not part of the scene")]
    UnknownAgent(u32),
    #[error("invalid scene parameter: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("{what}: expected {expected}, got {got}")]
    Mismatch { what: &'static str, expected: usize, got: usize },
    #[error("{0} must not be empty")]
    Empty(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("cannot sample from an empty point set")]
    EmptyInput,
    #[error("score arrays have length {scores}, expected {points}")]
    LengthMismatch { points: usize, scores: usize },
}

/// Decoding/encoding failures for the message wire format.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("buffer truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported wire version {found} (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("cluster {0} has no proposal box")]
    MissingProposal(usize),
    #[error("cluster {index} feature length {got} differs from message dimension {expected}")]
    FeatureDim { index: usize, expected: usize, got: usize },
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("field value out of range: {0}")]
    OutOfRange(&'static str),
}

/// Configuration validation failure, qualified by the offending key path.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Anything that can stop a scenario run.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

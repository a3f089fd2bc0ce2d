use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown space profile `{0}`")]
    UnknownProfile(String),

    #[error("malformed space profile: {0}")]
    MalformedProfile(String),

    #[error("layer {layer} has no candidate operations")]
    EmptyLayer { layer: usize },

    #[error("architecture has {got} choices but the space has {expected} layers")]
    LengthMismatch { expected: usize, got: usize },

    #[error("operation `{op}` is not a candidate of layer {layer}")]
    OpAbsent { layer: usize, op: String },

    #[error("pruning floor: removing `{op}` would leave layer {layer} empty")]
    PruningFloor { layer: usize, op: String },

    #[error("layer index {layer} out of range (space has {layers} layers)")]
    LayerOutOfRange { layer: usize, layers: usize },

    #[error("latency table has no entry for layer {layer}, operation `{op}`")]
    MissingLatency { layer: usize, op: String },

    #[error("invalid latency table: {0}")]
    InvalidLatencyTable(String),

    #[error("invalid latency band [{lat_min}, {lat_max}]")]
    InvalidBand { lat_min: f64, lat_max: f64 },

    #[error(
        "infeasible band [{lat_min:.2}, {lat_max:.2}] ms: achievable latency lies in \
         [{achievable_min:.2}, {achievable_max:.2}] ms"
    )]
    InfeasibleBand {
        lat_min: f64,
        lat_max: f64,
        achievable_min: f64,
        achievable_max: f64,
    },

    #[error("operation `{0}` is not in the oracle's bound space")]
    NotASubspace(String),

    #[error("oracle backend mismatch: {0}")]
    WrongBackend(&'static str),

    #[error("external evaluator failed on {arch:?}: {message}")]
    Evaluator { arch: Vec<String>, message: String },

    #[error("evaluator protocol error: {0}")]
    Protocol(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("kendall tau undefined: {0}")]
    TauUndefined(&'static str),

    #[error("distribution shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

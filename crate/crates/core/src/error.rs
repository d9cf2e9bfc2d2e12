use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and its models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Euler-angle singularity: pitch {pitch} rad is not safely inside (-pi/2, pi/2)")]
    Singularity { pitch: f64 },

    #[error("inertia matrix is not invertible")]
    NonInvertibleInertia,

    #[error("wrench frame mismatch: expected {expected:?}, got {actual:?}")]
    FrameMismatch {
        expected: crate::vehicle::Frame,
        actual: crate::vehicle::Frame,
    },

    #[error("coefficient {name} = {value} outside [{lo}, {hi}]")]
    CoefficientOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("thruster {index} force {value} N exceeds limit {limit} N")]
    ThrustLimit {
        index: usize,
        value: f64,
        limit: f64,
    },

    #[error("time {t} s outside trajectory range [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("empty evaluation window")]
    EmptyWindow,

    #[error("non-finite state for vehicle {vehicle} at t = {t} s")]
    NonFinite { vehicle: usize, t: f64 },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

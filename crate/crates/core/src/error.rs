use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TangleError>;

#[derive(Debug, Error)]
pub enum TangleError {
    #[error("non-finite coordinate ({0}, {1})")]
    NonFinite(f64, f64),

    #[error("malformed curve: {0}")]
    MalformedCurve(String),

    #[error("curve class mismatch: endpoint displacement ({dx}, {dy}) does not match class ({m}, {n})")]
    ClassMismatch { dx: f64, dy: f64, m: i64, n: i64 },

    #[error("area undefined for essential curve of class ({0}, {1})")]
    EssentialCurve(i64, i64),

    #[error("intersection count mismatch: polyline count {polyline} but lattice pairing {lattice}")]
    IntersectionMismatch { polyline: i64, lattice: i64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { what: &'static str, iterations: usize, residual: f64 },

    #[error("flux duality check failed: swept-area flux ({phi_a}, {phi_b}) vs rotation ({rx}, {ry})")]
    DualityMismatch { phi_a: f64, phi_b: f64, rx: f64, ry: f64 },

    #[error("degenerate: identity-like root map")]
    DegenerateRootMap,

    #[error("orbit is not hyperbolic ({0})")]
    NotHyperbolic(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("flux target missed: measured ({measured_a}, {measured_b}) vs target ({target_a}, {target_b})")]
    FluxTargetMissed { measured_a: f64, measured_b: f64, target_a: f64, target_b: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl TangleError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TangleError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        TangleError::Parse { context: context.into(), message: message.to_string() }
    }
}

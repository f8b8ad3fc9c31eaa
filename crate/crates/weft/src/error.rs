//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by mesh loading, simulation and training.
#[derive(Debug, Error)]
pub enum Error {
    /// Face/edge structure violates what the simulator can handle.
    #[error("topology error: {0}")]
    Topology(String),

    /// Blend weights missing, negative, or not normalizable.
    #[error("weight error: {0}")]
    Weight(String),

    /// An edge is shared by more than two faces.
    #[error("non-manifold edge ({0}, {1}) shared by more than two faces")]
    NonManifold(usize, usize),

    /// Triangle with (near-)zero rest area.
    #[error("degenerate triangle {face}: area {area:.3e} m^2")]
    Degenerate { face: usize, area: f64 },

    /// Invalid configuration value or inconsistent inputs.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor/array dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// NaN or infinity appeared where a finite value is required.
    #[error("numerics error: {0}")]
    Numerics(String),

    /// Energy minimization failed to make progress.
    #[error("solver error: {0}")]
    Solver(String),

    /// Checkpoint file is unreadable or does not match the model.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed OBJ/JSON input file.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

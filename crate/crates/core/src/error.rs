use thiserror::Error;

use crate::grid::Tile;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no actions available: the state is terminal")]
    EmptyActionSpace,

    #[error("invalid action {tile:?}: {reason}")]
    InvalidAction { tile: Tile, reason: &'static str },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("pool generation failed: {0}")]
    PoolGeneration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

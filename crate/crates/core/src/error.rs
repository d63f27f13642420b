use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("requested rank {rank} exceeds min(rows, cols) = {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("requested {groups} groups but only {items} items are available")]
    TooManyGroups { groups: usize, items: usize },

    #[error("scene is not rigid: sigma4/sigma3 = {ratio:.3e}")]
    NotRigid { ratio: f64 },

    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error in {path}: {msg}")]
    ParseError { path: PathBuf, msg: String },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

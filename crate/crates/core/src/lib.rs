//! Dense non-rigid structure-from-motion with local subspaces on the Grassmann manifold.

pub mod bench;
pub mod cli;
pub mod clustering;
pub mod error;
pub mod grassmann;
pub mod linalg;
pub mod model;
pub mod rotation;
pub mod solver;

pub use error::{Error, Result};

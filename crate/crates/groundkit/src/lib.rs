//! File formats, completion providers, the dataset pipeline and evaluation
//! drivers built on `groundkit-core`.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod params;
pub mod pipeline;
pub mod provider;
pub mod stats;
pub mod wire;

pub use error::{Error, Result};

//! Command-line tools, file formats and the local HTTP service for CHAD
//! keyframe animation. The algorithms live in `chad-core`.

pub mod archive;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod export;
pub mod image_io;
pub mod ops;
pub mod service;
pub mod spec;

pub use error::{Error, Result};

//! Core algorithms for CHAD, a keyframe-driven image-based animation toolkit.
//!
//! A single short clip is projected through an orthonormal PCA encoder into a
//! low-dimensional latent space, and a convolutional decoder maps latent codes
//! to configuration points whose finite differences act as displacement
//! fields. New animations are latent curves between keyframes, rendered by a
//! GAN generator and sharpened by detail transfer from the source clip.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI and the HTTP
//! service live in the `chad` crate.
//!
//! Module map:
//!
//! - [`frame`], [`preprocess`], [`curriculum`]: frames, clips, cropping and
//!   the progressive training schedule.
//! - [`field`], [`warp`]: displacement fields, the bilinear deformation
//!   operator and summed/composed multi-step reconstruction.
//! - [`pca`], [`manifold`], [`path`]: the encoder basis, the decoder, manifold
//!   training and latent curves.
//! - [`nn`]: the small dense/convolutional network toolkit both models use.
//! - [`generator`]: the GAN image generator and its training recipe.
//! - [`flow`], [`poisson`], [`graph`], [`denoise`]: detail transfer.
//! - [`interp`]: the keyframe synthesis pipeline.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod curriculum;
pub mod denoise;
pub mod error;
pub mod field;
pub mod flow;
pub mod frame;
pub mod generator;
pub mod graph;
pub mod interp;
pub mod manifold;
pub mod nn;
pub mod path;
pub mod pca;
pub mod poisson;
pub mod preprocess;
pub mod synthetic;
pub mod warp;

pub use error::{Error, Result};
pub use field::{ConfigurationPoint, DisplacementField};
pub use frame::{Frame, FrameSequence};
pub use pca::{LatentCode, PcaBasis};

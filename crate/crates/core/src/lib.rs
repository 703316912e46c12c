//! Training-free, non-parametric image generation with full provenance.
//!
//! Images grow pixel by pixel from an 8×8 seed. Each pixel value is copied
//! from the center of a source patch drawn uniformly from a candidate pool:
//! patches near the target location ([`retrieval`] stage 1), from source
//! images whose embedding is close to the conditioning vector (stage 2), and
//! whose Gaussian-weighted masked SSD to the partial context is within a
//! relative tolerance of the best match (stage 3). Every pixel is logged with
//! its source image, class and coordinates ([`trace`]) so the composition of
//! a sample can be inspected and scored ([`metrics`]).

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod retrieval;
pub mod rng;
pub mod synth;
pub mod trace;
pub mod validate;

pub use error::{Error, ErrorKind, Result};

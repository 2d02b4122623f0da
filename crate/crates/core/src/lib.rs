//! Single-image super-resolution with tensor sparse coding.
//!
//! Images are turned into order-3 tensors by stacking shifted copies, cut
//! into cubes, and encoded against a pair of coupled tensor dictionaries
//! learned jointly from high-resolution patches and low-resolution
//! derivative features. The product between dictionaries and codes is the
//! t-product: circular convolution along the third dimension.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dict;
pub mod error;
pub mod fold;
pub mod image;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{SpectralTensor, Tensor3};

//! Overfitted single-image codec.
//!
//! An image is represented by a pyramid of integer latent grids, a synthesis
//! MLP that maps upsampled latents to RGB, and a context MLP that predicts a
//! Laplace distribution for every latent sample from its causal neighbors.
//! Encoding fits all three to one image by gradient descent on a
//! rate-distortion loss; decoding entropy-decodes the latents and evaluates
//! the synthesis network once per pixel.
//!
//! The guide in `book/` walks through each stage; its code listings are
//! compiled and run as doctests of this crate.

pub mod arm;
pub mod autodiff;
pub mod bitstream;
pub mod codec;
pub mod error;
pub mod image;
pub mod laplace;
pub mod latent;
pub mod mlp;
pub mod range_coder;
pub mod upsample;
pub mod weights;

pub use codec::{decode, encode, EncodeConfig, EncodeOutput, RdReport};
pub use error::{Error, Result};
pub use image::Image;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/latents.md")]
    mod latents {}
    #[doc = include_str!("../../../book/src/entropy_model.md")]
    mod entropy_model {}
    #[doc = include_str!("../../../book/src/range_coding.md")]
    mod range_coding {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/bitstream.md")]
    mod bitstream {}
}

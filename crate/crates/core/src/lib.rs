//! Blur-coupled dictionary learning for image deblurring.
//!
//! A structured (block-Toeplitz) blur operator `B` and a high-resolution
//! patch dictionary `D_h` are learned jointly from paired or unpaired
//! sharp/blurred data; blurred images are then restored by sparse coding
//! their patches over `D_l = B D_h` and synthesizing with `D_h`.

pub mod blur;
pub mod cli;
pub mod dictionary;
pub mod error;
pub mod imaging;
pub mod inference;
pub mod metrics;
pub mod sparse;
pub mod training;

pub use error::{Error, Result};

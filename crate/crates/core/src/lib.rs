//! Simulation of single-photon-counting (SPAD) video at 1 to 4 bit depths and
//! restoration of high-bit-depth video from the sparse photon counts with a
//! cascade of 3-D convolutional residual blocks.
//!
//! The crate is organised bottom-up:
//!
//! * [`sensor`] photon statistics, Bernoulli readout, bit accumulation, hot pixels
//! * [`dataset`] clean/degraded training pairs, patch sampling, augmentation, manifests
//! * [`tensor`] dense 5-axis tensors, 3-D convolution with exact gradients, loss, SGD
//! * [`network`] residual-block network, multi-block loss, training loop, checkpoints
//! * [`inference`] overlapping patch tiling and blended merging
//! * [`metrics`] PSNR, SSIM and hot-pixel median repair
//! * [`video_io`] packed 1-bit sequences and grayscale frame directories

pub mod dataset;
pub mod error;
pub mod frame;
pub mod inference;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod sensor;
pub mod tensor;
pub mod video_io;

pub use error::{Error, Result};
pub use frame::{BitFrame, Frame, Grid};

//! Guided super-resolution of 20 m short-wave-infrared bands to 10 m with a
//! small convolutional network, plus the quality metrics and active-fire
//! mapping used to assess it.
//!
//! The crate is organised bottom-up:
//!
//! * [`raster`] band grids, scenes and the SRAF container format
//! * [`resample`] box decimation, nearest and bicubic upsampling
//! * [`hpf`] the high-pass-filter fusion baseline
//! * [`nn`] tensors, convolution layers, L1 loss and ADAM
//! * [`train`] reduced-resolution pair construction, training and inference
//! * [`quality`] SAM, Q-index, ERGAS and HCC
//! * [`afd`] fire indices, threshold maps, NDVI ground truth and scoring
//! * [`synth`] seeded synthetic scenes with known fire locations
//! * [`cli`] the `swirsr` command-line front end

pub mod afd;
pub mod cli;
mod error;
pub mod hpf;
pub mod nn;
pub mod quality;
pub mod raster;
pub mod resample;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use raster::{BandGrid, Scene};

//! Single-image dehazing with the dark channel prior and a learned
//! per-channel linear correction, plus haze synthesis and PSNR/SSIM
//! evaluation.

pub mod cli;
pub mod dataset;
pub mod dcp;
pub mod error;
pub mod image;
pub mod metrics;
pub mod regression;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};
pub use image::{load_image, save_image, Image, Rgb, ScalarMap};

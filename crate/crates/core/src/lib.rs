//! Computational core for event-guided video frame interpolation.
//!
//! The crate covers everything around the learned networks of an
//! event-conditioned video diffusion model:
//!
//! * [`types`]: events, streams, frames and feature maps
//! * [`io`]: text / binary event files, frame directories, flat tensors
//! * [`sim`]: log-intensity threshold event simulation and skip-N instances
//! * [`voxel`]: temporal voxel grids and the ROI mask pipeline
//! * [`cond`]: fusion arithmetic, temporal weighting and condition assembly
//! * [`diffusion`]: EDM-style preconditioning, noising, loss and sampling
//! * [`interp`]: coarse event-based interpolation
//! * [`metrics`] and [`eval`]: PSNR / SSIM and the evaluation harness
//! * [`scenes`]: synthetic test scenes

pub mod cond;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod scenes;
pub mod sim;
pub mod types;
pub mod voxel;

pub use error::{Error, ErrorClass, Result};
pub use types::{Event, EventStream, FeatureMap, Frame, FrameSequence, Timestamp, ValidationReport};

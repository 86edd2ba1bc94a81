//! Core library for single-shot compressive video with a rolling shutter
//! sensor behind multiplexing (lensless diffuser) optics.
//!
//! A single exposure of a rolling shutter sensor integrates each row over
//! its own time window. When the scene is spatially multiplexed by a
//! pseudorandom caustic point spread function, every row carries
//! information about nearly the whole scene, and a space-time video volume
//! can be recovered from the one captured image by sparsity-regularized
//! optimization.
//!
//! The crate is organized along the pipeline:
//!
//! - [`shutter`]: discrete shutter functions for rolling (single and dual)
//!   and global shutter sensors, derived from exposure/line timing.
//! - [`optics`]: PSF handling and the FFT-based linear convolution core
//!   with its exact adjoint.
//! - [`forward`]: the full measurement operator (per-frame convolution,
//!   row masking, accumulation) and its adjoint and operator norm.
//! - [`solver`]: FISTA with a weighted anisotropic 3D total variation
//!   proximal step for nonnegative sparse recovery.
//! - [`scenegen`]: synthetic ground-truth scenes (flashing LED arrays,
//!   moving objects) and seeded sensor noise.
//! - [`analysis`]: x-t projections, temporal power spectra, temporal
//!   contrast, and reconstruction quality metrics.
//! - [`io`]: raw float volume/PSF containers, 16-bit PNG import/export,
//!   and CSV reports.

pub mod analysis;
pub mod error;
mod fft;
pub mod forward;
pub mod io;
pub mod optics;
pub mod scenegen;
pub mod shutter;
pub mod solver;

pub use error::{CoreError, Result};

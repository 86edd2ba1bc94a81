//! The full measurement operator: per-frame PSF convolution, row masking
//! by the shutter function, and accumulation over frames.
//!
//! The operator is never materialized; applications run as FFT
//! convolutions per frame. Frames are processed in parallel, with a
//! sequential ordered reduction so results are bit-identical across
//! thread counts.

use crate::error::{CoreError, Result};
use crate::optics::{Convolver, Psf};
use crate::shutter::{ShutterMask, TimingConfig};
use ndarray::{Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A space-time scene volume on a (frames, rows, cols) grid with lateral
/// spacing `lateral_pitch_um` and temporal spacing `frame_spacing_us`
/// (one frame per sensor line time).
#[derive(Debug, Clone)]
pub struct VideoVolume {
    /// Shape (num_frames, rows, cols).
    pub values: Array3<f64>,
    pub lateral_pitch_um: f64,
    pub frame_spacing_us: f64,
    pub channel_id: usize,
}

impl VideoVolume {
    pub fn num_frames(&self) -> usize {
        self.values.dim().0
    }

    pub fn frame_shape(&self) -> (usize, usize) {
        let (_, rows, cols) = self.values.dim();
        (rows, cols)
    }

    /// Average groups of `factor` consecutive frames, producing a volume
    /// with `factor`x the frame spacing. Trailing frames that do not fill
    /// a group are dropped.
    pub fn bin_frames(&self, factor: usize) -> Result<VideoVolume> {
        if factor == 0 {
            return Err(CoreError::Config("frame bin factor must be positive".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (k, rows, cols) = self.values.dim();
        let groups = k / factor;
        if groups == 0 {
            return Err(CoreError::Config(format!(
                "cannot bin {k} frames by {factor}"
            )));
        }
        let mut out = Array3::<f64>::zeros((groups, rows, cols));
        let norm = 1.0 / factor as f64;
        for g in 0..groups {
            for j in 0..factor {
                out.index_axis_mut(ndarray::Axis(0), g)
                    .scaled_add(norm, &self.values.index_axis(ndarray::Axis(0), g * factor + j));
            }
        }
        Ok(VideoVolume {
            values: out,
            lateral_pitch_um: self.lateral_pitch_um,
            frame_spacing_us: self.frame_spacing_us * factor as f64,
            channel_id: self.channel_id,
        })
    }
}

/// A single sensor exposure (one color channel).
#[derive(Debug, Clone)]
pub struct Measurement {
    /// Shape (rows M, cols N).
    pub values: Array2<f64>,
    pub timing: TimingConfig,
    pub channel_id: usize,
}

impl Measurement {
    pub fn validate(&self) -> Result<()> {
        if self.values.nrows() != self.timing.num_rows {
            return Err(CoreError::Dimension(format!(
                "measurement has {} rows but timing declares {}",
                self.values.nrows(),
                self.timing.num_rows
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Numerical(
                "measurement contains non-finite values".into(),
            ));
        }
        Ok(())
    }
}

/// Result of the operator-norm power iteration.
#[derive(Debug, Clone, Copy)]
pub struct NormEstimate {
    /// Estimated largest eigenvalue of (adjoint o forward), i.e. the
    /// squared operator norm.
    pub norm_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The linear measurement operator for one color channel: scene volumes of
/// shape (frames, scene rows, scene cols) map to sensor images of shape
/// (sensor rows, sensor cols).
pub struct ForwardOperator {
    convolver: Convolver,
    mask: ShutterMask,
}

impl ForwardOperator {
    pub fn new(
        scene_shape: (usize, usize),
        sensor_shape: (usize, usize),
        psf_plane: &Array2<f64>,
        mask: ShutterMask,
    ) -> Result<Self> {
        if mask.num_rows() != sensor_shape.0 {
            return Err(CoreError::Dimension(format!(
                "shutter mask covers {} rows but sensor has {}",
                mask.num_rows(),
                sensor_shape.0
            )));
        }
        Ok(ForwardOperator {
            convolver: Convolver::new(scene_shape, sensor_shape, psf_plane)?,
            mask,
        })
    }

    /// Operator whose scene grid coincides with the sensor grid.
    pub fn same_grid(psf_plane: &Array2<f64>, mask: ShutterMask, cols: usize) -> Result<Self> {
        let shape = (mask.num_rows(), cols);
        ForwardOperator::new(shape, shape, psf_plane, mask)
    }

    pub fn mask(&self) -> &ShutterMask {
        &self.mask
    }

    pub fn scene_shape(&self) -> (usize, usize) {
        self.convolver.scene_shape()
    }

    pub fn sensor_shape(&self) -> (usize, usize) {
        self.convolver.sensor_shape()
    }

    pub fn num_frames(&self) -> usize {
        self.mask.num_frames()
    }

    fn check_volume(&self, v: &Array3<f64>) -> Result<()> {
        let (k, rows, cols) = v.dim();
        if k != self.mask.num_frames() {
            return Err(CoreError::Dimension(format!(
                "volume has {k} frames but shutter mask has {}",
                self.mask.num_frames()
            )));
        }
        if (rows, cols) != self.convolver.scene_shape() {
            return Err(CoreError::Dimension(format!(
                "volume frames are ({rows}, {cols}) but scene grid is {:?}",
                self.convolver.scene_shape()
            )));
        }
        Ok(())
    }

    /// Apply the operator: convolve each frame with the PSF, zero the rows
    /// inactive at that frame time, and sum over frames.
    pub fn apply(&self, volume: &Array3<f64>) -> Result<Array2<f64>> {
        self.check_volume(volume)?;
        let per_frame: Vec<Array2<f64>> = (0..volume.dim().0)
            .into_par_iter()
            .map(|k| {
                let frame = volume.index_axis(ndarray::Axis(0), k);
                let mut conv = self.convolver.forward(&frame.to_owned())?;
                let rows = self.mask.frame_rows(k);
                for (i, mut row) in conv.rows_mut().into_iter().enumerate() {
                    if rows[i] == 0 {
                        row.fill(0.0);
                    }
                }
                Ok(conv)
            })
            .collect::<Result<Vec<_>>>()?;

        // ordered reduction keeps the sum bit-identical across thread counts
        let mut out = Array2::<f64>::zeros(self.convolver.sensor_shape());
        for term in per_frame {
            out += &term;
        }
        Ok(out)
    }

    /// Exact adjoint of [`ForwardOperator::apply`]: mask the measurement
    /// rows per frame, run the adjoint convolution, and stack over frames.
    pub fn adjoint(&self, image: &Array2<f64>) -> Result<Array3<f64>> {
        if image.dim() != self.convolver.sensor_shape() {
            return Err(CoreError::Dimension(format!(
                "image shape {:?} does not match sensor shape {:?}",
                image.dim(),
                self.convolver.sensor_shape()
            )));
        }
        let k_total = self.mask.num_frames();
        let frames: Vec<Array2<f64>> = (0..k_total)
            .into_par_iter()
            .map(|k| {
                let mut masked = image.clone();
                let rows = self.mask.frame_rows(k);
                for (i, mut row) in masked.rows_mut().into_iter().enumerate() {
                    if rows[i] == 0 {
                        row.fill(0.0);
                    }
                }
                self.convolver.adjoint(&masked)
            })
            .collect::<Result<Vec<_>>>()?;

        let (rows, cols) = self.convolver.scene_shape();
        let mut out = Array3::<f64>::zeros((k_total, rows, cols));
        for (k, frame) in frames.into_iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), k).assign(&frame);
        }
        Ok(out)
    }

    /// Squared operator norm (largest eigenvalue of adjoint o forward) by
    /// power iteration from a seeded random start. Used to size gradient
    /// steps; non-convergence is reported, not fatal.
    pub fn operator_norm_sq(&self, tol: f64, max_iter: usize, seed: u64) -> Result<NormEstimate> {
        if !(tol > 0.0) {
            return Err(CoreError::Config("power iteration tol must be positive".into()));
        }
        let (rows, cols) = self.convolver.scene_shape();
        let k_total = self.mask.num_frames();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Array3::<f64>::from_shape_fn((k_total, rows, cols), |_| {
            rng.random_range(-1.0..1.0)
        });
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.mapv_inplace(|x| x / norm0);

        let mut lambda = 0.0;
        for iter in 1..=max_iter {
            let w = self.adjoint(&self.apply(&v)?)?;
            let new_lambda: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let w_norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if w_norm <= 0.0 {
                // operator annihilated the probe: norm is zero
                return Ok(NormEstimate {
                    norm_sq: 0.0,
                    iterations: iter,
                    converged: true,
                });
            }
            v = w.mapv(|x| x / w_norm);
            let rel = (new_lambda - lambda).abs() / new_lambda.abs().max(1e-300);
            lambda = new_lambda;
            if rel < tol {
                return Ok(NormEstimate {
                    norm_sq: lambda,
                    iterations: iter,
                    converged: true,
                });
            }
        }
        Ok(NormEstimate {
            norm_sq: lambda,
            iterations: max_iter,
            converged: false,
        })
    }
}

/// Typed wrapper over [`ForwardOperator::apply`] selecting the PSF plane
/// by the volume's channel.
pub fn forward_apply(v: &VideoVolume, psf: &Psf, mask: &ShutterMask) -> Result<Measurement> {
    let plane = psf.plane(v.channel_id)?;
    let op = ForwardOperator::new(
        v.frame_shape(),
        (mask.num_rows(), v.frame_shape().1),
        plane,
        mask.clone(),
    )?;
    Ok(Measurement {
        values: op.apply(&v.values)?,
        timing: mask.timing().clone(),
        channel_id: v.channel_id,
    })
}

/// Typed wrapper over [`ForwardOperator::adjoint`].
pub fn adjoint_apply(b: &Measurement, psf: &Psf, mask: &ShutterMask) -> Result<VideoVolume> {
    let plane = psf.plane(b.channel_id)?;
    let op = ForwardOperator::new(
        (mask.num_rows(), b.values.ncols()),
        b.values.dim(),
        plane,
        mask.clone(),
    )?;
    Ok(VideoVolume {
        values: op.adjoint(&b.values)?,
        lateral_pitch_um: psf.pixel_pitch_um,
        frame_spacing_us: mask.timing().line_time_us,
        channel_id: b.channel_id,
    })
}

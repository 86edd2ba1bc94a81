//! Quantitative diagnostics on ground-truth and reconstructed volumes:
//! x-t projections, temporal power spectra, temporal contrast, row
//! modulation periods, and reconstruction quality metrics.

use crate::error::{CoreError, Result};
use crate::fft::Fft2d;
use crate::forward::VideoVolume;
use crate::optics::Image2D;
use ndarray::{Array2, Array3};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reducer {
    Max,
    Sum,
}

/// Reduce a volume over the y (row) axis, yielding an (x, t) image:
/// row index = lateral position, column index = frame. A static point
/// appears as a horizontal line; a flashing one as a dashed line.
pub fn xt_projection(v: &VideoVolume, reducer: Reducer) -> Result<Image2D> {
    let (k, rows, cols) = v.values.dim();
    if k == 0 {
        return Err(CoreError::Dimension("empty volume".into()));
    }
    let mut out = Array2::<f64>::zeros((cols, k));
    for frame in 0..k {
        for x in 0..cols {
            let mut acc = match reducer {
                Reducer::Max => f64::NEG_INFINITY,
                Reducer::Sum => 0.0,
            };
            for y in 0..rows {
                let val = v.values[(frame, y, x)];
                match reducer {
                    Reducer::Max => acc = acc.max(val),
                    Reducer::Sum => acc += val,
                }
            }
            out[(x, frame)] = acc;
        }
    }
    Image2D::new(out, v.channel_id)
}

/// One-sided temporal power spectrum averaged over voxels.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Ascending, in Hz, from 0 (DC) to the Nyquist bin.
    pub frequencies_hz: Vec<f64>,
    /// Power per bin, normalized so the sum over all bins equals the
    /// time-domain variance of the (mean-subtracted) traces.
    pub power: Vec<f64>,
    /// Frequency of the strongest bin above DC, or `None` when there is
    /// no temporal signal.
    pub peak_hz: Option<f64>,
}

impl SpectrumResult {
    pub fn bin_width_hz(&self) -> f64 {
        if self.frequencies_hz.len() > 1 {
            self.frequencies_hz[1] - self.frequencies_hz[0]
        } else {
            0.0
        }
    }
}

/// Mean-subtracted DFT power along t, averaged over the masked voxels
/// (all voxels when no mask is given). Needs at least 4 frames.
pub fn temporal_spectrum(
    v: &VideoVolume,
    voxel_mask: Option<&Array2<bool>>,
) -> Result<SpectrumResult> {
    let (k, rows, cols) = v.values.dim();
    if k < 4 {
        return Err(CoreError::Dimension(format!(
            "temporal spectrum needs at least 4 frames, got {k}"
        )));
    }
    if let Some(mask) = voxel_mask {
        if mask.dim() != (rows, cols) {
            return Err(CoreError::Dimension(format!(
                "voxel mask shape {:?} does not match frame shape ({rows}, {cols})",
                mask.dim()
            )));
        }
    }

    let fft = Fft2d::new(1, k);
    let half = k / 2;
    let mut power = vec![0.0f64; half + 1];
    let mut voxels = 0usize;

    for y in 0..rows {
        for x in 0..cols {
            if let Some(mask) = voxel_mask {
                if !mask[(y, x)] {
                    continue;
                }
            }
            voxels += 1;
            let mut trace: Vec<Complex64> = (0..k)
                .map(|frame| Complex64::new(v.values[(frame, y, x)], 0.0))
                .collect();
            let mean = trace.iter().map(|c| c.re).sum::<f64>() / k as f64;
            for c in trace.iter_mut() {
                *c -= mean;
            }
            fft.forward(&mut trace);
            let norm = 1.0 / (k * k) as f64;
            power[0] += trace[0].norm_sqr() * norm;
            for j in 1..=half {
                let mut bin = trace[j].norm_sqr();
                if j != k - j {
                    bin += trace[k - j].norm_sqr();
                }
                power[j] += bin * norm;
            }
        }
    }
    if voxels == 0 {
        return Err(CoreError::Dimension("voxel mask selects nothing".into()));
    }
    for p in power.iter_mut() {
        *p /= voxels as f64;
    }

    let frame_spacing_s = v.frame_spacing_us * 1e-6;
    let df = 1.0 / (k as f64 * frame_spacing_s);
    let frequencies_hz: Vec<f64> = (0..=half).map(|j| j as f64 * df).collect();

    let total: f64 = power.iter().sum();
    let peak_hz = power
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .filter(|(_, p)| **p > 1e-12 * total.max(1e-300))
        .map(|(j, _)| frequencies_hz[j]);

    Ok(SpectrumResult {
        frequencies_hz,
        power,
        peak_hz,
    })
}

/// Michelson contrast (max - min) / (max + min) of the time traces at the
/// given (x, y) source positions, averaged over sources. Each trace sums
/// a (2 window_radius + 1)^2 neighborhood so slightly displaced
/// reconstructions still track their source.
pub fn temporal_contrast(
    v: &VideoVolume,
    source_positions: &[(usize, usize)],
    window_radius: usize,
) -> Result<f64> {
    let (k, rows, cols) = v.values.dim();
    if source_positions.is_empty() {
        return Err(CoreError::Config("no source positions given".into()));
    }
    let mut total = 0.0;
    for &(x, y) in source_positions {
        if y >= rows || x >= cols {
            return Err(CoreError::Dimension(format!(
                "source position ({x}, {y}) outside ({cols}, {rows}) frame"
            )));
        }
        let r0 = y.saturating_sub(window_radius);
        let r1 = (y + window_radius + 1).min(rows);
        let c0 = x.saturating_sub(window_radius);
        let c1 = (x + window_radius + 1).min(cols);
        let trace: Vec<f64> = (0..k)
            .map(|frame| {
                let mut acc = 0.0;
                for r in r0..r1 {
                    for c in c0..c1 {
                        acc += v.values[(frame, r, c)];
                    }
                }
                acc
            })
            .collect();
        let max = trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = trace.iter().cloned().fold(f64::INFINITY, f64::min);
        if max + min <= 0.0 {
            return Err(CoreError::Numerical(format!(
                "zero-signal trace at source ({x}, {y})"
            )));
        }
        total += (max - min) / (max + min);
    }
    Ok(total / source_positions.len() as f64)
}

/// Reconstruction quality: PSNR against the truth's peak plus support
/// precision/recall after thresholding both volumes at 10% of their own
/// maxima.
#[derive(Debug, Clone, Copy)]
pub struct ReconMetrics {
    pub psnr_db: f64,
    pub support_precision: f64,
    pub support_recall: f64,
}

/// Voxels at or above this fraction of a volume's maximum count as its
/// support.
pub const SUPPORT_THRESHOLD: f64 = 0.1;

pub fn recon_metrics(recon: &Array3<f64>, truth: &Array3<f64>) -> Result<ReconMetrics> {
    if recon.dim() != truth.dim() {
        return Err(CoreError::Dimension(format!(
            "reconstruction shape {:?} does not match truth shape {:?}",
            recon.dim(),
            truth.dim()
        )));
    }
    let n = recon.len() as f64;
    let peak = truth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mse: f64 = recon
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let psnr_db = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * ((peak * peak) / mse).log10()
    };

    let support = |v: &Array3<f64>| -> Vec<bool> {
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max <= 0.0 {
            return vec![false; v.len()];
        }
        let thr = SUPPORT_THRESHOLD * max;
        v.iter().map(|&x| x >= thr).collect()
    };
    let recon_support = support(recon);
    let truth_support = support(truth);
    let tp = recon_support
        .iter()
        .zip(&truth_support)
        .filter(|(r, t)| **r && **t)
        .count();
    let recon_count = recon_support.iter().filter(|v| **v).count();
    let truth_count = truth_support.iter().filter(|v| **v).count();

    let support_precision = if recon_count == 0 {
        if truth_count == 0 { 1.0 } else { 0.0 }
    } else {
        tp as f64 / recon_count as f64
    };
    let support_recall = if truth_count == 0 {
        1.0
    } else {
        tp as f64 / truth_count as f64
    };

    Ok(ReconMetrics {
        psnr_db,
        support_precision,
        support_recall,
    })
}

/// Dominant period of a 1D profile, from the strongest FFT bin above DC
/// of the mean-subtracted profile. Returns `None` for a constant profile.
pub fn dominant_period(profile: &[f64]) -> Option<f64> {
    let n = profile.len();
    if n < 4 {
        return None;
    }
    let mean = profile.iter().sum::<f64>() / n as f64;
    let fft = Fft2d::new(1, n);
    let mut buf: Vec<Complex64> = profile
        .iter()
        .map(|&v| Complex64::new(v - mean, 0.0))
        .collect();
    fft.forward(&mut buf);
    let half = n / 2;
    let total: f64 = buf[1..=half].iter().map(|c| c.norm_sqr()).sum();
    if total <= 1e-24 {
        return None;
    }
    let (best, _) = buf[1..=half]
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c.norm_sqr()))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())?;
    Some(n as f64 / best as f64)
}

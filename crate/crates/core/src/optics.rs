//! PSF handling and the shift-invariant convolution core.
//!
//! The measurement optics are modeled as linear convolution of each scene
//! frame with a point spread function, followed by a centered crop to the
//! sensor extent. Both directions are computed on a zero-padded FFT grid
//! large enough to hold the full linear convolution, so the frequency-
//! domain path is exactly (to roundoff) the direct convolution sum, and
//! [`Convolver::adjoint`] is the exact algebraic adjoint of
//! [`Convolver::forward`].

use crate::error::{CoreError, Result};
use crate::fft::{Fft2d, next_fast_len};
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How PSF planes are scaled on construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsfNormalization {
    /// Each plane divided by its sum; forward-model flux is interpretable.
    SumToOne,
    /// Each plane divided by its maximum.
    MaxToOne,
    /// Values kept as loaded (real calibration images).
    Raw,
}

/// A calibrated or synthetic point spread function, one plane per color
/// channel. All planes are nonnegative, finite, and share one shape.
#[derive(Debug, Clone)]
pub struct Psf {
    planes: Vec<Array2<f64>>,
    pub pixel_pitch_um: f64,
    pub normalization: PsfNormalization,
}

impl Psf {
    pub fn new(
        planes: Vec<Array2<f64>>,
        pixel_pitch_um: f64,
        normalization: PsfNormalization,
    ) -> Result<Self> {
        if planes.is_empty() {
            return Err(CoreError::Config("PSF needs at least one plane".into()));
        }
        let dim = planes[0].dim();
        for (c, plane) in planes.iter().enumerate() {
            if plane.dim() != dim {
                return Err(CoreError::Dimension(format!(
                    "PSF plane {c} has shape {:?}, expected {:?}",
                    plane.dim(),
                    dim
                )));
            }
            if plane.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(CoreError::Config(format!(
                    "PSF plane {c} contains negative or non-finite values"
                )));
            }
        }
        let mut psf = Psf {
            planes,
            pixel_pitch_um,
            normalization,
        };
        psf.apply_normalization()?;
        Ok(psf)
    }

    fn apply_normalization(&mut self) -> Result<()> {
        for (c, plane) in self.planes.iter_mut().enumerate() {
            let scale = match self.normalization {
                PsfNormalization::SumToOne => plane.sum(),
                PsfNormalization::MaxToOne => plane.iter().cloned().fold(0.0, f64::max),
                PsfNormalization::Raw => continue,
            };
            if scale <= 0.0 {
                return Err(CoreError::Numerical(format!(
                    "PSF plane {c} is all zero and cannot be normalized"
                )));
            }
            plane.mapv_inplace(|v| v / scale);
        }
        Ok(())
    }

    pub fn num_channels(&self) -> usize {
        self.planes.len()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.planes[0].dim()
    }

    pub fn plane(&self, channel: usize) -> Result<&Array2<f64>> {
        self.planes.get(channel).ok_or_else(|| {
            CoreError::Dimension(format!(
                "PSF has {} channels, requested channel {channel}",
                self.planes.len()
            ))
        })
    }

    pub fn planes(&self) -> &[Array2<f64>] {
        &self.planes
    }

    /// Bin every plane by `factor` and reapply the normalization.
    pub fn binned(&self, factor: usize) -> Result<Psf> {
        let planes = self
            .planes
            .iter()
            .map(|p| bin_array(p, factor))
            .collect::<Result<Vec<_>>>()?;
        Psf::new(planes, self.pixel_pitch_um * factor as f64, self.normalization)
    }
}

/// A single-channel 2D image (scene frame, sensor exposure, or slice).
#[derive(Debug, Clone)]
pub struct Image2D {
    pub values: Array2<f64>,
    pub channel_id: usize,
}

impl Image2D {
    pub fn new(values: Array2<f64>, channel_id: usize) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Numerical(
                "image contains non-finite values".into(),
            ));
        }
        Ok(Image2D { values, channel_id })
    }
}

/// FFT-backed linear convolution against one PSF plane, with a centered
/// crop from the full convolution support to the sensor extent, plus the
/// exact adjoint (zero-embed, correlate, crop to the scene extent).
///
/// The plan and the transformed PSF are cached, so one `Convolver` can be
/// reused across frames; it is `Send + Sync` and allocates scratch per
/// call.
pub struct Convolver {
    scene_shape: (usize, usize),
    sensor_shape: (usize, usize),
    grid: (usize, usize),
    crop_offset: (usize, usize),
    psf_hat: Vec<Complex64>,
    fft: Fft2d,
}

impl Convolver {
    /// `scene_shape` and `sensor_shape` are (rows, cols). The sensor crop
    /// window must fit inside the full convolution support
    /// (scene + psf - 1).
    pub fn new(
        scene_shape: (usize, usize),
        sensor_shape: (usize, usize),
        psf_plane: &Array2<f64>,
    ) -> Result<Self> {
        let (py, px) = psf_plane.dim();
        if py == 0 || px == 0 || scene_shape.0 == 0 || scene_shape.1 == 0 {
            return Err(CoreError::Dimension(
                "scene and PSF must be non-empty".into(),
            ));
        }
        let full = (scene_shape.0 + py - 1, scene_shape.1 + px - 1);
        if sensor_shape.0 > full.0 || sensor_shape.1 > full.1 || sensor_shape.0 == 0 {
            return Err(CoreError::Dimension(format!(
                "sensor crop {:?} exceeds convolution support {:?}",
                sensor_shape, full
            )));
        }
        let grid = (next_fast_len(full.0), next_fast_len(full.1));
        let fft = Fft2d::new(grid.0, grid.1);

        let mut psf_hat = vec![Complex64::default(); grid.0 * grid.1];
        for r in 0..py {
            for c in 0..px {
                psf_hat[r * grid.1 + c] = Complex64::new(psf_plane[(r, c)], 0.0);
            }
        }
        fft.forward(&mut psf_hat);

        Ok(Convolver {
            scene_shape,
            sensor_shape,
            grid,
            crop_offset: ((full.0 - sensor_shape.0) / 2, (full.1 - sensor_shape.1) / 2),
            psf_hat,
            fft,
        })
    }

    /// Convolver for the common case sensor extent == scene extent.
    pub fn same_shape(shape: (usize, usize), psf_plane: &Array2<f64>) -> Result<Self> {
        Convolver::new(shape, shape, psf_plane)
    }

    pub fn scene_shape(&self) -> (usize, usize) {
        self.scene_shape
    }

    pub fn sensor_shape(&self) -> (usize, usize) {
        self.sensor_shape
    }

    /// Linear convolution of a scene frame with the PSF, cropped to the
    /// sensor extent (window centered on the full convolution support).
    pub fn forward(&self, frame: &Array2<f64>) -> Result<Array2<f64>> {
        if frame.dim() != self.scene_shape {
            return Err(CoreError::Dimension(format!(
                "frame shape {:?} does not match scene shape {:?}",
                frame.dim(),
                self.scene_shape
            )));
        }
        let mut buf = vec![Complex64::default(); self.grid.0 * self.grid.1];
        for r in 0..self.scene_shape.0 {
            for c in 0..self.scene_shape.1 {
                buf[r * self.grid.1 + c] = Complex64::new(frame[(r, c)], 0.0);
            }
        }
        self.fft.forward(&mut buf);
        for (v, h) in buf.iter_mut().zip(&self.psf_hat) {
            *v *= h;
        }
        self.fft.inverse(&mut buf);

        let (oy, ox) = self.crop_offset;
        Ok(Array2::from_shape_fn(self.sensor_shape, |(r, c)| {
            buf[(r + oy) * self.grid.1 + (c + ox)].re
        }))
    }

    /// Exact adjoint of [`Convolver::forward`]: embed the sensor image at
    /// the crop window, correlate with the PSF, read the scene region.
    pub fn adjoint(&self, image: &Array2<f64>) -> Result<Array2<f64>> {
        if image.dim() != self.sensor_shape {
            return Err(CoreError::Dimension(format!(
                "image shape {:?} does not match sensor shape {:?}",
                image.dim(),
                self.sensor_shape
            )));
        }
        let (oy, ox) = self.crop_offset;
        let mut buf = vec![Complex64::default(); self.grid.0 * self.grid.1];
        for r in 0..self.sensor_shape.0 {
            for c in 0..self.sensor_shape.1 {
                buf[(r + oy) * self.grid.1 + (c + ox)] = Complex64::new(image[(r, c)], 0.0);
            }
        }
        self.fft.forward(&mut buf);
        for (v, h) in buf.iter_mut().zip(&self.psf_hat) {
            *v *= h.conj();
        }
        self.fft.inverse(&mut buf);

        Ok(Array2::from_shape_fn(self.scene_shape, |(r, c)| {
            buf[r * self.grid.1 + c].re
        }))
    }
}

/// Convolve a scene frame with a PSF plane; output has the frame's shape.
pub fn convolve2d(frame: &Image2D, psf_plane: &Array2<f64>) -> Result<Image2D> {
    let conv = Convolver::same_shape(frame.values.dim(), psf_plane)?;
    Ok(Image2D {
        values: conv.forward(&frame.values)?,
        channel_id: frame.channel_id,
    })
}

/// Adjoint of [`convolve2d`] for a sensor image of the same extent.
pub fn adjoint_convolve2d(image: &Image2D, psf_plane: &Array2<f64>) -> Result<Image2D> {
    let conv = Convolver::same_shape(image.values.dim(), psf_plane)?;
    Ok(Image2D {
        values: conv.adjoint(&image.values)?,
        channel_id: image.channel_id,
    })
}

/// Central horizontal slice of the mean-subtracted, peak-normalized 2D
/// autocorrelation of a PSF plane. The returned slice has length
/// `2 * cols - 1` with the unit peak at index `cols - 1`.
///
/// A sharp main peak with low side lobes indicates a multiplexing pattern
/// whose shifts are mutually distinguishable.
pub fn autocorrelation_slice(psf_plane: &Array2<f64>) -> Result<Vec<f64>> {
    let (py, px) = psf_plane.dim();
    if py == 0 || px == 0 {
        return Err(CoreError::Dimension("empty PSF plane".into()));
    }
    let mean = psf_plane.sum() / (py * px) as f64;
    let centered = psf_plane.mapv(|v| v - mean);
    let energy: f64 = centered.iter().map(|v| v * v).sum();
    if energy <= 0.0 {
        return Err(CoreError::Numerical(
            "PSF plane is constant; autocorrelation is degenerate".into(),
        ));
    }

    // Autocorrelation via |FFT|^2 on a grid holding the full linear
    // support (2P-1 x 2Q-1), so no circular overlap occurs.
    let grid = (next_fast_len(2 * py - 1), next_fast_len(2 * px - 1));
    let fft = Fft2d::new(grid.0, grid.1);
    let mut buf = vec![Complex64::default(); grid.0 * grid.1];
    for r in 0..py {
        for c in 0..px {
            buf[r * grid.1 + c] = Complex64::new(centered[(r, c)], 0.0);
        }
    }
    fft.forward(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex64::new(v.norm_sqr(), 0.0);
    }
    fft.inverse(&mut buf);

    // Row 0 of the circular autocorrelation holds vertical lag 0;
    // horizontal lag d lives at column d mod grid width.
    let mut slice = Vec::with_capacity(2 * px - 1);
    for lag in -(px as isize - 1)..=(px as isize - 1) {
        let col = lag.rem_euclid(grid.1 as isize) as usize;
        slice.push(buf[col].re / energy);
    }
    Ok(slice)
}

/// Synthetic diffuser PSF: a seeded sum of Gaussian spots at uniformly
/// random positions, normalized to unit sum.
pub fn simulate_lenslet_psf(
    num_lenslets: usize,
    spot_sigma_px: f64,
    dims: (usize, usize),
    seed: u64,
) -> Result<Psf> {
    if num_lenslets == 0 {
        return Err(CoreError::Config("num_lenslets must be at least 1".into()));
    }
    if !(spot_sigma_px > 0.0) {
        return Err(CoreError::Config(format!(
            "spot_sigma_px must be positive, got {spot_sigma_px}"
        )));
    }
    let (rows, cols) = dims;
    if rows == 0 || cols == 0 {
        return Err(CoreError::Config("PSF dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plane = Array2::<f64>::zeros(dims);
    let reach = (5.0 * spot_sigma_px).ceil() as isize;
    let inv_two_sigma_sq = 1.0 / (2.0 * spot_sigma_px * spot_sigma_px);
    for _ in 0..num_lenslets {
        let cy: f64 = rng.random_range(0.0..rows as f64);
        let cx: f64 = rng.random_range(0.0..cols as f64);
        let r0 = ((cy as isize) - reach).max(0) as usize;
        let r1 = (((cy as isize) + reach + 1) as usize).min(rows);
        let c0 = ((cx as isize) - reach).max(0) as usize;
        let c1 = (((cx as isize) + reach + 1) as usize).min(cols);
        for r in r0..r1 {
            for c in c0..c1 {
                let dy = r as f64 - cy;
                let dx = c as f64 - cx;
                plane[(r, c)] += (-(dy * dy + dx * dx) * inv_two_sigma_sq).exp();
            }
        }
    }
    Psf::new(vec![plane], 1.0, PsfNormalization::SumToOne)
}

/// Non-overlapping `factor` x `factor` box mean. The factor must divide
/// both dimensions; `sum(out) * factor^2 == sum(in)`.
pub fn bin_array(image: &Array2<f64>, factor: usize) -> Result<Array2<f64>> {
    if factor == 0 {
        return Err(CoreError::Config("binning factor must be positive".into()));
    }
    let (rows, cols) = image.dim();
    if rows % factor != 0 || cols % factor != 0 {
        return Err(CoreError::Dimension(format!(
            "binning factor {factor} does not divide image shape ({rows}, {cols})"
        )));
    }
    if factor == 1 {
        return Ok(image.clone());
    }
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Array2::<f64>::zeros((rows / factor, cols / factor));
    for r in 0..rows {
        for c in 0..cols {
            out[(r / factor, c / factor)] += image[(r, c)] * norm;
        }
    }
    Ok(out)
}

/// Box-mean binning of an [`Image2D`].
pub fn bin_image(image: &Image2D, factor: usize) -> Result<Image2D> {
    Ok(Image2D {
        values: bin_array(&image.values, factor)?,
        channel_id: image.channel_id,
    })
}

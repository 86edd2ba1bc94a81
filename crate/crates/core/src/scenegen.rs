//! Synthetic ground-truth scenes and seeded sensor noise.
//!
//! The main validation scene is a horizontal array of point sources
//! pulsing in unison with a square wave, the setup used to probe the
//! temporal band-limit: a source with pulse period T imprints a row
//! modulation of period T / line_time on the measurement, and pulses
//! faster than the exposure time average out entirely.

use crate::error::{CoreError, Result};
use crate::forward::{Measurement, VideoVolume};
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

/// A time-modulation waveform, evaluated in microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    Constant { amplitude: f64 },
    /// On at `amplitude` for the first `duty` fraction of each period,
    /// starting on at t = 0; off otherwise.
    Square {
        period_us: f64,
        duty: f64,
        amplitude: f64,
    },
    Sine { period_us: f64, amplitude: f64 },
}

impl Waveform {
    pub fn eval(&self, t_us: f64) -> f64 {
        match *self {
            Waveform::Constant { amplitude } => amplitude,
            Waveform::Square {
                period_us,
                duty,
                amplitude,
            } => {
                let phase = t_us.rem_euclid(period_us);
                if phase < duty * period_us { amplitude } else { 0.0 }
            }
            Waveform::Sine {
                period_us,
                amplitude,
            } => amplitude * (2.0 * std::f64::consts::PI * t_us / period_us).sin(),
        }
    }
}

/// A linear array of point sources pulsing in unison.
#[derive(Debug, Clone)]
pub struct LedArraySpec {
    pub num_leds: usize,
    /// Horizontal center-to-center spacing in scene pixels.
    pub spacing_px: f64,
    /// Pulse period T of the shared square-wave drive.
    pub pulse_period_us: f64,
    /// Fraction of each period the sources are on, in (0, 1).
    pub duty_cycle: f64,
    pub amplitude: f64,
    /// Optional Gaussian spot radius; point sources land on single pixels
    /// when absent.
    pub spot_sigma_px: Option<f64>,
}

impl LedArraySpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_leds == 0 {
            return Err(CoreError::Config("num_leds must be at least 1".into()));
        }
        if !(self.spacing_px >= 1.0) {
            return Err(CoreError::Config(format!(
                "led spacing must be at least one pixel, got {}",
                self.spacing_px
            )));
        }
        if !(self.pulse_period_us > 0.0) {
            return Err(CoreError::Config(format!(
                "pulse period must be positive, got {}",
                self.pulse_period_us
            )));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle < 1.0) {
            return Err(CoreError::Config(format!(
                "duty cycle must lie in (0, 1), got {}",
                self.duty_cycle
            )));
        }
        if !(self.amplitude > 0.0) {
            return Err(CoreError::Config("led amplitude must be positive".into()));
        }
        Ok(())
    }

    /// Pixel positions (x, y) of the sources on an (x_size, y_size) grid:
    /// a horizontal line centered laterally, at the middle row.
    pub fn positions(&self, x_size: usize, y_size: usize) -> Result<Vec<(usize, usize)>> {
        self.validate()?;
        let row = y_size / 2;
        let span = self.spacing_px * (self.num_leds as f64 - 1.0);
        let start = (x_size as f64 - 1.0) / 2.0 - span / 2.0;
        let mut positions = Vec::with_capacity(self.num_leds);
        for i in 0..self.num_leds {
            let x = (start + self.spacing_px * i as f64).round();
            if x < 0.0 || x >= x_size as f64 {
                return Err(CoreError::Config(format!(
                    "led {i} at x = {x} falls outside the {x_size}-pixel scene"
                )));
            }
            positions.push((x as usize, row));
        }
        Ok(positions)
    }

    pub fn waveform(&self) -> Waveform {
        Waveform::Square {
            period_us: self.pulse_period_us,
            duty: self.duty_cycle,
            amplitude: self.amplitude,
        }
    }
}

/// Separable scene `u(x, y) * f(t)`: the source layout modulated by the
/// shared square wave sampled at frame times `k * frame_spacing_us`.
pub fn make_led_scene(
    spec: &LedArraySpec,
    dims: (usize, usize, usize),
    frame_spacing_us: f64,
) -> Result<VideoVolume> {
    let (x_size, y_size, k_size) = dims;
    if x_size == 0 || y_size == 0 || k_size == 0 {
        return Err(CoreError::Config("scene dimensions must be positive".into()));
    }
    if !(frame_spacing_us > 0.0) {
        return Err(CoreError::Config("frame spacing must be positive".into()));
    }
    let positions = spec.positions(x_size, y_size)?;
    let waveform = spec.waveform();

    // spatial layout
    let mut layout = ndarray::Array2::<f64>::zeros((y_size, x_size));
    match spec.spot_sigma_px {
        None => {
            for &(x, y) in &positions {
                layout[(y, x)] += 1.0;
            }
        }
        Some(sigma) => {
            if !(sigma > 0.0) {
                return Err(CoreError::Config("spot sigma must be positive".into()));
            }
            let reach = (5.0 * sigma).ceil() as isize;
            for &(x, y) in &positions {
                let r0 = (y as isize - reach).max(0) as usize;
                let r1 = ((y as isize + reach + 1) as usize).min(y_size);
                let c0 = (x as isize - reach).max(0) as usize;
                let c1 = ((x as isize + reach + 1) as usize).min(x_size);
                for r in r0..r1 {
                    for c in c0..c1 {
                        let dy = r as f64 - y as f64;
                        let dx = c as f64 - x as f64;
                        layout[(r, c)] += (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
                    }
                }
            }
        }
    }

    let mut values = Array3::<f64>::zeros((k_size, y_size, x_size));
    for k in 0..k_size {
        let f = waveform.eval(k as f64 * frame_spacing_us);
        if f != 0.0 {
            values
                .index_axis_mut(ndarray::Axis(0), k)
                .assign(&(&layout * f));
        }
    }
    Ok(VideoVolume {
        values,
        lateral_pitch_um: 1.0,
        frame_spacing_us,
        channel_id: 0,
    })
}

/// A binary disk translating at constant velocity (pixels per frame).
/// The whole disk must stay inside the scene over all frames.
pub fn make_moving_disk_scene(
    radius_px: f64,
    velocity_px_per_frame: (f64, f64),
    dims: (usize, usize, usize),
    frame_spacing_us: f64,
) -> Result<VideoVolume> {
    let (x_size, y_size, k_size) = dims;
    if !(radius_px > 0.0) {
        return Err(CoreError::Config("disk radius must be positive".into()));
    }
    let (vx, vy) = velocity_px_per_frame;
    // center the trajectory in the scene
    let cx0 = (x_size as f64 - 1.0) / 2.0 - vx * (k_size as f64 - 1.0) / 2.0;
    let cy0 = (y_size as f64 - 1.0) / 2.0 - vy * (k_size as f64 - 1.0) / 2.0;

    let mut values = Array3::<f64>::zeros((k_size, y_size, x_size));
    for k in 0..k_size {
        let cx = cx0 + vx * k as f64;
        let cy = cy0 + vy * k as f64;
        if cx - radius_px < -0.5
            || cx + radius_px > x_size as f64 - 0.5
            || cy - radius_px < -0.5
            || cy + radius_px > y_size as f64 - 0.5
        {
            return Err(CoreError::Config(format!(
                "disk leaves the scene at frame {k} (center {cx:.1}, {cy:.1})"
            )));
        }
        let r_sq = radius_px * radius_px;
        for r in 0..y_size {
            for c in 0..x_size {
                let dy = r as f64 - cy;
                let dx = c as f64 - cx;
                if dy * dy + dx * dx <= r_sq {
                    values[(k, r, c)] = 1.0;
                }
            }
        }
    }
    Ok(VideoVolume {
        values,
        lateral_pitch_um: 1.0,
        frame_spacing_us,
        channel_id: 0,
    })
}

/// Sensor noise: Poisson shot noise at `poisson_scale` photons per unit
/// intensity (0 disables), then additive Gaussian read noise.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub gaussian_sigma: f64,
    pub poisson_scale: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma >= 0.0) || !(self.poisson_scale >= 0.0) {
            return Err(CoreError::Config(
                "noise parameters must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.gaussian_sigma == 0.0 && self.poisson_scale == 0.0
    }
}

/// Apply seeded shot and read noise to a measurement. With Poisson noise
/// enabled the input must be nonnegative; FFT roundoff at the level of
/// -1e-9 of the peak is clamped to zero, anything more negative is an
/// error.
pub fn add_noise(b: &Measurement, spec: &NoiseSpec) -> Result<Measurement> {
    spec.validate()?;
    if spec.is_noiseless() {
        return Ok(b.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = b.values.clone();

    if spec.poisson_scale > 0.0 {
        let peak = values.iter().cloned().fold(0.0, f64::max);
        let floor = -1e-9 * peak.max(1e-300);
        if values.iter().any(|&v| v < floor) {
            return Err(CoreError::Numerical(
                "negative measurement values are incompatible with shot noise".into(),
            ));
        }
        for v in values.iter_mut() {
            let photons = (*v).max(0.0) * spec.poisson_scale;
            if photons > 0.0 {
                let draw = Poisson::new(photons)
                    .map_err(|e| CoreError::Numerical(format!("poisson draw failed: {e}")))?
                    .sample(&mut rng);
                *v = draw / spec.poisson_scale;
            } else {
                *v = 0.0;
            }
        }
    }

    if spec.gaussian_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.gaussian_sigma)
            .map_err(|e| CoreError::Numerical(format!("gaussian draw failed: {e}")))?;
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    Ok(Measurement {
        values,
        timing: b.timing.clone(),
        channel_id: b.channel_id,
    })
}

/// Row-exposure envelope predicted for a time waveform: the waveform
/// convolved with the exposure window (a rect of width `exposure_us`),
/// sampled at the window center times of successive rows/frames.
///
/// The convolution is evaluated on the line-time grid the discrete
/// forward model uses (`line_time_us` times the sum of the
/// `exposure/line` samples inside each window), so for a constant unit
/// waveform the envelope equals the exposure time, and for a square wave
/// whose period equals the exposure time it is exactly constant.
pub fn predicted_envelope(
    waveform: &Waveform,
    exposure_us: f64,
    line_us: f64,
    num_samples: usize,
) -> Result<Vec<f64>> {
    if !(exposure_us > 0.0) || !(line_us > 0.0) {
        return Err(CoreError::Config("timing must be positive".into()));
    }
    let ratio = exposure_us / line_us;
    let lines = ratio.round();
    if lines < 1.0 || (ratio - lines).abs() > 1e-6 * lines {
        return Err(CoreError::Config(format!(
            "exposure ({exposure_us}) must be an integer multiple of the line time ({line_us})"
        )));
    }
    let lines = lines as usize;
    let mut envelope = Vec::with_capacity(num_samples);
    for k in 0..num_samples {
        let mut acc = 0.0;
        for j in 0..lines {
            acc += waveform.eval((k + j) as f64 * line_us);
        }
        envelope.push(acc * line_us);
    }
    Ok(envelope)
}

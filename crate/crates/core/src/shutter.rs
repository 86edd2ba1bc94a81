//! Discrete shutter functions for rolling and global shutter sensors.
//!
//! A rolling shutter exposes each sensor row for `exposure_time_us`,
//! starting `line_time_us` after the previous row. Sampled on the frame
//! grid (one frame per line time), this yields a binary mask per frame
//! telling which rows are integrating light at that frame time. A dual
//! shutter runs two such scans simultaneously, inward from the top and
//! bottom sensor edges; a global shutter exposes all rows over one shared
//! window.

use crate::error::{CoreError, Result};
use ndarray::{Array2, ArrayView1};

/// Relative tolerance when checking that the exposure time is an integer
/// multiple of the line time.
const TIMING_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShutterMode {
    /// One shutter scanning top to bottom.
    RollingSingle,
    /// Two shutters scanning inward from the top and bottom edges;
    /// symmetric row pairs share exposure timing.
    RollingDual,
    /// All rows share a single exposure window starting at time zero.
    Global,
}

impl ShutterMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShutterMode::RollingSingle => "rolling_single",
            ShutterMode::RollingDual => "rolling_dual",
            ShutterMode::Global => "global",
        }
    }
}

impl std::str::FromStr for ShutterMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rolling_single" => Ok(ShutterMode::RollingSingle),
            "rolling_dual" => Ok(ShutterMode::RollingDual),
            "global" => Ok(ShutterMode::Global),
            other => Err(CoreError::Config(format!(
                "unknown shutter mode '{other}' (expected rolling_single, rolling_dual, or global)"
            ))),
        }
    }
}

/// Sensor timing parameters from which the shutter function is generated.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    /// Exposure time of each row, microseconds.
    pub exposure_time_us: f64,
    /// Delay between the exposure starts of consecutive rows, microseconds.
    /// Also the temporal spacing of recovered frames.
    pub line_time_us: f64,
    pub mode: ShutterMode,
    /// Number of sensor rows (M).
    pub num_rows: usize,
    /// Number of frames on the recovery grid (K).
    pub num_frames: usize,
}

impl TimingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.exposure_time_us > 0.0) || !self.exposure_time_us.is_finite() {
            return Err(CoreError::Config(format!(
                "exposure_time_us must be positive and finite, got {}",
                self.exposure_time_us
            )));
        }
        if !(self.line_time_us > 0.0) || !self.line_time_us.is_finite() {
            return Err(CoreError::Config(format!(
                "line_time_us must be positive and finite, got {}",
                self.line_time_us
            )));
        }
        let ratio = self.exposure_time_us / self.line_time_us;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > TIMING_REL_TOL * rounded.max(1.0) {
            return Err(CoreError::Config(format!(
                "exposure_time_us ({}) must be an integer multiple of line_time_us ({}); ratio is {}",
                self.exposure_time_us, self.line_time_us, ratio
            )));
        }
        if self.num_rows == 0 {
            return Err(CoreError::Config("num_rows must be at least 1".into()));
        }
        if self.num_frames == 0 {
            return Err(CoreError::Config("num_frames must be at least 1".into()));
        }
        if self.mode == ShutterMode::RollingDual && self.num_rows % 2 != 0 {
            return Err(CoreError::Config(format!(
                "dual shutter requires an even number of rows, got {}",
                self.num_rows
            )));
        }
        Ok(())
    }

    /// Number of rows simultaneously exposing per shutter
    /// (exposure time / line time).
    pub fn lines_per_exposure(&self) -> usize {
        (self.exposure_time_us / self.line_time_us).round() as usize
    }

    /// Number of distinct frame times with at least one exposing row,
    /// for an unclipped capture (independent of the chosen `num_frames`).
    pub fn frames_per_capture(&self) -> usize {
        let n_l = self.lines_per_exposure();
        match self.mode {
            ShutterMode::RollingSingle => self.num_rows + n_l - 1,
            ShutterMode::RollingDual => self.num_rows.div_ceil(2) + n_l - 1,
            ShutterMode::Global => n_l,
        }
    }

    /// Frame rate of the recovered video: one frame per line time.
    pub fn effective_frame_rate_fps(&self) -> f64 {
        1.0e6 / self.line_time_us
    }

    /// True when the row exposure spans at least two line times, the
    /// aliasing-free condition for the temporal sampling implied by the
    /// row-to-time mapping.
    pub fn is_aliasing_free(&self) -> bool {
        self.lines_per_exposure() >= 2
    }

    /// Timing of the same capture after `factor`x lateral binning: rows
    /// merge in groups of `factor`, so the line time grows by `factor`
    /// while the exposure time is unchanged.
    pub fn binned(&self, factor: usize) -> Result<TimingConfig> {
        if factor == 0 {
            return Err(CoreError::Config("binning factor must be positive".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        if self.num_rows % factor != 0 {
            return Err(CoreError::Config(format!(
                "binning factor {} does not divide {} rows",
                factor, self.num_rows
            )));
        }
        let binned = TimingConfig {
            exposure_time_us: self.exposure_time_us,
            line_time_us: self.line_time_us * factor as f64,
            mode: self.mode,
            num_rows: self.num_rows / factor,
            num_frames: self.num_frames,
        };
        binned.validate()?;
        Ok(binned)
    }

    /// Scan index of a row: its position in exposure-start order.
    fn scan_index(&self, row: usize) -> usize {
        match self.mode {
            ShutterMode::RollingSingle => row,
            ShutterMode::RollingDual => row.min(self.num_rows - 1 - row),
            ShutterMode::Global => 0,
        }
    }
}

/// The discrete shutter function: one binary row-activation mask per frame.
///
/// Row `i` is active at frame `k` when the frame time `k * line_time`
/// falls inside the row's exposure window
/// `[scan_index(i) * line_time, scan_index(i) * line_time + exposure_time)`.
/// Frames outside the configured window of `num_frames` are clipped, not
/// wrapped.
#[derive(Debug, Clone)]
pub struct ShutterMask {
    /// Shape (num_frames, num_rows), entries in {0, 1}.
    masks: Array2<u8>,
    timing: TimingConfig,
}

impl ShutterMask {
    pub fn build(config: &TimingConfig) -> Result<Self> {
        config.validate()?;
        let n_l = config.lines_per_exposure();
        let k_total = config.num_frames;
        let mut masks = Array2::<u8>::zeros((k_total, config.num_rows));
        for row in 0..config.num_rows {
            let start = config.scan_index(row);
            let end = (start + n_l).min(k_total);
            for k in start.min(k_total)..end {
                masks[(k, row)] = 1;
            }
        }
        Ok(ShutterMask {
            masks,
            timing: config.clone(),
        })
    }

    pub fn num_frames(&self) -> usize {
        self.masks.nrows()
    }

    pub fn num_rows(&self) -> usize {
        self.masks.ncols()
    }

    pub fn timing(&self) -> &TimingConfig {
        &self.timing
    }

    pub fn is_active(&self, frame: usize, row: usize) -> bool {
        self.masks[(frame, row)] != 0
    }

    /// Row activations of one frame as a 0/1 vector of length num_rows.
    pub fn frame_rows(&self, frame: usize) -> ArrayView1<'_, u8> {
        self.masks.row(frame)
    }

    /// Largest number of rows active in any single frame.
    pub fn n_active_per_frame(&self) -> usize {
        (0..self.num_frames())
            .map(|k| self.frame_rows(k).iter().filter(|&&v| v != 0).count())
            .max()
            .unwrap_or(0)
    }

    /// First active frame of a row, if any frame in the window covers it.
    pub fn first_active_frame(&self, row: usize) -> Option<usize> {
        (0..self.num_frames()).find(|&k| self.is_active(k, row))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(
        exposure_us: f64,
        line_us: f64,
        mode: ShutterMode,
        rows: usize,
        frames: usize,
    ) -> TimingConfig {
        TimingConfig {
            exposure_time_us: exposure_us,
            line_time_us: line_us,
            mode,
            num_rows: rows,
            num_frames: frames,
        }
    }

    #[test]
    fn lines_per_exposure_counts_simultaneous_rows() {
        let c = cfg(660.0, 220.0, ShutterMode::RollingSingle, 16, 18);
        assert_eq!(c.lines_per_exposure(), 3);
    }

    #[test]
    fn single_shutter_identity_pattern() {
        // exposure == line time: each row active in exactly its own frame
        let c = cfg(100.0, 100.0, ShutterMode::RollingSingle, 4, 4);
        let mask = ShutterMask::build(&c).unwrap();
        for k in 0..4 {
            for i in 0..4 {
                assert_eq!(mask.is_active(k, i), k == i, "frame {k} row {i}");
            }
        }
    }

    #[test]
    fn dual_shutter_pairs_symmetric_rows() {
        // enumerate the rect window by hand for both scans: frame k should
        // activate rows {k, 5-k}
        let c = cfg(50.0, 50.0, ShutterMode::RollingDual, 6, 3);
        let mask = ShutterMask::build(&c).unwrap();
        for k in 0..3 {
            for i in 0..6 {
                let expected = i == k || i == 5 - k;
                assert_eq!(mask.is_active(k, i), expected, "frame {k} row {i}");
            }
        }
    }

    #[test]
    fn dual_shutter_symmetry_holds_for_generated_masks() {
        for rows in [2usize, 6, 10, 16] {
            for n_l in [1usize, 2, 3] {
                let c = cfg(
                    100.0 * n_l as f64,
                    100.0,
                    ShutterMode::RollingDual,
                    rows,
                    rows / 2 + n_l,
                );
                let mask = ShutterMask::build(&c).unwrap();
                for k in 0..mask.num_frames() {
                    for i in 0..rows {
                        assert_eq!(mask.is_active(k, i), mask.is_active(k, rows - 1 - i));
                    }
                }
            }
        }
    }

    #[test]
    fn global_mask_covers_exposure_window() {
        let c = cfg(300.0, 100.0, ShutterMode::Global, 5, 6);
        let mask = ShutterMask::build(&c).unwrap();
        for k in 0..6 {
            for i in 0..5 {
                assert_eq!(mask.is_active(k, i), k < 3);
            }
        }
        assert_eq!(mask.n_active_per_frame(), 5);
    }

    #[test]
    fn rolling_single_contiguous_run_of_n_l_frames() {
        let c = cfg(660.0, 220.0, ShutterMode::RollingSingle, 8, 10);
        let mask = ShutterMask::build(&c).unwrap();
        for i in 0..8 {
            let active: Vec<usize> = (0..10).filter(|&k| mask.is_active(k, i)).collect();
            assert_eq!(active, (i..i + 3).collect::<Vec<_>>());
        }
    }

    #[test]
    fn frames_per_capture_matches_mask_census() {
        // count frames with any active row using a window large enough to
        // avoid clipping
        for (mode, rows, n_l) in [
            (ShutterMode::RollingSingle, 8, 3),
            (ShutterMode::RollingSingle, 1, 4),
            (ShutterMode::RollingDual, 8, 2),
            (ShutterMode::Global, 5, 3),
        ] {
            let c = cfg(100.0 * n_l as f64, 100.0, mode, rows, rows + n_l + 4);
            let mask = ShutterMask::build(&c).unwrap();
            let census = (0..mask.num_frames())
                .filter(|&k| mask.frame_rows(k).iter().any(|&v| v != 0))
                .count();
            assert_eq!(c.frames_per_capture(), census, "{mode:?} rows={rows} n_l={n_l}");
        }
    }

    #[test]
    fn frames_per_capture_known_values() {
        let dual = cfg(27.5, 27.5, ShutterMode::RollingDual, 280, 140);
        assert_eq!(dual.frames_per_capture(), 140);

        let single_row = cfg(500.0, 100.0, ShutterMode::RollingSingle, 1, 5);
        assert_eq!(single_row.frames_per_capture(), 5);

        let single = cfg(300.0, 100.0, ShutterMode::RollingSingle, 8, 10);
        assert_eq!(single.frames_per_capture(), 10);
    }

    #[test]
    fn effective_frame_rate_values() {
        let c = cfg(660.0, 220.0, ShutterMode::RollingSingle, 4, 4);
        assert!((c.effective_frame_rate_fps() - 4545.4545).abs() < 0.01);

        let fast = cfg(9.17, 9.17, ShutterMode::RollingSingle, 4, 4);
        assert!((fast.effective_frame_rate_fps() - 109051.25).abs() < 1.0);

        let slow = cfg(1e6, 1e6, ShutterMode::RollingSingle, 4, 4);
        assert!((slow.effective_frame_rate_fps() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_integer_exposure_ratio() {
        let c = cfg(250.0, 100.0, ShutterMode::RollingSingle, 4, 4);
        assert!(matches!(c.validate(), Err(CoreError::Config(_))));
    }

    #[test]
    fn rejects_dual_shutter_with_odd_rows() {
        let c = cfg(100.0, 100.0, ShutterMode::RollingDual, 5, 4);
        assert!(matches!(c.validate(), Err(CoreError::Config(_))));
    }

    #[test]
    fn column_sums_equal_lines_per_exposure_when_unclipped() {
        let c = cfg(300.0, 100.0, ShutterMode::RollingSingle, 6, 8);
        assert!(c.num_frames >= c.frames_per_capture());
        let mask = ShutterMask::build(&c).unwrap();
        for i in 0..6 {
            let sum: usize = (0..8).filter(|&k| mask.is_active(k, i)).count();
            assert_eq!(sum, 3);
        }
    }

    #[test]
    fn scan_is_monotone_in_single_mode() {
        let c = cfg(300.0, 100.0, ShutterMode::RollingSingle, 6, 8);
        let mask = ShutterMask::build(&c).unwrap();
        for i in 0..5 {
            let a = mask.first_active_frame(i).unwrap();
            let b = mask.first_active_frame(i + 1).unwrap();
            assert_eq!(b, a + 1);
        }
    }

    #[test]
    fn nyquist_guard_predicate() {
        assert!(!cfg(220.0, 220.0, ShutterMode::RollingSingle, 4, 4).is_aliasing_free());
        assert!(cfg(440.0, 220.0, ShutterMode::RollingSingle, 4, 4).is_aliasing_free());
        assert!(cfg(660.0, 220.0, ShutterMode::RollingSingle, 4, 4).is_aliasing_free());
    }

    #[test]
    fn clipping_truncates_activation_runs() {
        // last rows run past the frame window and must be truncated
        let c = cfg(300.0, 100.0, ShutterMode::RollingSingle, 6, 6);
        let mask = ShutterMask::build(&c).unwrap();
        let active: Vec<usize> = (0..6).filter(|&k| mask.is_active(k, 5)).collect();
        assert_eq!(active, vec![5]);
    }

    #[test]
    fn binned_timing_scales_line_time() {
        let c = cfg(880.0, 110.0, ShutterMode::RollingSingle, 16, 20);
        let b = c.binned(4).unwrap();
        assert_eq!(b.num_rows, 4);
        assert!((b.line_time_us - 440.0).abs() < 1e-12);
        assert_eq!(b.lines_per_exposure(), 2);
        assert!(c.binned(3).is_err());
    }

    #[test]
    fn dual_active_rows_per_frame() {
        let c = cfg(50.0, 50.0, ShutterMode::RollingDual, 6, 3);
        let mask = ShutterMask::build(&c).unwrap();
        assert_eq!(mask.n_active_per_frame(), 2);
    }
}

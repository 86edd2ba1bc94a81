//! Internal 2D FFT plans used by the convolution core.

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

/// Smallest 5-smooth number (2^a 3^b 5^c) that is >= `n`.
///
/// FFT grids are rounded up to such sizes; any grid at least as large as
/// the full linear convolution support gives identical results, so the
/// rounding only buys speed.
pub fn next_fast_len(n: usize) -> usize {
    assert!(n > 0);
    let mut best = usize::MAX;
    let mut p5 = 1usize;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            // round p35 up to the next power of two multiple >= n
            let mut m = p35;
            while m < n {
                m = match m.checked_mul(2) {
                    Some(v) => v,
                    None => return best,
                };
            }
            if m < best {
                best = m;
            }
            p35 = match p35.checked_mul(3) {
                Some(v) => v,
                None => break,
            };
        }
        p5 = match p5.checked_mul(5) {
            Some(v) => v,
            None => break,
        };
    }
    best
}

/// Cached forward/inverse plans for one fixed (rows x cols) complex grid.
///
/// The plans are `Arc<dyn Fft>` and therefore shareable across threads;
/// scratch space is allocated per call so concurrent transforms do not
/// contend.
pub struct Fft2d {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2d {
            rows,
            cols,
            row_fwd: planner.plan_fft(cols, FftDirection::Forward),
            row_inv: planner.plan_fft(cols, FftDirection::Inverse),
            col_fwd: planner.plan_fft(rows, FftDirection::Forward),
            col_inv: planner.plan_fft(rows, FftDirection::Inverse),
        }
    }

    /// In-place unnormalized forward transform of a row-major grid.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// In-place inverse transform, scaled by 1/(rows*cols) so that
    /// `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, false);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.rows * self.cols);
        let (row_plan, col_plan) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };

        let mut scratch = vec![Complex64::default(); row_plan.get_inplace_scratch_len()];
        for row in data.chunks_exact_mut(self.cols) {
            row_plan.process_with_scratch(row, &mut scratch);
        }

        // Column pass via transpose so each 1D FFT is contiguous.
        let mut tr = transpose(data, self.rows, self.cols);
        let mut scratch = vec![Complex64::default(); col_plan.get_inplace_scratch_len()];
        for col in tr.chunks_exact_mut(self.rows) {
            col_plan.process_with_scratch(col, &mut scratch);
        }
        let back = transpose(&tr, self.cols, self.rows);
        data.copy_from_slice(&back);
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

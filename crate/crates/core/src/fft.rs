//! 2D complex FFT on row-major buffers, built from 1D rustfft plans.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Plans for one `nx x ny` grid. Immutable once built; each call allocates
/// its own scratch so a plan can be shared between threads.
pub(crate) struct Fft2 {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(ny),
            col_inv: planner.plan_fft_inverse(ny),
        }
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform including the `1 / (nx * ny)` normalisation.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.nx * self.ny);
        // Row-major buffer: every chunk of nx values is one row.
        rows.process(data);
        let mut column = vec![Complex64::default(); self.ny];
        let mut scratch = vec![Complex64::default(); cols.get_inplace_scratch_len()];
        for x in 0..self.nx {
            for (y, c) in column.iter_mut().enumerate() {
                *c = data[y * self.nx + x];
            }
            cols.process_with_scratch(&mut column, &mut scratch);
            for (y, c) in column.iter().enumerate() {
                data[y * self.nx + x] = *c;
            }
        }
    }
}

/// Spatial frequency (cycles per metre) of FFT bin `i` out of `n` samples.
pub(crate) fn frequency(i: usize, n: usize, pitch: f64) -> f64 {
    let k = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
    k / (n as f64 * pitch)
}

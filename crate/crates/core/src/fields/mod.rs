//! Uniform-grid scalar rasters with physical pixel pitch.
//!
//! Values are stored row-major with `x` varying fastest: the sample at
//! column `x`, row `y` lives at `values[y * nx + x]`. Sample `i` along an
//! axis sits at physical position `i * pitch`.

mod raster;

pub use raster::{decode_raster, encode_raster, read_raster, write_pgm, write_profile_csv, write_raster};

use crate::error::{Error, Result};

/// Geometry of a uniform 2D sampling grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    pitch_x: f64,
    pitch_y: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, pitch_x: f64, pitch_y: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!("{nx}x{ny} has no pixels")));
        }
        if !(pitch_x.is_finite() && pitch_x > 0.0 && pitch_y.is_finite() && pitch_y > 0.0) {
            return Err(Error::InvalidGrid(format!("pitch must be positive, got ({pitch_x}, {pitch_y})")));
        }
        Ok(Self { nx, ny, pitch_x, pitch_y })
    }

    /// Square pixels.
    pub fn square(nx: usize, ny: usize, pitch: f64) -> Result<Self> {
        Self::new(nx, ny, pitch, pitch)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pitch_x(&self) -> f64 {
        self.pitch_x
    }

    pub fn pitch_y(&self) -> f64 {
        self.pitch_y
    }

    pub fn pitch(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Horizontal => self.pitch_x,
            Axis::Vertical => self.pitch_y,
        }
    }

    pub fn count(&self, axis: Axis) -> usize {
        match axis {
            Axis::Horizontal => self.nx,
            Axis::Vertical => self.ny,
        }
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pixel_area(&self) -> f64 {
        self.pitch_x * self.pitch_y
    }

    /// Physical width (`nx * pitch_x`).
    pub fn extent_x(&self) -> f64 {
        self.nx as f64 * self.pitch_x
    }

    pub fn extent_y(&self) -> f64 {
        self.ny as f64 * self.pitch_y
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.nx + x
    }

    pub fn full_roi(&self) -> Roi {
        Roi { x0: 0, y0: 0, width: self.nx, height: self.ny }
    }

    /// Same grid with a different pixel count, used for crops and tiles.
    pub fn with_size(&self, nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, self.pitch_x, self.pitch_y)
    }

    pub(crate) fn ensure_same(&self, other: &Grid2D, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{what}: {self:?} vs {other:?}")))
        }
    }
}

/// Sampling direction within a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Along `x` (a row).
    Horizontal,
    /// Along `y` (a column).
    Vertical,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::Horizontal => Axis::Vertical,
            Axis::Vertical => Axis::Horizontal,
        }
    }
}

/// Rectangular pixel region `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Checks that the region is non-empty and inside `grid`.
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        let fits = self.width > 0
            && self.height > 0
            && self.x0.checked_add(self.width).is_some_and(|e| e <= grid.nx())
            && self.y0.checked_add(self.height).is_some_and(|e| e <= grid.ny());
        if fits {
            Ok(())
        } else {
            Err(Error::OutOfBounds(format!("roi {self:?} in {}x{} grid", grid.nx(), grid.ny())))
        }
    }

    /// Flat indices of the region in row-major order.
    pub fn indices<'a>(&'a self, grid: &'a Grid2D) -> impl Iterator<Item = usize> + 'a {
        (self.y0..self.y0 + self.height)
            .flat_map(move |y| (self.x0..self.x0 + self.width).map(move |x| grid.index(x, y)))
    }
}

/// Real-valued raster on a [`Grid2D`]. Every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid2D, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    /// Builds a field from a function of pixel indices `(x, y)`.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for y in 0..grid.ny() {
            for x in 0..grid.nx() {
                values.push(f(x, y));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.grid.index(x, y)]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.values[y * nx..(y + 1) * nx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &ScalarField2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid, "zip_with")?;
        Self::new(self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copies the region `roi` into a new field with the same pitch.
    pub fn crop(&self, roi: &Roi) -> Result<Self> {
        roi.validate(&self.grid)?;
        let grid = self.grid.with_size(roi.width, roi.height)?;
        let values = roi.indices(&self.grid).map(|i| self.values[i]).collect();
        Ok(Self { grid, values })
    }

    /// Extracts a row (`Horizontal`) or column (`Vertical`) as plain values.
    pub fn line(&self, axis: Axis, index: usize) -> Result<Vec<f64>> {
        let (n, bound) = match axis {
            Axis::Horizontal => (self.grid.nx(), self.grid.ny()),
            Axis::Vertical => (self.grid.ny(), self.grid.nx()),
        };
        if index >= bound {
            return Err(Error::OutOfBounds(format!("{axis:?} line {index} of {bound}")));
        }
        Ok((0..n)
            .map(|i| match axis {
                Axis::Horizontal => self.get(i, index),
                Axis::Vertical => self.get(index, i),
            })
            .collect())
    }
}

/// Arithmetic mean of the values inside `roi`.
pub fn mean_over(field: &ScalarField2D, roi: &Roi) -> Result<f64> {
    Ok(sum_over(field, roi)? / roi.pixel_count() as f64)
}

/// Plain sum of the values inside `roi`, accumulated in row-major order.
pub fn sum_over(field: &ScalarField2D, roi: &Roi) -> Result<f64> {
    roi.validate(field.grid())?;
    let values = field.values();
    Ok(roi.indices(field.grid()).map(|i| values[i]).sum())
}

/// Row (`Horizontal`, fixed `y = index`) or column (`Vertical`, fixed
/// `x = index`) of `field` as `(position_m, value)` pairs.
pub fn line_profile(field: &ScalarField2D, axis: Axis, index: usize) -> Result<Vec<(f64, f64)>> {
    let pitch = field.grid().pitch(axis);
    Ok(field.line(axis, index)?.into_iter().enumerate().map(|(i, v)| (i as f64 * pitch, v)).collect())
}

/// Edge handling for [`gaussian_smooth`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Samples outside the grid repeat the nearest edge sample.
    Clamp,
    /// The grid is treated as periodic.
    Wrap,
}

/// Separable Gaussian blur with standard deviations given in metres.
///
/// The kernel is truncated at four standard deviations and renormalised,
/// so constant fields are preserved exactly up to rounding. A zero sigma
/// leaves that axis untouched.
pub fn gaussian_smooth(
    field: &ScalarField2D,
    sigma_x: f64,
    sigma_y: f64,
    boundary: Boundary,
) -> Result<ScalarField2D> {
    if !(sigma_x >= 0.0 && sigma_y >= 0.0 && sigma_x.is_finite() && sigma_y.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "smoothing sigma must be >= 0, got ({sigma_x}, {sigma_y})"
        )));
    }
    let g = *field.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut values = field.values().to_vec();

    if let Some(kernel) = gaussian_kernel(sigma_x / g.pitch_x()) {
        let mut line = vec![0.0; nx];
        for y in 0..ny {
            convolve_line(&values[y * nx..(y + 1) * nx], &kernel, boundary, &mut line);
            values[y * nx..(y + 1) * nx].copy_from_slice(&line);
        }
    }
    if let Some(kernel) = gaussian_kernel(sigma_y / g.pitch_y()) {
        let mut column = vec![0.0; ny];
        let mut out = vec![0.0; ny];
        for x in 0..nx {
            for (y, c) in column.iter_mut().enumerate() {
                *c = values[y * nx + x];
            }
            convolve_line(&column, &kernel, boundary, &mut out);
            for (y, v) in out.iter().enumerate() {
                values[y * nx + x] = *v;
            }
        }
    }
    ScalarField2D::new(g, values)
}

fn gaussian_kernel(sigma_px: f64) -> Option<Vec<f64>> {
    if sigma_px <= 0.0 {
        return None;
    }
    let half = (4.0 * sigma_px).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let d = i as f64 - half as f64;
            libm::exp(-0.5 * d * d / (sigma_px * sigma_px))
        })
        .collect();
    let norm: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= norm);
    Some(k)
}

fn convolve_line(input: &[f64], kernel: &[f64], boundary: Boundary, out: &mut [f64]) {
    let n = input.len() as isize;
    let half = (kernel.len() / 2) as isize;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, w) in kernel.iter().enumerate() {
            let j = i as isize + k as isize - half;
            let j = match boundary {
                Boundary::Clamp => j.clamp(0, n - 1),
                Boundary::Wrap => j.rem_euclid(n),
            };
            acc += w * input[j as usize];
        }
        *o = acc;
    }
}

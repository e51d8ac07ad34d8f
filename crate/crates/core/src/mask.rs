//! Amplitude masks and scan schedules.
//!
//! Masks are thin screens: each realization is a raster of intensity
//! transmissions, applied multiplicatively. Gratings are 1D square waves,
//! anti-aliased by the exact fraction of each pixel covered by a bar.
//! Speckles are thresholded Gaussian-smoothed noise from the crate's
//! counter-based generator.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{gaussian_smooth, Axis, Boundary, Grid2D, ScalarField2D};
use crate::rng;

/// Direction of the grating lines. Vertical lines vary along x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    VerticalLines,
    HorizontalLines,
}

impl Orientation {
    /// Axis along which the transmission varies.
    pub fn axis(self) -> Axis {
        match self {
            Orientation::VerticalLines => Axis::Horizontal,
            Orientation::HorizontalLines => Axis::Vertical,
        }
    }
}

/// A square-wave grating. `lines_per_mm` is the spatial frequency in
/// cycles per millimetre; each period holds one absorbing bar of width
/// `duty * period` followed by open substrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GratingSpec {
    pub lines_per_mm: f64,
    pub duty: f64,
    pub t_low: f64,
    pub t_high: f64,
    pub orientation: Orientation,
}

impl GratingSpec {
    /// Lead bars on plexiglass: 2% and 96% transmission, half duty.
    pub fn lead_on_plexiglass(lines_per_mm: f64) -> Self {
        Self { lines_per_mm, duty: 0.5, t_low: 0.02, t_high: 0.96, orientation: Orientation::VerticalLines }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lines_per_mm.is_finite() && self.lines_per_mm > 0.0) {
            return Err(Error::InvalidParameter(format!("lines per mm {}", self.lines_per_mm)));
        }
        if !(0.0..1.0).contains(&self.duty) {
            return Err(Error::InvalidParameter(format!("duty {} outside [0, 1)", self.duty)));
        }
        check_transmissions(self.t_low, self.t_high)?;
        if self.t_low == self.t_high {
            return Err(Error::InvalidParameter("grating needs t_low < t_high".into()));
        }
        Ok(())
    }

    /// Period in metres.
    pub fn period(&self) -> f64 {
        1e-3 / self.lines_per_mm
    }
}

fn check_transmissions(t_low: f64, t_high: f64) -> Result<()> {
    if !(0.0 <= t_low && t_low <= t_high && t_high <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "transmissions need 0 <= t_low <= t_high <= 1, got ({t_low}, {t_high})"
        )));
    }
    Ok(())
}

/// One mask pattern at one scan offset.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRealization {
    pattern: ScalarField2D,
    scan_offset: f64,
    pattern_id: usize,
}

impl MaskRealization {
    /// Wraps an arbitrary transmission raster; values must lie in [0, 1].
    pub fn new(pattern: ScalarField2D, scan_offset: f64, pattern_id: usize) -> Result<Self> {
        if let Some(i) = pattern.values().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!(
                "transmission {} at index {i} outside [0, 1]",
                pattern.values()[i]
            )));
        }
        if !scan_offset.is_finite() {
            return Err(Error::InvalidParameter("scan offset must be finite".into()));
        }
        Ok(Self { pattern, scan_offset, pattern_id })
    }

    pub fn pattern(&self) -> &ScalarField2D {
        &self.pattern
    }

    pub fn scan_offset(&self) -> f64 {
        self.scan_offset
    }

    pub fn pattern_id(&self) -> usize {
        self.pattern_id
    }

    pub fn into_pattern(self) -> ScalarField2D {
        self.pattern
    }
}

// Phase resolution for offsets. Quantising frac(offset / period) makes
// offsets one period apart produce bit-identical rasters.
const PHASE_STEPS: f64 = (1u64 << 36) as f64;

/// Renders `spec` shifted by `offset` metres along its varying axis.
///
/// Pixel `i` covers `[i * pitch, (i + 1) * pitch)`; its value is the
/// area-weighted mix of `t_low` and `t_high` over that interval.
pub fn grating_pattern(spec: &GratingSpec, grid: &Grid2D, offset: f64) -> Result<MaskRealization> {
    spec.validate()?;
    if !offset.is_finite() {
        return Err(Error::InvalidParameter(format!("scan offset {offset}")));
    }
    let axis = spec.orientation.axis();
    let pitch = grid.pitch(axis);
    let period = spec.period();
    if period < 2.0 * pitch {
        return Err(Error::UnderResolved(format!(
            "grating period {period} m is below two pixels of {pitch} m"
        )));
    }
    let phase = ((offset / period).rem_euclid(1.0) * PHASE_STEPS).round() / PHASE_STEPS;
    let duty = spec.duty;
    // Bar length accumulated from the phase origin up to position u (in
    // periods).
    let covered = |u: f64| u.floor() * duty + (u - u.floor()).min(duty);
    let scale = pitch / period;
    let line: Vec<f64> = (0..grid.count(axis))
        .map(|i| {
            let a = i as f64 * scale - phase;
            let b = (i + 1) as f64 * scale - phase;
            let bar = ((covered(b) - covered(a)) / scale).clamp(0.0, 1.0);
            spec.t_high - (spec.t_high - spec.t_low) * bar
        })
        .collect();
    let pattern = ScalarField2D::from_fn(*grid, |x, y| match axis {
        Axis::Horizontal => line[x],
        Axis::Vertical => line[y],
    })?;
    Ok(MaskRealization { pattern, scan_offset: offset, pattern_id: 0 })
}

/// Specs for `k = 1..=n_max` times `base_frequency` lines per mm, copying
/// duty, transmissions and orientation from `template`.
pub fn grating_specs(n_max: usize, base_frequency: f64, template: &GratingSpec) -> Result<Vec<GratingSpec>> {
    if n_max == 0 {
        return Err(Error::Empty("grating set"));
    }
    let specs: Vec<GratingSpec> =
        (1..=n_max).map(|k| GratingSpec { lines_per_mm: k as f64 * base_frequency, ..*template }).collect();
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

/// The grating set at zero offset; pattern `k - 1` has `k * base_frequency`
/// lines per mm.
pub fn grating_set(
    n_max: usize,
    base_frequency: f64,
    template: &GratingSpec,
    grid: &Grid2D,
) -> Result<Vec<MaskRealization>> {
    grating_specs(n_max, base_frequency, template)?
        .iter()
        .enumerate()
        .map(|(id, s)| {
            let mut m = grating_pattern(s, grid, 0.0)?;
            m.pattern_id = id;
            Ok(m)
        })
        .collect()
}

/// Bar width of the finest grating in a set, in metres.
pub fn finest_line_width(n_max: usize, base_frequency: f64, duty: f64) -> f64 {
    duty * 1e-3 / (n_max as f64 * base_frequency)
}

/// Binary speckle mask: white noise blurred with a Gaussian of standard
/// deviation `speckle_size / 2` (periodic), thresholded at zero.
pub fn speckle_pattern(
    seed: u64,
    speckle_size: f64,
    t_low: f64,
    t_high: f64,
    grid: &Grid2D,
) -> Result<MaskRealization> {
    check_transmissions(t_low, t_high)?;
    let min_pitch = grid.pitch_x().min(grid.pitch_y());
    if !(speckle_size.is_finite() && speckle_size >= min_pitch) {
        return Err(Error::InvalidParameter(format!("speckle size {speckle_size} m is below one pixel")));
    }
    let noise = ScalarField2D::from_fn(*grid, |x, y| rng::normal(seed, grid.index(x, y) as u64))?;
    let sigma = 0.5 * speckle_size;
    let smooth = gaussian_smooth(&noise, sigma, sigma, Boundary::Wrap)?;
    let pattern = smooth.map(|v| if v > 0.0 { t_high } else { t_low })?;
    Ok(MaskRealization { pattern, scan_offset: 0.0, pattern_id: 0 })
}

/// Where the patterns of a schedule come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternSource {
    Gratings(Vec<GratingSpec>),
    /// Pattern `id` is a speckle drawn with seed `mix(seed, id)`. Scan
    /// offsets shift it cyclically along x by whole pixels.
    Speckles {
        seed: u64,
        count: usize,
        speckle_size: f64,
        t_low: f64,
        t_high: f64,
    },
}

impl PatternSource {
    pub fn len(&self) -> usize {
        match self {
            PatternSource::Gratings(g) => g.len(),
            PatternSource::Speckles { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn base(&self, id: usize, grid: &Grid2D) -> Result<ScalarField2D> {
        match self {
            PatternSource::Gratings(specs) => Ok(grating_pattern(&specs[id], grid, 0.0)?.pattern),
            PatternSource::Speckles { seed, speckle_size, t_low, t_high, .. } => {
                Ok(speckle_pattern(rng::mix(*seed, id as u64), *speckle_size, *t_low, *t_high, grid)?.pattern)
            }
        }
    }
}

/// Ordered `(pattern_id, scan_offset)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSchedule {
    entries: Vec<(usize, f64)>,
    step: f64,
}

impl ScanSchedule {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Every pattern at offsets `0, step, ..., (offsets_per_pattern - 1) step`,
/// pattern-major.
pub fn make_schedule(patterns: usize, step: f64, offsets_per_pattern: usize) -> Result<ScanSchedule> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidParameter(format!("scan step {step}")));
    }
    if patterns == 0 || offsets_per_pattern == 0 {
        return Err(Error::Empty("scan schedule"));
    }
    let entries =
        (0..patterns).flat_map(|p| (0..offsets_per_pattern).map(move |o| (p, o as f64 * step))).collect();
    Ok(ScanSchedule { entries, step })
}

/// Renders every schedule entry on `grid`.
pub fn realize(
    schedule: &ScanSchedule,
    source: &PatternSource,
    grid: &Grid2D,
) -> Result<Vec<MaskRealization>> {
    if let Some(&(id, _)) = schedule.entries.iter().find(|(id, _)| *id >= source.len()) {
        return Err(Error::InvalidParameter(format!(
            "schedule references pattern {id} but the source has {}",
            source.len()
        )));
    }
    match source {
        PatternSource::Gratings(specs) => schedule
            .entries
            .par_iter()
            .map(|&(id, offset)| {
                let mut m = grating_pattern(&specs[id], grid, offset)?;
                m.pattern_id = id;
                Ok(m)
            })
            .collect(),
        PatternSource::Speckles { .. } => {
            let bases: Vec<ScalarField2D> =
                (0..source.len()).into_par_iter().map(|id| source.base(id, grid)).collect::<Result<_>>()?;
            schedule
                .entries
                .par_iter()
                .map(|&(id, offset)| {
                    let shift = (offset / grid.pitch_x()).round() as i64;
                    let pattern = shift_x(&bases[id], shift)?;
                    Ok(MaskRealization { pattern, scan_offset: offset, pattern_id: id })
                })
                .collect()
        }
    }
}

/// Cyclic shift by `shift` pixels towards +x.
fn shift_x(field: &ScalarField2D, shift: i64) -> Result<ScalarField2D> {
    let g = field.grid();
    let nx = g.nx() as i64;
    ScalarField2D::from_fn(*g, |x, y| field.get((x as i64 - shift).rem_euclid(nx) as usize, y))
}

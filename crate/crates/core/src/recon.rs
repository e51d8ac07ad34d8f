//! Ghost synthesis, flat-field normalisation and resolution diagnostics.
//!
//! For mailbox `m` with readings `b_jm` and reference patterns `I_j`,
//! the ghost over that mailbox's footprint is
//! `G(x) = (1/N) sum_j (b_jm - mean_j b_jm) I_j(x)`.
//! Absolute units of `G` are arbitrary; quantitative transmission comes
//! from the ratio of a sample ghost to a flat-field ghost built from the
//! same schedule.
//!
//! Substituting the bucket model shows that a ghost is the object seen
//! through the kernel `K(x, x') = (1/N) sum_j (I_j(x) - <I(x)>)(I_j(x') - <I(x')>)`
//! (covariance over realizations, `<.>` the mean over `j`). [`kernel_smooth`]
//! applies `K` directly and serves as an independent check of the bucket
//! pipeline. [`psf`] is the completeness matrix with per-pattern spatial
//! means, whose rows integrate to zero.

use rayon::prelude::*;

use crate::acquisition::{BucketSeries, MailboxGeometry};
use crate::error::{Error, Result};
use crate::fields::{Axis, Grid2D, Roi, ScalarField2D};
use crate::mask::MaskRealization;

/// Which schedule produced a ghost: `(pattern_id, scan_offset)` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisDescriptor {
    pub entries: Vec<(usize, f64)>,
}

impl BasisDescriptor {
    pub fn of(masks: &[MaskRealization]) -> Self {
        Self { entries: masks.iter().map(|m| (m.pattern_id(), m.scan_offset())).collect() }
    }

    fn of_series(b: &BucketSeries) -> Self {
        Self { entries: b.pattern_ids().iter().copied().zip(b.offsets().iter().copied()).collect() }
    }
}

/// A synthesized ghost image. Pixels outside every mailbox are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostImage {
    pub field: ScalarField2D,
    pub basis: BasisDescriptor,
    pub geometry: MailboxGeometry,
    pub normalized: bool,
}

fn footprint_patterns(references: &[MaskRealization], roi: &Roi) -> Vec<Vec<f64>> {
    references
        .iter()
        .map(|m| {
            let g = m.pattern().grid();
            roi.indices(g).map(|i| m.pattern().values()[i]).collect()
        })
        .collect()
}

/// Correlates bucket readings with the reference patterns, mailbox by
/// mailbox.
pub fn ghost_synthesize(
    references: &[MaskRealization],
    buckets: &BucketSeries,
    geom: &MailboxGeometry,
) -> Result<GhostImage> {
    let n = references.len();
    if n == 0 {
        return Err(Error::Empty("reference set"));
    }
    if buckets.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: buckets.len() });
    }
    let basis = BasisDescriptor::of(references);
    if basis != BasisDescriptor::of_series(buckets) {
        return Err(Error::BasisMismatch("bucket schedule differs from the references".into()));
    }
    let grid = *references[0].pattern().grid();
    for r in references {
        grid.ensure_same(r.pattern().grid(), "ghost references")?;
    }
    let rois = geom.footprints(&grid)?;
    if buckets.mailboxes() != rois.len() {
        return Err(Error::LengthMismatch { expected: rois.len(), found: buckets.mailboxes() });
    }

    let pieces: Vec<Vec<f64>> = rois
        .par_iter()
        .enumerate()
        .map(|(m, roi)| {
            let b = buckets.column(m);
            let mean = b.iter().sum::<f64>() / n as f64;
            let mut acc = vec![0.0; roi.pixel_count()];
            for (r, bj) in references.iter().zip(&b) {
                let w = bj - mean;
                for (a, i) in acc.iter_mut().zip(roi.indices(&grid)) {
                    *a += w * r.pattern().values()[i];
                }
            }
            acc.iter_mut().for_each(|a| *a /= n as f64);
            acc
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    for (roi, piece) in rois.iter().zip(pieces) {
        for (i, v) in roi.indices(&grid).zip(piece) {
            values[i] = v;
        }
    }
    Ok(GhostImage { field: ScalarField2D::new(grid, values)?, basis, geometry: *geom, normalized: false })
}

/// Guard for dividing by a flat-field ghost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonPolicy {
    /// Pixels with `|G_flat| < relative * max |G_flat|` are invalid.
    pub relative: f64,
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        Self { relative: 1e-6 }
    }
}

/// A ratio image with its validity mask. Invalid pixels hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub field: ScalarField2D,
    pub valid: Vec<bool>,
}

impl Normalized {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// The validity mask as a 0/1 raster.
    pub fn mask_field(&self) -> ScalarField2D {
        let values = self.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        ScalarField2D::new(*self.field.grid(), values).expect("0/1 values are finite")
    }

    /// Values at valid pixels.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.field.values().iter().zip(&self.valid).filter(|(_, &ok)| ok).map(|(&v, _)| v)
    }
}

/// `G_S / G_flat` where the flat-field ghost is large enough to divide by.
pub fn flat_field_normalize(
    sample: &GhostImage,
    flat: &GhostImage,
    policy: EpsilonPolicy,
) -> Result<Normalized> {
    if sample.basis != flat.basis || sample.geometry != flat.geometry {
        return Err(Error::BasisMismatch(
            "sample and flat-field ghosts come from different schedules or mailboxes".into(),
        ));
    }
    sample.field.grid().ensure_same(flat.field.grid(), "flat-field normalisation")?;
    ratio_with_guard(&sample.field, &flat.field, policy)
}

fn ratio_with_guard(num: &ScalarField2D, den: &ScalarField2D, policy: EpsilonPolicy) -> Result<Normalized> {
    let peak = den.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = policy.relative * peak;
    let valid: Vec<bool> = den.values().iter().map(|d| peak > 0.0 && d.abs() >= floor).collect();
    let values = num
        .values()
        .iter()
        .zip(den.values())
        .zip(&valid)
        .map(|((n, d), &ok)| if ok { n / d } else { 0.0 })
        .collect();
    Ok(Normalized { field: ScalarField2D::new(*num.grid(), values)?, valid })
}

/// Symmetric `p x p` matrix over basis-resolution pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfMatrix {
    size: usize,
    pitch: f64,
    values: Vec<f64>,
}

impl PsfMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn get(&self, x: usize, x2: usize) -> f64 {
        self.values[x * self.size + x2]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.size..(x + 1) * self.size]
    }

    /// Row `x` as `(position_m, value)` pairs.
    pub fn row_profile(&self, x: usize) -> Vec<(f64, f64)> {
        self.row(x).iter().enumerate().map(|(i, &v)| (i as f64 * self.pitch, v)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (0..i).all(|k| self.get(i, k) == self.get(k, i)))
    }

    /// True when every off-diagonal magnitude is below its row's diagonal.
    pub fn is_diagonally_dominant(&self) -> bool {
        self.dominance_ratio() < 1.0
    }

    /// Largest `|off-diagonal| / diagonal` over all rows.
    pub fn dominance_ratio(&self) -> f64 {
        (0..self.size)
            .map(|i| {
                let d = self.get(i, i);
                let off =
                    (0..self.size).filter(|&k| k != i).map(|k| self.get(i, k).abs()).fold(0.0, f64::max);
                if d > 0.0 {
                    off / d
                } else if off == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    /// As a raster with the basis pitch on both axes.
    pub fn to_field(&self) -> Result<ScalarField2D> {
        ScalarField2D::new(Grid2D::square(self.size, self.size, self.pitch)?, self.values.clone())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for x in 0..self.size {
            let row: Vec<String> = self.row(x).iter().map(|v| v.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Mean FWHM over rows whose half-maximum crossings both exist.
    /// Returns the mean and the number of rows measured.
    pub fn mean_row_fwhm(&self) -> Result<(f64, usize)> {
        let widths: Vec<f64> = (0..self.size).filter_map(|x| fwhm(&self.row_profile(x)).ok()).collect();
        if widths.is_empty() {
            return Err(Error::NoCrossing("no PSF row has two half-maximum crossings".into()));
        }
        Ok((widths.iter().sum::<f64>() / widths.len() as f64, widths.len()))
    }
}

fn check_profiles(profiles: &[Vec<f64>]) -> Result<usize> {
    let p = profiles.first().ok_or(Error::Empty("reference set"))?.len();
    if p == 0 {
        return Err(Error::Empty("reference profile"));
    }
    if let Some(bad) = profiles.iter().find(|r| r.len() != p) {
        return Err(Error::LengthMismatch { expected: p, found: bad.len() });
    }
    Ok(p)
}

fn symmetric_product(rows: &[Vec<f64>], p: usize, pitch: f64) -> PsfMatrix {
    let n = rows.len() as f64;
    let mut values = vec![0.0; p * p];
    for x in 0..p {
        for x2 in x..p {
            let v = rows.iter().map(|r| r[x] * r[x2]).sum::<f64>() / n;
            values[x * p + x2] = v;
            values[x2 * p + x] = v;
        }
    }
    PsfMatrix { size: p, pitch, values }
}

/// Completeness matrix of 1D reference profiles over one mailbox:
/// `PSF(x, x') = (1/N) sum_j (I_j(x) - Ibar_j)(I_j(x') - Ibar_j)` with
/// `Ibar_j` the spatial mean of profile `j`.
pub fn psf(references: &[Vec<f64>], pitch: f64) -> Result<PsfMatrix> {
    let p = check_profiles(references)?;
    let rows: Vec<Vec<f64>> = references
        .iter()
        .map(|r| {
            let mean = r.iter().sum::<f64>() / p as f64;
            r.iter().map(|v| v - mean).collect()
        })
        .collect();
    Ok(symmetric_product(&rows, p, pitch))
}

/// Ghost kernel of 1D reference profiles: the covariance over
/// realizations, `K(x, x') = (1/N) sum_j (I_j(x) - <I(x)>)(I_j(x') - <I(x')>)`.
pub fn ghost_kernel(references: &[Vec<f64>], pitch: f64) -> Result<PsfMatrix> {
    let p = check_profiles(references)?;
    let n = references.len() as f64;
    let means: Vec<f64> = (0..p).map(|x| references.iter().map(|r| r[x]).sum::<f64>() / n).collect();
    let rows: Vec<Vec<f64>> =
        references.iter().map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect()).collect();
    Ok(symmetric_product(&rows, p, pitch))
}

/// Profiles of every reference along the resolution axis of mailbox `m`,
/// averaged across the mailbox height.
pub fn mailbox_profiles(
    references: &[MaskRealization],
    geom: &MailboxGeometry,
    m: usize,
) -> Result<Vec<Vec<f64>>> {
    let first = references.first().ok_or(Error::Empty("reference set"))?;
    let grid = *first.pattern().grid();
    let rois = geom.footprints(&grid)?;
    let roi = rois.get(m).ok_or_else(|| Error::OutOfBounds(format!("mailbox {m} of {}", rois.len())))?;
    references
        .iter()
        .map(|r| {
            grid.ensure_same(r.pattern().grid(), "mailbox profiles")?;
            let f = r.pattern();
            let (along, across) = match geom.axis {
                Axis::Horizontal => (roi.width, roi.height),
                Axis::Vertical => (roi.height, roi.width),
            };
            Ok((0..along)
                .map(|a| {
                    (0..across)
                        .map(|c| match geom.axis {
                            Axis::Horizontal => f.get(roi.x0 + a, roi.y0 + c),
                            Axis::Vertical => f.get(roi.x0 + c, roi.y0 + a),
                        })
                        .sum::<f64>()
                        / across as f64
                })
                .collect())
        })
        .collect()
}

/// Averages consecutive groups of `factor` samples.
pub fn bin_profile(profile: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 || profile.len() % factor != 0 {
        return Err(Error::InvalidParameter(format!("cannot bin {} samples by {factor}", profile.len())));
    }
    Ok(profile.chunks_exact(factor).map(|c| c.iter().sum::<f64>() / factor as f64).collect())
}

/// Applies the ghost kernel of `references` to `image` over each mailbox
/// footprint and divides by the kernel applied to a flat image:
/// `sum_x' K(x, x') D(x') / sum_x' K(x, x')`.
///
/// This is what a normalized ghost of `image` must equal when the bucket
/// signal is `sum T_j * image`, computed without any bucket readings.
pub fn kernel_smooth(
    references: &[MaskRealization],
    image: &ScalarField2D,
    geom: &MailboxGeometry,
    policy: EpsilonPolicy,
) -> Result<Normalized> {
    if references.is_empty() {
        return Err(Error::Empty("reference set"));
    }
    let grid = *image.grid();
    for r in references {
        grid.ensure_same(r.pattern().grid(), "kernel smoothing")?;
    }
    let rois = geom.footprints(&grid)?;
    let pieces: Vec<(Vec<f64>, Vec<f64>)> = rois
        .par_iter()
        .map(|roi| {
            let pats = footprint_patterns(references, roi);
            let k = ghost_kernel(&pats, 1.0)?;
            let d: Vec<f64> = roi.indices(&grid).map(|i| image.values()[i]).collect();
            let mut num = vec![0.0; d.len()];
            let mut den = vec![0.0; d.len()];
            for x in 0..d.len() {
                let row = k.row(x);
                num[x] = row.iter().zip(&d).map(|(a, b)| a * b).sum();
                den[x] = row.iter().sum();
            }
            Ok((num, den))
        })
        .collect::<Result<_>>()?;
    let mut num = vec![0.0; grid.len()];
    let mut den = vec![0.0; grid.len()];
    for (roi, (n, d)) in rois.iter().zip(pieces) {
        for ((i, a), b) in roi.indices(&grid).zip(n).zip(d) {
            num[i] = a;
            den[i] = b;
        }
    }
    ratio_with_guard(&ScalarField2D::new(grid, num)?, &ScalarField2D::new(grid, den)?, policy)
}

/// Full width at half maximum of a single-peaked profile.
///
/// The baseline is the median of the outer quartile of samples (the first
/// and last eighth). Crossings of `baseline + (max - baseline) / 2` on
/// either side of the global maximum are located by linear interpolation.
pub fn fwhm(profile: &[(f64, f64)]) -> Result<f64> {
    let n = profile.len();
    if n < 3 {
        return Err(Error::NoCrossing(format!("profile of {n} samples")));
    }
    let edge = (n / 8).max(1);
    let mut outer: Vec<f64> = profile[..edge].iter().chain(&profile[n - edge..]).map(|p| p.1).collect();
    outer.sort_by(f64::total_cmp);
    let baseline = if outer.len() % 2 == 1 {
        outer[outer.len() / 2]
    } else {
        0.5 * (outer[outer.len() / 2 - 1] + outer[outer.len() / 2])
    };
    let (peak_i, peak) =
        profile
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p.1 > acc.1 { (i, p.1) } else { acc });
    if peak <= baseline {
        return Err(Error::NoCrossing("peak does not rise above the baseline".into()));
    }
    let half = baseline + 0.5 * (peak - baseline);
    let cross = |a: (f64, f64), b: (f64, f64)| a.0 + (half - a.1) * (b.0 - a.0) / (b.1 - a.1);
    let left = (1..=peak_i)
        .rev()
        .find(|&i| profile[i - 1].1 < half)
        .map(|i| cross(profile[i - 1], profile[i]))
        .ok_or_else(|| Error::NoCrossing("no crossing left of the peak".into()))?;
    let right = (peak_i..n - 1)
        .find(|&i| profile[i + 1].1 < half)
        .map(|i| cross(profile[i], profile[i + 1]))
        .ok_or_else(|| Error::NoCrossing("no crossing right of the peak".into()))?;
    Ok(right - left)
}

/// How tiles are joined in [`stitch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StitchPolicy {
    /// Central crops placed side by side along x, no blending.
    #[default]
    Concatenate,
}

/// Crops the central `crop_width` metres of each tile along x and joins
/// the crops in order.
pub fn stitch(tiles: &[ScalarField2D], crop_width: f64, policy: StitchPolicy) -> Result<ScalarField2D> {
    let StitchPolicy::Concatenate = policy;
    let first = tiles.first().ok_or(Error::Empty("tile list"))?.grid();
    for t in tiles {
        let g = t.grid();
        if g.pitch_x() != first.pitch_x() || g.pitch_y() != first.pitch_y() || g.ny() != first.ny() {
            return Err(Error::GridMismatch("tiles differ in pitch or height".into()));
        }
    }
    let w = (crop_width / first.pitch_x()).round() as usize;
    let mut crops = Vec::with_capacity(tiles.len());
    for t in tiles {
        let nx = t.grid().nx();
        if w == 0 || w > nx {
            return Err(Error::OutOfBounds(format!("crop of {w} px from a {nx} px tile")));
        }
        crops.push(t.crop(&Roi::new((nx - w) / 2, 0, w, first.ny()))?);
    }
    let grid = first.with_size(w * tiles.len(), first.ny())?;
    ScalarField2D::from_fn(grid, |x, y| crops[x / w].get(x % w, y))
}

/// Root-mean-square difference over pixels where `valid` holds (all pixels
/// when `None`).
pub fn rms_difference(a: &ScalarField2D, b: &ScalarField2D, valid: Option<&[bool]>) -> Result<f64> {
    a.grid().ensure_same(b.grid(), "rms difference")?;
    if let Some(v) = valid {
        if v.len() != a.grid().len() {
            return Err(Error::LengthMismatch { expected: a.grid().len(), found: v.len() });
        }
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
        if valid.map_or(true, |v| v[i]) {
            sum += (x - y) * (x - y);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("valid pixel set"));
    }
    Ok((sum / count as f64).sqrt())
}

/// Positions and values of the global maximum and minimum of a profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrema {
    pub max_position: f64,
    pub max: f64,
    pub min_position: f64,
    pub min: f64,
}

pub fn extrema(profile: &[(f64, f64)]) -> Result<Extrema> {
    let first = profile.first().ok_or(Error::Empty("profile"))?;
    let mut e = Extrema { max_position: first.0, max: first.1, min_position: first.0, min: first.1 };
    for &(p, v) in profile {
        if v > e.max {
            e.max = v;
            e.max_position = p;
        }
        if v < e.min {
            e.min = v;
            e.min_position = p;
        }
    }
    Ok(e)
}

/// Nearest-neighbour upsampling by an integer factor on both axes.
pub fn upsample(field: &ScalarField2D, factor: usize) -> Result<ScalarField2D> {
    if factor == 0 {
        return Err(Error::InvalidParameter("upsampling factor 0".into()));
    }
    let g = field.grid();
    let grid = Grid2D::new(
        g.nx() * factor,
        g.ny() * factor,
        g.pitch_x() / factor as f64,
        g.pitch_y() / factor as f64,
    )?;
    ScalarField2D::from_fn(grid, |x, y| field.get(x / factor, y / factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{forward, AcquisitionOrder, ContrastModel, ForwardSpec};
    use crate::mask::{grating_set, grating_specs, make_schedule, realize, GratingSpec, PatternSource};
    use crate::phantom::{Material, ThicknessMap};

    fn masks_from(rows: &[Vec<f64>]) -> Vec<MaskRealization> {
        let g = Grid2D::square(rows[0].len(), 1, 1.0).unwrap();
        rows.iter()
            .enumerate()
            .map(|(j, r)| MaskRealization::new(ScalarField2D::new(g, r.clone()).unwrap(), 0.0, j).unwrap())
            .collect()
    }

    fn series(rows: &[Vec<f64>]) -> BucketSeries {
        let m = rows[0].len();
        BucketSeries::new(m, rows.concat(), vec![0.0; rows.len()], (0..rows.len()).collect()).unwrap()
    }

    #[test]
    fn two_pixel_hand_example() {
        let (a, b) = (0.7, 0.2);
        let refs = masks_from(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let g = *refs[0].pattern().grid();
        let geom = MailboxGeometry::single(&g);
        let ghost = ghost_synthesize(&refs, &series(&[vec![a], vec![b]]), &geom).unwrap();
        let v = ghost.field.values();
        assert!((v[0] - (a - b) / 4.0).abs() < 1e-15);
        assert!((v[1] - (b - a) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn flat_object_gives_zero_ghost() {
        let refs = masks_from(&[vec![1.0, 0.0, 0.5], vec![0.0, 1.0, 0.2], vec![0.3, 0.3, 0.3]]);
        let geom = MailboxGeometry::single(refs[0].pattern().grid());
        let ghost = ghost_synthesize(&refs, &series(&[vec![2.0], vec![2.0], vec![2.0]]), &geom).unwrap();
        assert!(ghost.field.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn synthesis_rejects_inconsistent_inputs() {
        let refs = masks_from(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let geom = MailboxGeometry::single(refs[0].pattern().grid());
        assert!(matches!(
            ghost_synthesize(&refs, &series(&[vec![1.0]]), &geom),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(ghost_synthesize(&[], &series(&[vec![1.0]]), &geom), Err(Error::Empty(_))));
        let shifted = BucketSeries::new(1, vec![1.0, 2.0], vec![0.0, 1.0], vec![0, 1]).unwrap();
        assert!(matches!(ghost_synthesize(&refs, &shifted, &geom), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn normalisation_examples() {
        let g = Grid2D::square(3, 1, 1.0).unwrap();
        let geom = MailboxGeometry::single(&g);
        let basis = BasisDescriptor { entries: vec![(0, 0.0)] };
        let ghost = |v: Vec<f64>| GhostImage {
            field: ScalarField2D::new(g, v).unwrap(),
            basis: basis.clone(),
            geometry: geom,
            normalized: false,
        };
        let flat = ghost(vec![2.0, -4.0, 1e-9]);
        let same = flat_field_normalize(&flat, &flat, EpsilonPolicy::default()).unwrap();
        assert_eq!(same.valid, vec![true, true, false]);
        assert_eq!(same.field.values(), &[1.0, 1.0, 0.0]);
        let s = ghost(vec![1.0, -1.0, 5.0]);
        let r = flat_field_normalize(&s, &flat, EpsilonPolicy::default()).unwrap();
        assert_eq!(r.field.values(), &[0.5, 0.25, 0.0]);
        let other = GhostImage { basis: BasisDescriptor { entries: vec![(1, 0.0)] }, ..flat.clone() };
        assert!(matches!(
            flat_field_normalize(&s, &other, EpsilonPolicy::default()),
            Err(Error::BasisMismatch(_))
        ));
    }

    #[test]
    fn identity_basis_psf_is_diagonal() {
        let rows: Vec<Vec<f64>> =
            (0..6).map(|j| (0..6).map(|x| if x == j { 1.0 } else { 0.0 }).collect()).collect();
        let m = psf(&rows, 1e-5).unwrap();
        assert!(m.is_symmetric());
        assert!(m.is_diagonally_dominant());
        // Per-pattern means shift every off-diagonal entry by the same amount.
        let off = m.get(0, 1);
        assert!((0..6).all(|i| (0..6).all(|k| i == k || (m.get(i, k) - off).abs() < 1e-15)));
        assert!(psf(&[], 1.0).is_err());
        assert!(matches!(psf(&[vec![1.0], vec![1.0, 2.0]], 1.0), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn psf_rows_sum_to_zero_and_matrix_is_symmetric() {
        let g = Grid2D::square(100, 1, 1e-5).unwrap();
        let set = grating_set(10, 0.5, &GratingSpec::lead_on_plexiglass(1.0), &g).unwrap();
        let geom = MailboxGeometry::single(&g);
        let m = psf(&mailbox_profiles(&set, &geom, 0).unwrap(), 1e-5).unwrap();
        assert!(m.is_symmetric());
        for x in 0..100 {
            assert!(m.row(x).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn ten_grating_psf_width() {
        let g = Grid2D::square(100, 1, 1e-5).unwrap();
        let set = grating_set(10, 0.5, &GratingSpec::lead_on_plexiglass(1.0), &g).unwrap();
        let profiles = mailbox_profiles(&set, &MailboxGeometry::single(&g), 0).unwrap();
        let (w, rows) = psf(&profiles, 1e-5).unwrap().mean_row_fwhm().unwrap();
        assert!((w - 1e-4).abs() <= 1e-5, "{w}");
        assert!(rows >= 50);
        let coarse: Vec<Vec<f64>> = profiles.iter().map(|p| bin_profile(p, 10).unwrap()).collect();
        assert!(psf(&coarse, 1e-4).unwrap().is_diagonally_dominant());
    }

    // Per-pattern mean subtraction leaves a common bias of -var/p on the
    // off-diagonals; what decays with N is their scatter about it.
    #[test]
    fn speckle_psf_off_diagonals_decay() {
        let g = Grid2D::square(48, 1, 1e-6).unwrap();
        let scatter = |n: usize| {
            let src =
                PatternSource::Speckles { seed: 3, count: n, speckle_size: 1e-6, t_low: 0.0, t_high: 1.0 };
            let masks = realize(&make_schedule(n, 1e-6, 1).unwrap(), &src, &g).unwrap();
            let prof = mailbox_profiles(&masks, &MailboxGeometry::single(&g), 0).unwrap();
            let m = psf(&prof, 1e-6).unwrap();
            let diag = (0..48).map(|i| m.get(i, i)).sum::<f64>() / 48.0;
            let far: Vec<f64> = (0..48)
                .flat_map(|i: usize| (0..48usize).filter(move |&k| i.abs_diff(k) >= 4).map(move |k| (i, k)))
                .map(|(i, k)| m.get(i, k))
                .collect();
            let mean = far.iter().sum::<f64>() / far.len() as f64;
            (far.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / far.len() as f64).sqrt() / diag
        };
        let (r100, r1600) = (scatter(100), scatter(1600));
        // Expected ratio 1/sqrt(16) = 0.25.
        assert!(r1600 < 0.4 * r100 && r1600 > 0.15 * r100, "{r100} -> {r1600}");
    }

    #[test]
    fn fwhm_of_gaussian_and_triangle() {
        for sigma in [3.0, 4.5, 10.0] {
            let p: Vec<(f64, f64)> = (0..200)
                .map(|i| {
                    let x = i as f64 - 100.3;
                    (i as f64 * 2e-6, 5.0 + (-0.5 * x * x / (sigma * sigma)).exp())
                })
                .collect();
            let w = fwhm(&p).unwrap();
            let want = 2.354_820_045 * sigma * 2e-6;
            assert!((w - want).abs() <= 0.01 * want, "sigma {sigma}: {w} vs {want}");
        }
        let tri: Vec<(f64, f64)> =
            (0..41).map(|i| (i as f64, (10.0 - (i as f64 - 20.0).abs()).max(0.0))).collect();
        assert!((fwhm(&tri).unwrap() - 10.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 1.0)).collect();
        assert!(matches!(fwhm(&flat), Err(Error::NoCrossing(_))));
        let ramp: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, i as f64)).collect();
        assert!(matches!(fwhm(&ramp), Err(Error::NoCrossing(_))));
    }

    #[test]
    fn stitch_examples() {
        let g = Grid2D::square(154, 3, 6.5e-6).unwrap();
        let tile = ScalarField2D::from_fn(g, |x, y| (x * 3 + y) as f64).unwrap();
        assert_eq!(
            stitch(std::slice::from_ref(&tile), 154.0 * 6.5e-6, StitchPolicy::Concatenate).unwrap(),
            tile
        );
        let tiles: Vec<ScalarField2D> = (0..21).map(|_| tile.clone()).collect();
        let wide = stitch(&tiles, 5e-4, StitchPolicy::Concatenate).unwrap();
        assert_eq!(wide.grid().nx(), 21 * 77);
        assert!((wide.grid().extent_x() - 1.05e-2).abs() < 1e-4);
        let c = ScalarField2D::constant(g, 0.8).unwrap();
        let two = stitch(&[c.clone(), c], 5e-4, StitchPolicy::Concatenate).unwrap();
        assert!(two.values().iter().all(|&v| v == 0.8));
        let other = ScalarField2D::constant(Grid2D::square(154, 4, 6.5e-6).unwrap(), 1.0).unwrap();
        assert!(stitch(&[tile, other], 5e-4, StitchPolicy::Concatenate).is_err());
    }

    #[test]
    fn pipeline_matches_kernel_oracle() {
        let g = Grid2D::square(200, 3, 1e-5).unwrap();
        let specs = grating_specs(10, 0.5, &GratingSpec::lead_on_plexiglass(1.0)).unwrap();
        let masks =
            realize(&make_schedule(10, 3e-5, 2).unwrap(), &PatternSource::Gratings(specs), &g).unwrap();
        let geom = MailboxGeometry::tiling(&g, 1e-3, 1e-5, Axis::Horizontal).unwrap();
        let m = Material::from_energy_kev(1.5e-6, 5.6e-9, 19.0).unwrap();
        let t = ThicknessMap::new(
            ScalarField2D::from_fn(g, |x, _| 2e-4 * (-((x as f64 - 60.0) / 12.0).powi(2)).exp()).unwrap(),
        )
        .unwrap();
        let spec = ForwardSpec {
            order: AcquisitionOrder::StructuredDetection,
            distance: 0.0,
            model: ContrastModel::AttenuationOnly,
            mask_distance: 0.0,
        };
        let ones = ScalarField2D::constant(g, 1.0).unwrap();
        let (bs, _) = forward(&spec, &m, &t, &masks, &ones, &geom).unwrap();
        let (bf, _) = forward(&spec, &m, &ThicknessMap::zeros(g), &masks, &ones, &geom).unwrap();
        let gs = ghost_synthesize(&masks, &bs, &geom).unwrap();
        let gf = ghost_synthesize(&masks, &bf, &geom).unwrap();
        let ratio = flat_field_normalize(&gs, &gf, EpsilonPolicy::default()).unwrap();
        let direct = crate::optics::contact_image(&m, &t, &ones).unwrap();
        let oracle = kernel_smooth(&masks, &direct, &geom, EpsilonPolicy::default()).unwrap();
        assert_eq!(ratio.valid, oracle.valid);
        assert!(rms_difference(&ratio.field, &oracle.field, Some(&ratio.valid)).unwrap() < 1e-10);
        // Scaling every reading leaves the ratio unchanged.
        let gs2 = ghost_synthesize(&masks, &bs.scaled(3.7).unwrap(), &geom).unwrap();
        let gf2 = ghost_synthesize(&masks, &bf.scaled(3.7).unwrap(), &geom).unwrap();
        let r2 = flat_field_normalize(&gs2, &gf2, EpsilonPolicy::default()).unwrap();
        for (a, b) in r2.valid_values().zip(ratio.valid_values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn helpers() {
        assert_eq!(bin_profile(&[1.0, 3.0, 2.0, 2.0], 2).unwrap(), vec![2.0, 2.0]);
        assert!(bin_profile(&[1.0, 2.0, 3.0], 2).is_err());
        let e = extrema(&[(0.0, 1.0), (1.0, 3.0), (2.0, -1.0)]).unwrap();
        assert_eq!((e.max_position, e.min_position), (1.0, 2.0));
        let g = Grid2D::square(2, 1, 2e-5).unwrap();
        let up = upsample(&ScalarField2D::new(g, vec![1.0, 2.0]).unwrap(), 2).unwrap();
        assert_eq!(up.values(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!(up.grid().pitch_x(), 1e-5);
    }
}

//! Forward models and detector integration.
//!
//! A bucket value is the discrete integral `sum(values) * pixel_area` over a
//! region. Mailboxes are rectangular footprints tiling the detector: each
//! one is `length` long along the resolution axis and `height` across, and
//! gets its own bucket series.
//!
//! In structured illumination the mask pattern lights the sample and the
//! propagated image is integrated. In structured detection the sample image
//! is formed first and the mask sits in that image plane, so the bucket
//! records `sum(T_M,j * image)`. Propagation from the mask to the detector
//! is not modelled: a bucket integrates total energy, which free space
//! preserves. For narrow mailboxes this ignores cross-talk between
//! neighbours.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{sum_over, Axis, Grid2D, Roi, ScalarField2D};
use crate::mask::MaskRealization;
use crate::optics::{propagate_screen, LaplacianMode, PropagatedImage, SpectralOps};
use crate::phantom::{Material, ThicknessMap};

/// `I_j = T_M,j * I_in`.
pub fn illuminate(mask: &MaskRealization, i_in: &ScalarField2D) -> Result<ScalarField2D> {
    mask.pattern().zip_with(i_in, |t, i| t * i)
}

/// Discrete bucket integral over `roi`, in intensity times square metres.
pub fn bucket(field: &ScalarField2D, roi: &Roi) -> Result<f64> {
    Ok(sum_over(field, roi)? * field.grid().pixel_area())
}

/// A grid of equal mailboxes. Mailbox `m = row * columns + column`, where
/// columns advance along `axis` and rows across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MailboxGeometry {
    /// Extent along the resolution axis, metres.
    pub length: f64,
    /// Extent across the resolution axis, metres.
    pub height: f64,
    pub columns: usize,
    pub rows: usize,
    /// Physical position of the first mailbox corner, `(x, y)` metres.
    pub origin: (f64, f64),
    pub axis: Axis,
}

impl MailboxGeometry {
    /// One mailbox covering the whole grid.
    pub fn single(grid: &Grid2D) -> Self {
        Self {
            length: grid.extent_x(),
            height: grid.extent_y(),
            columns: 1,
            rows: 1,
            origin: (0.0, 0.0),
            axis: Axis::Horizontal,
        }
    }

    /// As many whole mailboxes as fit on `grid` from the origin.
    pub fn tiling(grid: &Grid2D, length: f64, height: f64, axis: Axis) -> Result<Self> {
        if !(length > 0.0 && height > 0.0 && length.is_finite() && height.is_finite()) {
            return Err(Error::InvalidParameter(format!("mailbox size {length} x {height}")));
        }
        let along = grid.count(axis) as f64 * grid.pitch(axis);
        let across = grid.count(axis.other()) as f64 * grid.pitch(axis.other());
        // Tolerate rounding in the ratio of extents.
        let fit = |extent: f64, size: f64| (extent / size * (1.0 + 1e-9)).floor() as usize;
        let geom = Self {
            length,
            height,
            columns: fit(along, length),
            rows: fit(across, height),
            origin: (0.0, 0.0),
            axis,
        };
        geom.footprints(grid)?;
        Ok(geom)
    }

    pub fn count(&self) -> usize {
        self.columns * self.rows
    }

    /// Pixel footprints, with boundaries rounded to the nearest pixel edge
    /// so that adjacent mailboxes share edges and never overlap.
    pub fn footprints(&self, grid: &Grid2D) -> Result<Vec<Roi>> {
        if !(self.length > 0.0 && self.height > 0.0) || self.count() == 0 {
            return Err(Error::DegenerateGeometry(format!(
                "{} x {} mailboxes of {} x {} m",
                self.columns, self.rows, self.length, self.height
            )));
        }
        let (ox, oy) = self.origin;
        if !(ox >= 0.0 && oy >= 0.0) {
            return Err(Error::OutOfBounds(format!("mailbox origin ({ox}, {oy})")));
        }
        let (a_origin, c_origin) = match self.axis {
            Axis::Horizontal => (ox, oy),
            Axis::Vertical => (oy, ox),
        };
        let edges = |origin: f64, size: f64, n: usize, pitch: f64| -> Vec<usize> {
            (0..=n).map(|k| ((origin + k as f64 * size) / pitch).round() as usize).collect()
        };
        let along = edges(a_origin, self.length, self.columns, grid.pitch(self.axis));
        let across = edges(c_origin, self.height, self.rows, grid.pitch(self.axis.other()));
        let mut out = Vec::with_capacity(self.count());
        for r in 0..self.rows {
            for c in 0..self.columns {
                let (a0, a1, c0, c1) = (along[c], along[c + 1], across[r], across[r + 1]);
                let roi = match self.axis {
                    Axis::Horizontal => Roi::new(a0, c0, a1 - a0, c1 - c0),
                    Axis::Vertical => Roi::new(c0, a0, c1 - c0, a1 - a0),
                };
                roi.validate(grid).map_err(|_| {
                    Error::OutOfBounds(format!("mailbox {} footprint {roi:?} overflows the grid", out.len()))
                })?;
                out.push(roi);
            }
        }
        Ok(out)
    }
}

/// One bucket value per mailbox, in mailbox order.
pub fn mailbox_signals(field: &ScalarField2D, geom: &MailboxGeometry) -> Result<Vec<f64>> {
    geom.footprints(field.grid())?.iter().map(|roi| bucket(field, roi)).collect()
}

fn signals_on(field: &ScalarField2D, rois: &[Roi]) -> Vec<f64> {
    let area = field.grid().pixel_area();
    rois.iter().map(|roi| roi.indices(field.grid()).map(|i| field.values()[i]).sum::<f64>() * area).collect()
}

/// Position of the mask relative to the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcquisitionOrder {
    /// Mask, then sample, then bucket.
    StructuredIllumination,
    /// Sample, then mask in the sample's image plane, then bucket.
    StructuredDetection,
}

/// How the sample image at distance `R_S` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastModel {
    Tie(LaplacianMode),
    Fresnel,
    AttenuationOnly,
}

/// Everything about an acquisition except the sample and masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardSpec {
    pub order: AcquisitionOrder,
    /// Sample-to-image-plane distance `R_S`, metres.
    pub distance: f64,
    pub model: ContrastModel,
    /// Mask-to-sample distance for structured illumination. Zero applies
    /// the pattern directly; larger values propagate the mask as a thin
    /// amplitude screen first.
    pub mask_distance: f64,
}

/// Numerical guards raised during a forward sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GuardFlags {
    /// Largest count of negative pixels in any propagated image.
    pub negative_pixels: usize,
    /// Some Fresnel step under-sampled its kernel.
    pub undersampled: bool,
}

impl GuardFlags {
    fn absorb(&mut self, img: &PropagatedImage) {
        self.negative_pixels = self.negative_pixels.max(img.negative_pixels);
        self.undersampled |= img.undersampled;
    }

    pub fn any(&self) -> bool {
        self.negative_pixels > 0 || self.undersampled
    }
}

/// Bucket readings: `N` realizations by `M` mailboxes, with the scan
/// schedule entry of each realization.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSeries {
    mailboxes: usize,
    values: Vec<f64>,
    offsets: Vec<f64>,
    pattern_ids: Vec<usize>,
}

impl BucketSeries {
    pub fn new(
        mailboxes: usize,
        values: Vec<f64>,
        offsets: Vec<f64>,
        pattern_ids: Vec<usize>,
    ) -> Result<Self> {
        let n = offsets.len();
        if n == 0 || mailboxes == 0 {
            return Err(Error::Empty("bucket series"));
        }
        if pattern_ids.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: pattern_ids.len() });
        }
        if values.len() != n * mailboxes {
            return Err(Error::LengthMismatch { expected: n * mailboxes, found: values.len() });
        }
        if let Some(i) = values.iter().chain(&offsets).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { mailboxes, values, offsets, pattern_ids })
    }

    /// Number of realizations `N`.
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn mailboxes(&self) -> usize {
        self.mailboxes
    }

    pub fn get(&self, j: usize, m: usize) -> f64 {
        self.values[j * self.mailboxes + m]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.mailboxes..(j + 1) * self.mailboxes]
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..self.len()).map(|j| self.get(j, m)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn pattern_ids(&self) -> &[usize] {
        &self.pattern_ids
    }

    /// Multiplies every reading by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.mailboxes,
            self.values.iter().map(|v| v * c).collect(),
            self.offsets.clone(),
            self.pattern_ids.clone(),
        )
    }

    /// `j,offset_m,pattern_id,m0,m1,...` with shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,offset_m,pattern_id");
        for m in 0..self.mailboxes {
            let _ = write!(s, ",m{m}");
        }
        s.push('\n');
        for j in 0..self.len() {
            let _ = write!(s, "{j},{},{}", self.offsets[j], self.pattern_ids[j]);
            for v in self.row(j) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty bucket CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[..3] != ["j", "offset_m", "pattern_id"] {
            return Err(Error::Format(format!("bad bucket CSV header {header:?}")));
        }
        let mailboxes = cols.len() - 3;
        let (mut values, mut offsets, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for (row, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Format(format!("row {row}: {} fields", f.len())));
            }
            let bad = |what: &str| Error::Format(format!("row {row}: bad {what}"));
            if f[0].parse::<usize>().ok() != Some(row) {
                return Err(bad("index"));
            }
            offsets.push(f[1].parse::<f64>().map_err(|_| bad("offset"))?);
            ids.push(f[2].parse::<usize>().map_err(|_| bad("pattern id"))?);
            for v in &f[3..] {
                values.push(v.parse::<f64>().map_err(|_| bad("value"))?);
            }
        }
        Self::new(mailboxes, values, offsets, ids)
    }

    /// Binary form: header `GIB1 <n> <m>\n`, then per realization the
    /// offset (`f64`), pattern id (`u64`) and `m` readings (`f64`), all
    /// little-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("GIB1 {} {}\n", self.len(), self.mailboxes).into_bytes();
        for j in 0..self.len() {
            out.extend_from_slice(&self.offsets[j].to_le_bytes());
            out.extend_from_slice(&(self.pattern_ids[j] as u64).to_le_bytes());
            for v in self.row(j) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .take(64)
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("missing GIB1 header".into()))?;
        let header =
            std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("header is not ASCII".into()))?;
        let t: Vec<&str> = header.split_ascii_whitespace().collect();
        if t.len() != 3 || t[0] != "GIB1" {
            return Err(Error::Format(format!("bad header {header:?}")));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad count {s:?}")));
        let (n, m) = (parse(t[1])?, parse(t[2])?);
        let payload = &bytes[nl + 1..];
        let record = 8 * (m + 2);
        if Some(payload.len()) != n.checked_mul(record) {
            return Err(Error::Format(format!("payload of {} bytes for {n} x {m}", payload.len())));
        }
        let word = |c: &[u8]| <[u8; 8]>::try_from(c).expect("8-byte chunk");
        let (mut values, mut offsets, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for rec in payload.chunks_exact(record) {
            let mut words = rec.chunks_exact(8);
            offsets.push(f64::from_le_bytes(word(words.next().unwrap())));
            ids.push(u64::from_le_bytes(word(words.next().unwrap())) as usize);
            values.extend(words.map(|w| f64::from_le_bytes(word(w))));
        }
        Self::new(m, values, offsets, ids)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }
}

/// The sample image at `distance` under `model`, lit by `i_in`.
pub fn propagated_image(
    model: ContrastModel,
    material: &Material,
    t: &ThicknessMap,
    i_in: &ScalarField2D,
    distance: f64,
) -> Result<PropagatedImage> {
    SpectralOps::new(t.grid()).image(model, material, t, i_in, distance)
}

/// Structured detection on a precomputed image: each mask multiplies
/// `image` and every mailbox integrates the product.
pub fn detect(
    image: &ScalarField2D,
    masks: &[MaskRealization],
    geom: &MailboxGeometry,
) -> Result<BucketSeries> {
    if masks.is_empty() {
        return Err(Error::Empty("mask schedule"));
    }
    let rois = geom.footprints(image.grid())?;
    let rows: Vec<Vec<f64>> = masks
        .par_iter()
        .map(|mask| Ok(signals_on(&mask.pattern().zip_with(image, |a, b| a * b)?, &rois)))
        .collect::<Result<_>>()?;
    BucketSeries::new(
        rois.len(),
        rows.concat(),
        masks.iter().map(|m| m.scan_offset()).collect(),
        masks.iter().map(|m| m.pattern_id()).collect(),
    )
}

/// Simulates one bucket row per mask realization.
///
/// Realizations are processed in parallel; each row is reduced in a fixed
/// order, so results do not depend on scheduling.
pub fn forward(
    spec: &ForwardSpec,
    material: &Material,
    t: &ThicknessMap,
    masks: &[MaskRealization],
    i_in: &ScalarField2D,
    geom: &MailboxGeometry,
) -> Result<(BucketSeries, GuardFlags)> {
    if masks.is_empty() {
        return Err(Error::Empty("mask schedule"));
    }
    let grid = *t.grid();
    grid.ensure_same(i_in.grid(), "forward: incident intensity")?;
    for m in masks {
        grid.ensure_same(m.pattern().grid(), "forward: mask")?;
    }
    if !(spec.distance.is_finite() && spec.distance >= 0.0) {
        return Err(Error::InvalidParameter(format!("R_S = {}", spec.distance)));
    }
    if !(spec.mask_distance.is_finite() && spec.mask_distance >= 0.0) {
        return Err(Error::InvalidParameter(format!("R_M = {}", spec.mask_distance)));
    }
    let rois = geom.footprints(&grid)?;
    let ops = SpectralOps::new(&grid);
    let image = |incident: &ScalarField2D| ops.image(spec.model, material, t, incident, spec.distance);

    let mut guards = GuardFlags::default();
    let rows: Vec<(Vec<f64>, GuardFlags)> = match spec.order {
        AcquisitionOrder::StructuredIllumination => masks
            .par_iter()
            .map(|mask| {
                let mut g = GuardFlags::default();
                let incident = if spec.mask_distance > 0.0 {
                    let p =
                        propagate_screen(mask.pattern(), i_in, material.wavelength(), spec.mask_distance)?;
                    g.absorb(&p);
                    p.field
                } else {
                    illuminate(mask, i_in)?
                };
                let img = image(&incident)?;
                g.absorb(&img);
                Ok((signals_on(&img.field, &rois), g))
            })
            .collect::<Result<_>>()?,
        AcquisitionOrder::StructuredDetection => {
            let img = image(i_in)?;
            guards.absorb(&img);
            return Ok((detect(&img.field, masks, geom)?, guards));
        }
    };
    let mut values = Vec::with_capacity(masks.len() * rois.len());
    for (row, g) in rows {
        values.extend(row);
        guards.negative_pixels = guards.negative_pixels.max(g.negative_pixels);
        guards.undersampled |= g.undersampled;
    }
    let series = BucketSeries::new(
        rois.len(),
        values,
        masks.iter().map(|m| m.scan_offset()).collect(),
        masks.iter().map(|m| m.pattern_id()).collect(),
    )?;
    Ok((series, guards))
}

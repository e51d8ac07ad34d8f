//! Materials and projected-thickness phantoms.
//!
//! A phantom is a homogeneous object described by its projected thickness
//! `t(x, y)` in metres. Together with a [`Material`] it determines the
//! optical density `D = mu * t` and the phase shift `phi = -(2 pi / lambda) delta t`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fields::{gaussian_smooth, Axis, Boundary, Grid2D, ScalarField2D};
use crate::rng;

/// `h * c` in keV metres, for converting photon energy to wavelength.
pub const HC_KEV_M: f64 = 1.239_841_93e-9;

/// Wavelength in metres of a photon of `energy_kev`.
pub fn wavelength_from_kev(energy_kev: f64) -> Result<f64> {
    if !(energy_kev.is_finite() && energy_kev > 0.0) {
        return Err(Error::InvalidParameter(format!("photon energy {energy_kev} keV")));
    }
    Ok(HC_KEV_M / energy_kev)
}

/// Complex refractive index `n = 1 - delta + i beta` at one wavelength.
///
/// Constants are always supplied by the caller; the crate carries no
/// tabulated materials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    delta: f64,
    beta: f64,
    wavelength: f64,
}

impl Material {
    pub fn new(delta: f64, beta: f64, wavelength: f64) -> Result<Self> {
        let ok = delta.is_finite()
            && delta >= 0.0
            && beta.is_finite()
            && beta >= 0.0
            && wavelength.is_finite()
            && wavelength > 0.0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "material needs delta >= 0, beta >= 0, wavelength > 0; got ({delta}, {beta}, {wavelength})"
            )));
        }
        Ok(Self { delta, beta, wavelength })
    }

    pub fn from_energy_kev(delta: f64, beta: f64, energy_kev: f64) -> Result<Self> {
        Self::new(delta, beta, wavelength_from_kev(energy_kev)?)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Linear attenuation coefficient `4 pi beta / lambda` in 1/m.
    pub fn mu(&self) -> f64 {
        4.0 * PI * self.beta / self.wavelength
    }
}

/// Projected thickness in metres; never negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessMap(ScalarField2D);

impl ThicknessMap {
    pub fn new(field: ScalarField2D) -> Result<Self> {
        if let Some(i) = field.values().iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidParameter(format!("negative thickness at index {i}")));
        }
        Ok(Self(field))
    }

    /// An empty sample.
    pub fn zeros(grid: Grid2D) -> Self {
        Self(ScalarField2D::zeros(grid))
    }

    pub fn field(&self) -> &ScalarField2D {
        &self.0
    }

    pub fn grid(&self) -> &Grid2D {
        self.0.grid()
    }

    pub fn into_field(self) -> ScalarField2D {
        self.0
    }

    /// Zeroes a border of `margin` pixels on every side, giving the map
    /// compact support away from the grid edges.
    pub fn with_margin(self, margin: usize) -> Self {
        let g = *self.grid();
        let mut values = self.0.into_values();
        for y in 0..g.ny() {
            for x in 0..g.nx() {
                if x < margin || y < margin || x + margin >= g.nx() || y + margin >= g.ny() {
                    values[g.index(x, y)] = 0.0;
                }
            }
        }
        Self(ScalarField2D::new(g, values).expect("zeroing keeps values finite"))
    }

    /// True when every pixel within `margin` of an edge is zero.
    pub fn has_margin(&self, margin: usize) -> bool {
        let g = self.grid();
        (0..g.ny()).all(|y| {
            (0..g.nx()).all(|x| {
                let border = x < margin || y < margin || x + margin >= g.nx() || y + margin >= g.ny();
                !border || self.0.get(x, y) == 0.0
            })
        })
    }
}

/// A straight step of height `thickness` at `edge_position` along `axis`.
///
/// Samples at coordinate `i * pitch >= edge_position` are inside the
/// material. With `smoothing_sigma > 0` the step becomes the error-function
/// profile of a Gaussian-blurred step, so the sample sitting exactly on the
/// edge has value `thickness / 2`.
pub fn edge_phantom(
    grid: &Grid2D,
    thickness: f64,
    axis: Axis,
    edge_position: f64,
    smoothing_sigma: f64,
) -> Result<ThicknessMap> {
    if !(thickness.is_finite() && thickness >= 0.0) {
        return Err(Error::InvalidParameter(format!("edge thickness {thickness}")));
    }
    if !(smoothing_sigma.is_finite() && smoothing_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("smoothing sigma {smoothing_sigma}")));
    }
    let pitch = grid.pitch(axis);
    let extent = grid.count(axis) as f64 * pitch;
    if !(0.0..=extent).contains(&edge_position) {
        return Err(Error::OutOfBounds(format!("edge at {edge_position} m outside [0, {extent}]")));
    }
    // Compare in pixel units so an edge given as a whole number of pixels
    // is not moved by rounding of `i * pitch`.
    let edge_px = edge_position / pitch;
    let profile = |i: usize| {
        let s = i as f64 * pitch - edge_position;
        if smoothing_sigma == 0.0 {
            if i as f64 >= edge_px - 1e-9 {
                thickness
            } else {
                0.0
            }
        } else {
            0.5 * thickness * (1.0 + libm::erf(s / (smoothing_sigma * std::f64::consts::SQRT_2)))
        }
    };
    let field = ScalarField2D::from_fn(*grid, |x, y| match axis {
        Axis::Horizontal => profile(x),
        Axis::Vertical => profile(y),
    })?;
    ThicknessMap::new(field)
}

/// Parameters of the cellular "foam lamella" phantom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LamellaSpec {
    /// Typical pore diameter; the number of cells is `area / mean_pore^2`.
    pub mean_pore: f64,
    /// Projected thickness assigned to wall pixels.
    pub wall_thickness: f64,
    /// Lateral width of the walls.
    pub wall_width: f64,
    /// Optional Gaussian blur of the wall profile, 0 for sharp walls.
    pub smoothing_sigma: f64,
    /// Zeroed border in pixels.
    pub margin: usize,
}

impl LamellaSpec {
    /// Sharp walls, no margin, wall width a tenth of the pore size.
    pub fn new(mean_pore: f64, wall_thickness: f64) -> Self {
        Self { mean_pore, wall_thickness, wall_width: mean_pore / 10.0, smoothing_sigma: 0.0, margin: 0 }
    }
}

/// Voronoi-wall thickness map: pores of zero thickness separated by walls
/// of `wall_thickness`.
///
/// Cell centres come from the counter-based generator in this crate, so the
/// unsmoothed map is a pure function of `(grid, seed, spec)` built only from
/// correctly rounded IEEE operations. Smoothing uses `libm` kernels.
pub fn lamella_phantom(grid: &Grid2D, seed: u64, spec: &LamellaSpec) -> Result<ThicknessMap> {
    let LamellaSpec { mean_pore, wall_thickness, wall_width, smoothing_sigma, margin } = *spec;
    if !(mean_pore.is_finite() && mean_pore > 0.0) {
        return Err(Error::InvalidParameter(format!("mean pore {mean_pore}")));
    }
    if !(wall_thickness.is_finite() && wall_thickness >= 0.0) {
        return Err(Error::InvalidParameter(format!("wall thickness {wall_thickness}")));
    }
    if !(wall_width.is_finite() && wall_width > 0.0) {
        return Err(Error::InvalidParameter(format!("wall width {wall_width}")));
    }
    let (w, h) = (grid.extent_x(), grid.extent_y());
    if mean_pore > w.min(h) {
        return Err(Error::DegenerateGeometry(format!(
            "pore size {mean_pore} m exceeds grid extent {} m",
            w.min(h)
        )));
    }
    let cells = ((w * h) / (mean_pore * mean_pore)).round().max(2.0) as usize;
    let centres: Vec<(f64, f64)> = (0..cells as u64)
        .map(|i| (rng::uniform(seed, 2 * i) * w, rng::uniform(seed, 2 * i + 1) * h))
        .collect();

    // Walls are cleared over the margin plus the blur reach, so the
    // smoothed map falls to exactly zero before the border instead of
    // being cut off there.
    let reach = |pitch: f64| {
        if margin > 0 && smoothing_sigma > 0.0 {
            (4.0 * smoothing_sigma / pitch).ceil() as usize
        } else {
            0
        }
    };
    let clear_x = margin + reach(grid.pitch_x());
    let clear_y = margin + reach(grid.pitch_y());
    let half_width = 0.5 * wall_width;
    let field = ScalarField2D::from_fn(*grid, |ix, iy| {
        if ix < clear_x || iy < clear_y || ix + clear_x >= grid.nx() || iy + clear_y >= grid.ny() {
            return 0.0;
        }
        let (px, py) = (ix as f64 * grid.pitch_x(), iy as f64 * grid.pitch_y());
        let (mut best, mut second) = ((f64::INFINITY, 0usize), (f64::INFINITY, 0usize));
        for (k, &(cx, cy)) in centres.iter().enumerate() {
            let d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
            if d2 < best.0 {
                second = best;
                best = (d2, k);
            } else if d2 < second.0 {
                second = (d2, k);
            }
        }
        let (a, b) = (centres[best.1], centres[second.1]);
        let sep = ((a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1)).sqrt();
        // Distance from the pixel to the bisector of its two nearest centres.
        let to_wall = (second.0 - best.0) / (2.0 * sep);
        if to_wall < half_width {
            wall_thickness
        } else {
            0.0
        }
    })?;
    let field = if smoothing_sigma > 0.0 {
        gaussian_smooth(&field, smoothing_sigma, smoothing_sigma, Boundary::Clamp)?
    } else {
        field
    };
    Ok(ThicknessMap::new(field)?.with_margin(margin))
}

/// Optical density `D = (4 pi / lambda) beta t = mu t`.
pub fn optical_density(material: &Material, t: &ThicknessMap) -> ScalarField2D {
    let mu = material.mu();
    t.field().map(|v| mu * v).expect("finite thickness gives finite density")
}

/// Phase shift `phi = -(2 pi / lambda) delta t` in radians.
pub fn phase_shift(material: &Material, t: &ThicknessMap) -> ScalarField2D {
    let k_delta = 2.0 * PI / material.wavelength() * material.delta();
    t.field().map(|v| -k_delta * v).expect("finite thickness gives finite phase")
}

//! Contrast formation in the projection approximation.
//!
//! * [`contact_image`]: Beer-Lambert attenuation, `exp(-mu t) I_in`.
//! * [`tie_image`]: the near-field transport-of-intensity operator
//!   `(1 - (R delta / mu) laplacian) [exp(-mu t) I_in]`.
//! * [`fresnel_oracle`]: full scalar propagation of the exit wave with the
//!   paraxial angular-spectrum kernel, used to validate the TIE.
//!
//! Sign conventions: the refractive index is `n = 1 - delta + i beta`, the
//! object imprints `phi = -(2 pi / lambda) delta t`, and free space
//! propagates spatial frequency `(u, v)` by `exp(-i pi lambda R (u^2 + v^2))`
//! under the forward FFT `exp(-2 pi i k n / N)`. With these choices a thin
//! ridge of material images as bright-dark-bright fringes, and the Fresnel
//! result converges to the TIE image as `R -> 0`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::acquisition::ContrastModel;
use crate::error::{Error, Result};
use crate::fft::{frequency, Fft2};
use crate::fields::{Grid2D, ScalarField2D};
use crate::phantom::{Material, ThicknessMap};

/// How the transverse Laplacian is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LaplacianMode {
    /// Multiplication by `-(kx^2 + ky^2)` in Fourier space; periodic grid.
    #[default]
    SpectralPeriodic,
    /// 5-point stencil with zero-flux (mirrored) edges.
    FiniteDifferenceNeumann,
}

/// Propagation distance and Laplacian evaluation for the TIE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSpec {
    distance: f64,
    pub laplacian_mode: LaplacianMode,
}

impl PropagationSpec {
    pub fn new(distance: f64, laplacian_mode: LaplacianMode) -> Result<Self> {
        if !(distance.is_finite() && distance >= 0.0) {
            return Err(Error::InvalidParameter(format!("propagation distance {distance}")));
        }
        Ok(Self { distance, laplacian_mode })
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }
}

/// Characteristic length over which the object changes appreciably.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScale(f64);

impl FeatureScale {
    pub fn new(d: f64) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidParameter(format!("feature scale {d}")));
        }
        Ok(Self(d))
    }

    pub fn get(&self) -> f64 {
        self.0
    }
}

/// A propagated intensity plus the numerical guards raised computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedImage {
    pub field: ScalarField2D,
    /// Pixels with negative intensity. The TIE is linear and can overshoot
    /// below zero; values are kept, never clipped.
    pub negative_pixels: usize,
    /// The grid under-samples the Fresnel kernel (`pitch^2 < lambda R / n`).
    pub undersampled: bool,
}

/// Result of [`near_field_check`]; `ratio = R lambda / d^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NearField {
    Ok { ratio: f64 },
    Violated { ratio: f64 },
}

impl NearField {
    pub fn is_ok(&self) -> bool {
        matches!(self, NearField::Ok { .. })
    }

    pub fn ratio(&self) -> f64 {
        match *self {
            NearField::Ok { ratio } | NearField::Violated { ratio } => ratio,
        }
    }
}

/// Near-field validity `R <= d^2 / lambda` (boundary inclusive).
pub fn near_field_check(distance: f64, scale: FeatureScale, wavelength: f64) -> Result<NearField> {
    if !(distance.is_finite() && distance >= 0.0 && wavelength.is_finite() && wavelength > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "near-field check needs R >= 0 and lambda > 0, got ({distance}, {wavelength})"
        )));
    }
    let d2 = scale.get() * scale.get();
    let ratio = distance * wavelength / d2;
    Ok(if distance * wavelength <= d2 { NearField::Ok { ratio } } else { NearField::Violated { ratio } })
}

/// `exp(-mu t) I_in`.
pub fn contact_image(material: &Material, t: &ThicknessMap, i_in: &ScalarField2D) -> Result<ScalarField2D> {
    let mu = material.mu();
    t.field().zip_with(i_in, |t, i| (-mu * t).exp() * i)
}

/// Near-field phase-contrast image from the transport-of-intensity equation.
///
/// At `R = 0` this is exactly [`contact_image`]. In spectral mode the
/// Laplacian term has zero mean, so the image mean equals the contact mean.
pub fn tie_image(
    material: &Material,
    t: &ThicknessMap,
    i_in: &ScalarField2D,
    prop: &PropagationSpec,
) -> Result<PropagatedImage> {
    let contact = contact_image(material, t, i_in)?;
    if prop.distance() == 0.0 {
        return Ok(finish(contact, false));
    }
    let mu = material.mu();
    if mu == 0.0 {
        return Err(Error::PurePhase);
    }
    let lap = laplacian(&contact, prop.laplacian_mode)?;
    let coeff = prop.distance() * material.delta() / mu;
    let field = contact.zip_with(&lap, |c, l| c - coeff * l)?;
    Ok(finish(field, false))
}

fn finish(field: ScalarField2D, undersampled: bool) -> PropagatedImage {
    let negative_pixels = field.values().iter().filter(|&&v| v < 0.0).count();
    PropagatedImage { field, negative_pixels, undersampled }
}

/// Transverse Laplacian scaled by the physical pitch.
pub fn laplacian(field: &ScalarField2D, mode: LaplacianMode) -> Result<ScalarField2D> {
    match mode {
        LaplacianMode::SpectralPeriodic => Ok(SpectralOps::new(field.grid()).laplacian(field)),
        LaplacianMode::FiniteDifferenceNeumann => fd_laplacian(field),
    }
}

fn fd_laplacian(field: &ScalarField2D) -> Result<ScalarField2D> {
    let g = field.grid();
    let (nx, ny) = (g.nx(), g.ny());
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidGrid(format!(
            "finite-difference Laplacian needs at least 3x3 pixels, got {nx}x{ny}"
        )));
    }
    let (ix2, iy2) = (1.0 / (g.pitch_x() * g.pitch_x()), 1.0 / (g.pitch_y() * g.pitch_y()));
    ScalarField2D::from_fn(*g, |x, y| {
        let c = field.get(x, y);
        // Mirror about the half-pixel boundary: the ghost sample equals the
        // edge sample, giving zero flux through the border.
        let l = field.get(x.saturating_sub(1), y);
        let r = field.get((x + 1).min(nx - 1), y);
        let d = field.get(x, y.saturating_sub(1));
        let u = field.get(x, (y + 1).min(ny - 1));
        (l - 2.0 * c + r) * ix2 + (d - 2.0 * c + u) * iy2
    })
}

/// FFT plan and frequency tables for one grid, reusable across many
/// realizations. Immutable after construction.
pub(crate) struct SpectralOps {
    grid: Grid2D,
    plan: Fft2,
    /// `(2 pi)^2 (u^2 + v^2)` per frequency bin.
    k2: Vec<f64>,
    /// `u^2 + v^2` per frequency bin.
    f2: Vec<f64>,
}

impl SpectralOps {
    pub(crate) fn new(grid: &Grid2D) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let fx: Vec<f64> = (0..nx).map(|i| frequency(i, nx, grid.pitch_x())).collect();
        let fy: Vec<f64> = (0..ny).map(|i| frequency(i, ny, grid.pitch_y())).collect();
        let mut f2 = Vec::with_capacity(nx * ny);
        for v in &fy {
            for u in &fx {
                f2.push(u * u + v * v);
            }
        }
        let k2 = f2.iter().map(|f| 4.0 * PI * PI * f).collect();
        Self { grid: *grid, plan: Fft2::new(nx, ny), k2, f2 }
    }

    pub(crate) fn laplacian(&self, field: &ScalarField2D) -> ScalarField2D {
        let mut data: Vec<Complex64> = field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plan.forward(&mut data);
        for (c, k2) in data.iter_mut().zip(&self.k2) {
            *c *= -k2;
        }
        self.plan.inverse(&mut data);
        ScalarField2D::new(self.grid, data.iter().map(|c| c.re).collect())
            .expect("Laplacian of a finite field is finite")
    }

    /// In-place free-space propagation of a complex wave over `distance`.
    pub(crate) fn propagate(&self, wave: &mut [Complex64], wavelength: f64, distance: f64) {
        if distance == 0.0 {
            return;
        }
        self.plan.forward(wave);
        let a = -PI * wavelength * distance;
        for (c, f2) in wave.iter_mut().zip(&self.f2) {
            *c *= Complex64::from_polar(1.0, a * f2);
        }
        self.plan.inverse(wave);
    }

    pub(crate) fn tie(
        &self,
        material: &Material,
        t: &ThicknessMap,
        i_in: &ScalarField2D,
        prop: &PropagationSpec,
    ) -> Result<PropagatedImage> {
        match prop.laplacian_mode {
            LaplacianMode::SpectralPeriodic if prop.distance() > 0.0 => {
                let contact = contact_image(material, t, i_in)?;
                let mu = material.mu();
                if mu == 0.0 {
                    return Err(Error::PurePhase);
                }
                let coeff = prop.distance() * material.delta() / mu;
                let lap = self.laplacian(&contact);
                Ok(finish(contact.zip_with(&lap, |c, l| c - coeff * l)?, false))
            }
            _ => tie_image(material, t, i_in, prop),
        }
    }

    pub(crate) fn image(
        &self,
        model: ContrastModel,
        material: &Material,
        t: &ThicknessMap,
        i_in: &ScalarField2D,
        distance: f64,
    ) -> Result<PropagatedImage> {
        match model {
            ContrastModel::AttenuationOnly => Ok(finish(contact_image(material, t, i_in)?, false)),
            ContrastModel::Tie(mode) => self.tie(material, t, i_in, &PropagationSpec::new(distance, mode)?),
            ContrastModel::Fresnel => self.fresnel(material, t, i_in, distance),
        }
    }

    pub(crate) fn fresnel(
        &self,
        material: &Material,
        t: &ThicknessMap,
        i_in: &ScalarField2D,
        distance: f64,
    ) -> Result<PropagatedImage> {
        t.grid().ensure_same(i_in.grid(), "fresnel_oracle")?;
        t.grid().ensure_same(&self.grid, "fresnel_oracle plan")?;
        if !(distance.is_finite() && distance >= 0.0) {
            return Err(Error::InvalidParameter(format!("propagation distance {distance}")));
        }
        let k = 2.0 * PI / material.wavelength();
        let (k_delta, half_mu) = (k * material.delta(), 0.5 * material.mu());
        let mut wave = Vec::with_capacity(self.grid.len());
        for (&ti, &ii) in t.field().values().iter().zip(i_in.values()) {
            if ii < 0.0 {
                return Err(Error::InvalidParameter(format!("negative incident intensity {ii}")));
            }
            let amplitude = ii.sqrt() * (-half_mu * ti).exp();
            wave.push(Complex64::from_polar(amplitude, -k_delta * ti));
        }
        self.propagate(&mut wave, material.wavelength(), distance);
        let field = ScalarField2D::new(self.grid, wave.iter().map(|c| c.norm_sqr()).collect())?;
        Ok(finish(field, !fresnel_sampling_ok(&self.grid, material.wavelength(), distance)))
    }
}

/// Sampling guard for the angular-spectrum kernel: `pitch^2 >= lambda R / n`
/// on both axes.
pub fn fresnel_sampling_ok(grid: &Grid2D, wavelength: f64, distance: f64) -> bool {
    let lr = wavelength * distance;
    grid.pitch_x() * grid.pitch_x() >= lr / grid.nx() as f64
        && grid.pitch_y() * grid.pitch_y() >= lr / grid.ny() as f64
}

/// Intensity after free-space propagation of the exit wave
/// `sqrt(I_in) exp(i phi - mu t / 2)` over `distance` on a periodic grid.
///
/// Independent of the TIE: no Laplacian and no division by `mu`, so it also
/// handles pure-phase objects. When the grid under-samples the kernel the
/// result is still returned with `undersampled` set.
pub fn fresnel_oracle(
    material: &Material,
    t: &ThicknessMap,
    i_in: &ScalarField2D,
    distance: f64,
) -> Result<PropagatedImage> {
    SpectralOps::new(t.grid()).fresnel(material, t, i_in, distance)
}

/// Intensity pattern of a thin amplitude screen with intensity transmission
/// `transmission`, lit by `i_in` and observed `distance` downstream.
pub fn propagate_screen(
    transmission: &ScalarField2D,
    i_in: &ScalarField2D,
    wavelength: f64,
    distance: f64,
) -> Result<PropagatedImage> {
    transmission.grid().ensure_same(i_in.grid(), "propagate_screen")?;
    if !(wavelength.is_finite() && wavelength > 0.0 && distance.is_finite() && distance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "screen propagation needs lambda > 0 and R >= 0, got ({wavelength}, {distance})"
        )));
    }
    let grid = *transmission.grid();
    let mut wave = Vec::with_capacity(grid.len());
    for (&tr, &ii) in transmission.values().iter().zip(i_in.values()) {
        if tr < 0.0 || ii < 0.0 {
            return Err(Error::InvalidParameter("negative transmission or intensity".into()));
        }
        wave.push(Complex64::new((tr * ii).sqrt(), 0.0));
    }
    SpectralOps::new(&grid).propagate(&mut wave, wavelength, distance);
    let field = ScalarField2D::new(grid, wave.iter().map(|c| c.norm_sqr()).collect())?;
    Ok(finish(field, !fresnel_sampling_ok(&grid, wavelength, distance)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{gaussian_smooth, Axis, Boundary};
    use crate::phantom::{edge_phantom, lamella_phantom, LamellaSpec};

    fn al() -> Material {
        Material::from_energy_kev(1.51e-6, 5.6e-9, 19.0).unwrap()
    }

    fn ones(g: Grid2D) -> ScalarField2D {
        ScalarField2D::constant(g, 1.0).unwrap()
    }

    fn max_abs_diff(a: &ScalarField2D, b: &ScalarField2D) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn contact_of_empty_sample_is_incident() {
        let g = Grid2D::square(8, 8, 1e-6).unwrap();
        let i_in = ScalarField2D::from_fn(g, |x, y| 1.0 + (x * y) as f64).unwrap();
        assert_eq!(contact_image(&al(), &ThicknessMap::zeros(g), &i_in).unwrap(), i_in);
    }

    #[test]
    fn contact_of_unit_optical_depth() {
        let g = Grid2D::square(4, 4, 1e-6).unwrap();
        let m = al();
        let t = ThicknessMap::new(ScalarField2D::constant(g, 1.0 / m.mu()).unwrap()).unwrap();
        let c = contact_image(&m, &t, &ones(g)).unwrap();
        assert!(c.values().iter().all(|v| (v - 0.367_879_441_171_442_3).abs() < 1e-15));
    }

    #[test]
    fn contact_rejects_grid_mismatch() {
        let t = ThicknessMap::zeros(Grid2D::square(4, 4, 1e-6).unwrap());
        let i_in = ones(Grid2D::square(4, 5, 1e-6).unwrap());
        assert!(matches!(contact_image(&al(), &t, &i_in), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = Grid2D::square(9, 7, 1.0).unwrap();
        let c = ScalarField2D::constant(g, 3.0).unwrap();
        for mode in [LaplacianMode::SpectralPeriodic, LaplacianMode::FiniteDifferenceNeumann] {
            let l = laplacian(&c, mode).unwrap();
            assert!(l.values().iter().all(|v| v.abs() < 1e-12), "{mode:?}");
        }
    }

    #[test]
    fn spectral_laplacian_eigenfunction() {
        let g = Grid2D::new(64, 16, 2e-6, 3e-6).unwrap();
        let len = g.extent_x();
        let f = ScalarField2D::from_fn(g, |x, _| (2.0 * PI * x as f64 * g.pitch_x() / len).sin()).unwrap();
        let l = laplacian(&f, LaplacianMode::SpectralPeriodic).unwrap();
        let k2 = (2.0 * PI / len).powi(2);
        for (a, b) in l.values().iter().zip(f.values()) {
            assert!((a + k2 * b).abs() <= 1e-10 * k2);
        }
    }

    #[test]
    fn fd_laplacian_needs_three_pixels() {
        let g = Grid2D::square(2, 5, 1e-6).unwrap();
        assert!(laplacian(&ones(g), LaplacianMode::FiniteDifferenceNeumann).is_err());
        assert!(laplacian(&ones(g), LaplacianMode::SpectralPeriodic).is_ok());
    }

    // Smooth random field: white noise from the crate generator blurred on a
    // periodic grid. The 5-point stencil has truncation error (k h)^2 / 12,
    // so agreement is ~5% at a 2-pixel blur and within 1% from 6 pixels.
    fn fd_vs_spectral(sigma_px: f64) -> f64 {
        let g = Grid2D::square(128, 128, 1e-6).unwrap();
        let noise = ScalarField2D::from_fn(g, |x, y| crate::rng::normal(11, (y * 128 + x) as u64)).unwrap();
        let s = sigma_px * 1e-6;
        let f = gaussian_smooth(&noise, s, s, Boundary::Wrap).unwrap();
        let sp = laplacian(&f, LaplacianMode::SpectralPeriodic).unwrap();
        let fd = laplacian(&f, LaplacianMode::FiniteDifferenceNeumann).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for y in 8..120 {
            for x in 8..120 {
                num += (sp.get(x, y) - fd.get(x, y)).powi(2);
                den += sp.get(x, y).powi(2);
            }
        }
        (num / den).sqrt()
    }

    #[test]
    fn fd_and_spectral_agree_in_interior() {
        let two = fd_vs_spectral(2.0);
        assert!(two < 0.06, "2 px blur: {two}");
        let six = fd_vs_spectral(6.0);
        assert!(six < 0.01, "6 px blur: {six}");
    }

    #[test]
    fn tie_at_zero_distance_is_contact() {
        let g = Grid2D::square(32, 8, 1e-6).unwrap();
        let t = edge_phantom(&g, 10e-6, Axis::Horizontal, 16e-6, 2e-6).unwrap();
        let prop = PropagationSpec::new(0.0, LaplacianMode::SpectralPeriodic).unwrap();
        let img = tie_image(&al(), &t, &ones(g), &prop).unwrap();
        assert_eq!(img.field, contact_image(&al(), &t, &ones(g)).unwrap());
    }

    #[test]
    fn tie_of_uniform_slab_is_contact() {
        let g = Grid2D::square(16, 16, 1e-6).unwrap();
        let t = ThicknessMap::new(ScalarField2D::constant(g, 30e-6).unwrap()).unwrap();
        let prop = PropagationSpec::new(2.0, LaplacianMode::SpectralPeriodic).unwrap();
        let img = tie_image(&al(), &t, &ones(g), &prop).unwrap();
        let c = contact_image(&al(), &t, &ones(g)).unwrap();
        assert!(max_abs_diff(&img.field, &c) < 1e-14);
    }

    #[test]
    fn tie_rejects_pure_phase_objects() {
        let g = Grid2D::square(8, 8, 1e-6).unwrap();
        let m = Material::new(1e-6, 0.0, 1e-10).unwrap();
        let t = ThicknessMap::zeros(g);
        let prop = PropagationSpec::new(1.0, LaplacianMode::SpectralPeriodic).unwrap();
        assert!(matches!(tie_image(&m, &t, &ones(g), &prop), Err(Error::PurePhase)));
        let at_contact = PropagationSpec::new(0.0, LaplacianMode::SpectralPeriodic).unwrap();
        assert!(tie_image(&m, &t, &ones(g), &at_contact).is_ok());
    }

    fn smooth_edge(g: &Grid2D) -> ThicknessMap {
        edge_phantom(g, 20e-6, Axis::Horizontal, 0.5 * g.extent_x(), 6e-6).unwrap()
    }

    #[test]
    fn tie_conserves_mean_and_shows_fringes() {
        let g = Grid2D::square(256, 4, 1e-6).unwrap();
        let t = smooth_edge(&g);
        let m = al();
        let c = contact_image(&m, &t, &ones(g)).unwrap();
        let prop = PropagationSpec::new(0.5, LaplacianMode::SpectralPeriodic).unwrap();
        let img = tie_image(&m, &t, &ones(g), &prop).unwrap();
        assert!(((img.field.mean() - c.mean()) / c.mean()).abs() <= 1e-10);

        // Around the edge at x = 128 the image overshoots the local contact
        // level on the thin side and undershoots it on the thick side.
        let row = img.field.row(0);
        let crow = c.row(0);
        let over = (100..128).map(|x| row[x] - crow[x]).fold(f64::MIN, f64::max);
        let under = (128..156).map(|x| row[x] - crow[x]).fold(f64::MAX, f64::min);
        assert!(over > 1e-3 && under < -1e-3, "over {over}, under {under}");
        assert!((100..128).any(|x| row[x] > 1.0));
    }

    #[test]
    fn tie_is_linear_in_distance() {
        let g = Grid2D::square(64, 64, 2e-6).unwrap();
        let spec = LamellaSpec { smoothing_sigma: 4e-6, margin: 16, ..LamellaSpec::new(4e-5, 2e-5) };
        let t = lamella_phantom(&g, 5, &spec).unwrap();
        let m = al();
        let i_in = ones(g);
        let c = contact_image(&m, &t, &i_in).unwrap();
        let tie = |r: f64| {
            let p = PropagationSpec::new(r, LaplacianMode::SpectralPeriodic).unwrap();
            tie_image(&m, &t, &i_in, &p).unwrap().field
        };
        let (a, b, ab) = (tie(0.3), tie(0.45), tie(0.75));
        for i in 0..g.len() {
            let lhs = a.values()[i] + b.values()[i] - c.values()[i];
            assert!((lhs - ab.values()[i]).abs() <= 1e-12 * ab.values()[i].abs().max(1.0));
        }
    }

    #[test]
    fn tie_keeps_negative_values_and_flags_them() {
        let g = Grid2D::square(64, 4, 1e-6).unwrap();
        let t = edge_phantom(&g, 200e-6, Axis::Horizontal, 32e-6, 1e-6).unwrap();
        let prop = PropagationSpec::new(50.0, LaplacianMode::SpectralPeriodic).unwrap();
        let img = tie_image(&al(), &t, &ones(g), &prop).unwrap();
        assert!(img.negative_pixels > 0);
        assert_eq!(img.negative_pixels, img.field.values().iter().filter(|&&v| v < 0.0).count());
    }

    #[test]
    fn fresnel_at_zero_distance_is_contact() {
        let g = Grid2D::square(64, 8, 1e-6).unwrap();
        let t = smooth_edge(&g);
        let i_in = ScalarField2D::from_fn(g, |x, _| 1.0 + 0.1 * (x % 5) as f64).unwrap();
        let f = fresnel_oracle(&al(), &t, &i_in, 0.0).unwrap();
        let c = contact_image(&al(), &t, &i_in).unwrap();
        assert!(max_abs_diff(&f.field, &c) <= 1e-12);
    }

    #[test]
    fn fresnel_leaves_plane_wave_unchanged() {
        let g = Grid2D::square(32, 32, 1e-6).unwrap();
        let f = fresnel_oracle(&al(), &ThicknessMap::zeros(g), &ones(g), 3.0).unwrap();
        assert!(f.field.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fresnel_conserves_energy() {
        let g = Grid2D::square(64, 64, 1e-6).unwrap();
        let spec = LamellaSpec { smoothing_sigma: 1e-6, margin: 4, ..LamellaSpec::new(2e-5, 5e-5) };
        let t = lamella_phantom(&g, 9, &spec).unwrap();
        let c = contact_image(&al(), &t, &ones(g)).unwrap();
        let f = fresnel_oracle(&al(), &t, &ones(g), 0.5).unwrap();
        assert!(((f.field.mean() - c.mean()) / c.mean()).abs() <= 1e-10);
    }

    #[test]
    fn fresnel_converges_to_tie() {
        // Weak phase edge: the TIE is the first-order expansion of the
        // Fresnel propagator, so their gap shrinks roughly as R^2.
        let g = Grid2D::square(512, 32, 1e-6).unwrap();
        // A plateau with two smooth edges, so the periodic grid has no step.
        let plateau = ScalarField2D::from_fn(g, |x, _| {
            let s = 6e-6 * std::f64::consts::SQRT_2;
            let (a, b) = ((x as f64 - 128.0) * 1e-6 / s, (384.0 - x as f64) * 1e-6 / s);
            5e-6 * (libm::erf(a) + libm::erf(b))
        })
        .unwrap();
        let t = ThicknessMap::new(plateau).unwrap();
        let m = al();
        let gap = |r: f64| {
            let p = PropagationSpec::new(r, LaplacianMode::SpectralPeriodic).unwrap();
            let tie = tie_image(&m, &t, &ones(g), &p).unwrap();
            let fr = fresnel_oracle(&m, &t, &ones(g), r).unwrap();
            assert!(!fr.undersampled);
            max_abs_diff(&tie.field, &fr.field)
        };
        let (coarse, fine) = (gap(0.4), gap(0.1));
        assert!(coarse <= 0.02, "gap at 0.4 m: {coarse}");
        assert!(fine < coarse / 8.0, "gap at 0.1 m: {fine} vs {coarse}");
    }

    #[test]
    fn thin_ridge_images_bright_dark_bright() {
        // Locks the propagation sign: a thin wall of material gives a dark
        // centre flanked by bright fringes.
        let g = Grid2D::square(512, 2, 1e-6).unwrap();
        let ridge = ScalarField2D::from_fn(g, |x, _| {
            let s = (x as f64 - 256.0) / 4.0;
            5e-6 * (-0.5 * s * s).exp()
        })
        .unwrap();
        let t = ThicknessMap::new(ridge).unwrap();
        let f = fresnel_oracle(&al(), &t, &ones(g), 0.2).unwrap();
        let row = f.field.row(0);
        assert!(row[256] < 1.0);
        let left = row[230..256].iter().copied().fold(f64::MIN, f64::max);
        let right = row[257..282].iter().copied().fold(f64::MIN, f64::max);
        assert!(left > 1.0 && right > 1.0, "fringes {left} {right}");
    }

    #[test]
    fn sampling_guard_flags_coarse_grids() {
        let g = Grid2D::square(16, 16, 1e-6).unwrap();
        let f = fresnel_oracle(&al(), &ThicknessMap::zeros(g), &ones(g), 10.0).unwrap();
        assert!(f.undersampled);
        assert!(fresnel_sampling_ok(&g, 6.5e-11, 0.1));
    }

    #[test]
    fn near_field_examples() {
        let d = FeatureScale::new(100e-6).unwrap();
        assert!(near_field_check(0.0, d, 6.5e-11).unwrap().is_ok());
        let long_beamline = near_field_check(13.0, d, 6.5e-11).unwrap();
        assert!(long_beamline.is_ok());
        assert!((1.0 / long_beamline.ratio() * 13.0 - 153.846).abs() < 1e-2);
        // Boundary inclusive: d^2 = R lambda with exactly representable values.
        let unit = FeatureScale::new(2.0).unwrap();
        assert_eq!(near_field_check(2.0, unit, 2.0).unwrap(), NearField::Ok { ratio: 1.0 });
        assert!(!near_field_check(2.5, unit, 2.0).unwrap().is_ok());
        assert!(FeatureScale::new(0.0).is_err());
    }

    #[test]
    fn screen_propagation_conserves_power() {
        let g = Grid2D::square(128, 1, 1e-6).unwrap();
        let mask = ScalarField2D::from_fn(g, |x, _| if (x / 8) % 2 == 0 { 0.02 } else { 0.96 }).unwrap();
        let p = propagate_screen(&mask, &ones(g), 6.5e-11, 0.2).unwrap();
        assert!((p.field.mean() - mask.mean()).abs() < 1e-12);
        assert_eq!(
            propagate_screen(&mask, &ones(g), 6.5e-11, 0.0).unwrap().field.values()[0],
            0.02f64.sqrt().powi(2)
        );
    }
}

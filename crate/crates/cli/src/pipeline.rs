//! Turns an [`ExperimentConfig`] into core objects and runs the stages.

use phasegi::acquisition::{
    detect, forward, propagated_image, AcquisitionOrder, BucketSeries, ContrastModel, ForwardSpec,
    GuardFlags, MailboxGeometry,
};
use phasegi::fields::{Axis, Grid2D, Roi, ScalarField2D};
use phasegi::mask::{
    finest_line_width, grating_specs, make_schedule, realize, GratingSpec, MaskRealization, Orientation,
    PatternSource,
};
use phasegi::optics::{near_field_check, FeatureScale, LaplacianMode, NearField, PropagatedImage};
use phasegi::phantom::{edge_phantom, lamella_phantom, LamellaSpec, Material, ThicknessMap};

use crate::config::{
    AxisConfig, ExperimentConfig, MaskConfig, ModelConfig, OrderConfig, OrientationConfig, PhantomConfig,
};
use crate::CliError;

fn axis(a: AxisConfig) -> Axis {
    match a {
        AxisConfig::Horizontal => Axis::Horizontal,
        AxisConfig::Vertical => Axis::Vertical,
    }
}

/// Horizontal pixel window of one tile on the full grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub x0: usize,
    pub width: usize,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub grid: Grid2D,
    pub material: Material,
    pub forward: ForwardSpec,
    pub source: PatternSource,
    /// Grid the masks and mailboxes live on: one tile, or the whole grid.
    pub acquisition_grid: Grid2D,
    pub tiles: Vec<Tile>,
    pub geometry: MailboxGeometry,
    /// Bar width of the finest grating or the speckle size, metres.
    pub basis_width: f64,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, CliError> {
        let c = &config;
        let grid = Grid2D::new(c.grid.nx, c.grid.ny, c.grid.pitch_x_m, c.grid.pitch_y_m)?;
        let material = match (c.material.energy_kev, c.material.wavelength_m) {
            (Some(e), None) => Material::from_energy_kev(c.material.delta, c.material.beta, e)?,
            (None, Some(l)) => Material::new(c.material.delta, c.material.beta, l)?,
            _ => {
                return Err(CliError::Config(
                    "material needs exactly one of energy_kev and wavelength_m".into(),
                ))
            }
        };
        let model = match c.acquisition.contrast_model {
            ModelConfig::Tie => ContrastModel::Tie(LaplacianMode::SpectralPeriodic),
            ModelConfig::TieFiniteDifference => ContrastModel::Tie(LaplacianMode::FiniteDifferenceNeumann),
            ModelConfig::Fresnel => ContrastModel::Fresnel,
            ModelConfig::AttenuationOnly => ContrastModel::AttenuationOnly,
        };
        let order = match c.acquisition.order {
            OrderConfig::StructuredIllumination => AcquisitionOrder::StructuredIllumination,
            OrderConfig::StructuredDetection => AcquisitionOrder::StructuredDetection,
        };
        for (name, v) in [("r_s_m", c.acquisition.r_s_m), ("r_m_m", c.acquisition.r_m_m)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::Config(format!("{name} = {v}")));
            }
        }
        let forward =
            ForwardSpec { order, distance: c.acquisition.r_s_m, model, mask_distance: c.acquisition.r_m_m };

        let (source, basis_width) = match c.masks {
            MaskConfig::Gratings { n_max, base_frequency_per_m, duty, t_low, t_high, orientation } => {
                let template = GratingSpec {
                    lines_per_mm: base_frequency_per_m * 1e-3,
                    duty,
                    t_low,
                    t_high,
                    orientation: match orientation {
                        OrientationConfig::VerticalLines => Orientation::VerticalLines,
                        OrientationConfig::HorizontalLines => Orientation::HorizontalLines,
                    },
                };
                let specs = grating_specs(n_max, template.lines_per_mm, &template)?;
                (PatternSource::Gratings(specs), finest_line_width(n_max, template.lines_per_mm, duty))
            }
            MaskConfig::Speckles { count, speckle_size_m, t_low, t_high } => (
                PatternSource::Speckles { seed: c.seed, count, speckle_size: speckle_size_m, t_low, t_high },
                speckle_size_m,
            ),
        };

        let (acquisition_grid, tiles) = match &c.tiles {
            None => (grid, vec![Tile { x0: 0, width: grid.nx() }]),
            Some(t) => {
                let width = (c.mailbox.length_m / grid.pitch_x()).round() as usize;
                let step = (t.step_m / grid.pitch_x()).round() as usize;
                if t.count == 0 || width == 0 || (t.count > 1 && step == 0) {
                    return Err(CliError::Config("tiles need count, width and step above zero".into()));
                }
                let tiles: Vec<Tile> = (0..t.count).map(|k| Tile { x0: k * step, width }).collect();
                let last = tiles[tiles.len() - 1];
                if last.x0 + width > grid.nx() {
                    return Err(CliError::Config(format!(
                        "tile {} ends at pixel {} beyond the {} px grid",
                        t.count - 1,
                        last.x0 + width,
                        grid.nx()
                    )));
                }
                if t.crop_width_m > c.mailbox.length_m {
                    return Err(CliError::Config("crop_width_m exceeds the tile width".into()));
                }
                (grid.with_size(width, grid.ny())?, tiles)
            }
        };
        let geometry = MailboxGeometry::tiling(
            &acquisition_grid,
            c.mailbox.length_m,
            c.mailbox.height_m,
            axis(c.mailbox.axis),
        )?;
        geometry.footprints(&acquisition_grid)?;

        Ok(Self { config, grid, material, forward, source, acquisition_grid, tiles, geometry, basis_width })
    }

    pub fn phantom(&self) -> Result<ThicknessMap, CliError> {
        Ok(match self.config.phantom {
            PhantomConfig::Empty => ThicknessMap::zeros(self.grid),
            PhantomConfig::Edge { thickness_m, axis: a, position_m, smoothing_m } => {
                edge_phantom(&self.grid, thickness_m, axis(a), position_m, smoothing_m)?
            }
            PhantomConfig::Lamella {
                mean_pore_m,
                wall_thickness_m,
                wall_width_m,
                smoothing_m,
                margin_px,
            } => {
                let spec = LamellaSpec {
                    mean_pore: mean_pore_m,
                    wall_thickness: wall_thickness_m,
                    wall_width: wall_width_m,
                    smoothing_sigma: smoothing_m,
                    margin: margin_px,
                };
                lamella_phantom(&self.grid, self.config.seed, &spec)?
            }
        })
    }

    /// The reference stack: every schedule entry on the acquisition grid.
    pub fn references(&self) -> Result<Vec<MaskRealization>, CliError> {
        let s = &self.config.schedule;
        let schedule = make_schedule(self.source.len(), s.step_m, s.offsets_per_pattern)?;
        Ok(realize(&schedule, &self.source, &self.acquisition_grid)?)
    }

    /// Near-field validity for the configured feature scale, if any.
    pub fn near_field(&self) -> Result<Option<NearField>, CliError> {
        self.config
            .acquisition
            .feature_scale_m
            .map(|d| {
                Ok(near_field_check(
                    self.forward.distance,
                    FeatureScale::new(d)?,
                    self.material.wavelength(),
                )?)
            })
            .transpose()
    }

    /// The propagated sample image on the full grid under uniform light.
    pub fn direct_image(&self, t: &ThicknessMap) -> Result<PropagatedImage, CliError> {
        let flat = ScalarField2D::constant(self.grid, 1.0)?;
        Ok(propagated_image(self.forward.model, &self.material, t, &flat, self.forward.distance)?)
    }

    pub fn tile_roi(&self, tile: Tile) -> Roi {
        Roi::new(tile.x0, 0, tile.width, self.grid.ny())
    }

    /// Bucket series of every tile. `direct` must be [`Self::direct_image`]
    /// of `t`; detection order reuses it instead of propagating again.
    pub fn acquire(
        &self,
        t: &ThicknessMap,
        direct: &PropagatedImage,
        references: &[MaskRealization],
    ) -> Result<(Vec<BucketSeries>, GuardFlags), CliError> {
        let mut guards = GuardFlags::default();
        let mut series = Vec::with_capacity(self.tiles.len());
        let flat = ScalarField2D::constant(self.acquisition_grid, 1.0)?;
        for &tile in &self.tiles {
            let roi = self.tile_roi(tile);
            let b = match self.forward.order {
                AcquisitionOrder::StructuredDetection => {
                    guards.negative_pixels = guards.negative_pixels.max(direct.negative_pixels);
                    guards.undersampled |= direct.undersampled;
                    detect(&direct.field.crop(&roi)?, references, &self.geometry)?
                }
                AcquisitionOrder::StructuredIllumination => {
                    let local = ThicknessMap::new(t.field().crop(&roi)?)?;
                    let (b, g) =
                        forward(&self.forward, &self.material, &local, references, &flat, &self.geometry)?;
                    guards.negative_pixels = guards.negative_pixels.max(g.negative_pixels);
                    guards.undersampled |= g.undersampled;
                    b
                }
            };
            series.push(b);
        }
        Ok((series, guards))
    }

    /// Flat-field series: the same schedule with no sample. Identical for
    /// every tile, so only one is returned.
    pub fn acquire_flat(
        &self,
        references: &[MaskRealization],
    ) -> Result<(BucketSeries, GuardFlags), CliError> {
        let empty = ThicknessMap::zeros(self.acquisition_grid);
        let flat = ScalarField2D::constant(self.acquisition_grid, 1.0)?;
        Ok(forward(&self.forward, &self.material, &empty, references, &flat, &self.geometry)?)
    }
}

/// Pixels of zero thickness at least `radius` pixels (Chebyshev distance)
/// from any nonzero pixel.
pub fn pore_mask(t: &ScalarField2D, radius: usize) -> Vec<bool> {
    let g = t.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let solid: Vec<bool> = t.values().iter().map(|&v| v != 0.0).collect();
    let mut rows = vec![false; solid.len()];
    for y in 0..ny {
        for x in 0..nx {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(nx - 1);
            rows[y * nx + x] = (lo..=hi).any(|k| solid[y * nx + k]);
        }
    }
    let mut out = vec![false; solid.len()];
    for y in 0..ny {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(ny - 1);
        for x in 0..nx {
            out[y * nx + x] = !(lo..=hi).any(|k| rows[k * nx + x]);
        }
    }
    out
}

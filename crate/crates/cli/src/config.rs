//! Experiment configuration.
//!
//! One TOML file describes a whole run. Physical quantities are SI and the
//! unit is part of the key (`pitch_x_m`, `r_s_m`, `base_frequency_per_m`).

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub material: MaterialConfig,
    pub phantom: PhantomConfig,
    pub masks: MaskConfig,
    pub schedule: ScheduleConfig,
    pub acquisition: AcquisitionConfig,
    pub mailbox: MailboxConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiles: Option<TileConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub pitch_x_m: f64,
    pub pitch_y_m: f64,
}

/// Refractive decrement and absorption index at one photon energy. Give
/// exactly one of `energy_kev` and `wavelength_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub delta: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_kev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AxisConfig {
    #[default]
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomConfig {
    Empty,
    Edge { thickness_m: f64, axis: AxisConfig, position_m: f64, smoothing_m: f64 },
    Lamella { mean_pore_m: f64, wall_thickness_m: f64, wall_width_m: f64, smoothing_m: f64, margin_px: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrientationConfig {
    #[default]
    VerticalLines,
    HorizontalLines,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskConfig {
    /// Gratings with `k * base_frequency_per_m` cycles per metre,
    /// `k = 1..=n_max`.
    Gratings {
        n_max: usize,
        base_frequency_per_m: f64,
        duty: f64,
        t_low: f64,
        t_high: f64,
        orientation: OrientationConfig,
    },
    /// Binary speckles drawn from the experiment seed.
    Speckles { count: usize, speckle_size_m: f64, t_low: f64, t_high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub step_m: f64,
    pub offsets_per_pattern: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderConfig {
    StructuredIllumination,
    StructuredDetection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelConfig {
    /// TIE with the spectral Laplacian.
    Tie,
    /// TIE with the finite-difference Laplacian.
    TieFiniteDifference,
    Fresnel,
    AttenuationOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub order: OrderConfig,
    pub r_s_m: f64,
    #[serde(default)]
    pub r_m_m: f64,
    pub contrast_model: ModelConfig,
    /// Object feature size for the near-field check; skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_scale_m: Option<f64>,
    /// Also simulate the same schedule without the sample.
    #[serde(default = "yes")]
    pub flat_field: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MailboxConfig {
    pub length_m: f64,
    pub height_m: f64,
    #[serde(default)]
    pub axis: AxisConfig,
}

/// Field-of-view tiling: tile `k` is one mailbox length wide and starts
/// `k * step_m` from the left edge of the grid. Ghosts of all tiles are
/// cropped to their central `crop_width_m` and concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileConfig {
    pub count: usize,
    pub step_m: f64,
    pub crop_width_m: f64,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7

[grid]
nx = 200
ny = 8
pitch_x_m = 1e-5
pitch_y_m = 1e-5

[material]
delta = 1.51e-6
beta = 5.6e-9
energy_kev = 19.0

[phantom]
kind = "edge"
thickness_m = 2e-5
axis = "horizontal"
position_m = 1e-3
smoothing_m = 2e-5

[masks]
kind = "gratings"
n_max = 10
base_frequency_per_m = 500
duty = 0.5
t_low = 0.02
t_high = 0.96
orientation = "vertical_lines"

[schedule]
step_m = 6.5e-5
offsets_per_pattern = 1

[acquisition]
order = "structured_detection"
r_s_m = 1.0
contrast_model = "tie"

[mailbox]
length_m = 1e-3
height_m = 1e-5
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.grid.nx, 200);
        assert_eq!(c.acquisition.r_m_m, 0.0);
        assert!(c.acquisition.flat_field);
        assert_eq!(c.mailbox.axis, AxisConfig::Horizontal);
        assert!(
            matches!(c.masks, MaskConfig::Gratings { base_frequency_per_m, .. } if base_frequency_per_m == 500.0)
        );
    }

    #[test]
    fn print_then_parse_is_identity() {
        let mut c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
        c.phantom = PhantomConfig::Lamella {
            mean_pore_m: 1.2e-3,
            wall_thickness_m: 2e-5,
            wall_width_m: 1.2e-4,
            smoothing_m: 0.1 + 0.2,
            margin_px: 16,
        };
        c.masks = MaskConfig::Speckles { count: 50, speckle_size_m: 3e-5, t_low: 0.0, t_high: 1.0 };
        c.tiles = Some(TileConfig { count: 21, step_m: 5e-4, crop_width_m: 5e-4 });
        c.acquisition.feature_scale_m = Some(1e-4);
        assert_eq!(ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_kinds() {
        assert!(ExperimentConfig::parse(&SAMPLE.replace("r_s_m", "r_s")).is_err());
        assert!(ExperimentConfig::parse(&SAMPLE.replace("\"edge\"", "\"sphere\"")).is_err());
        assert!(ExperimentConfig::parse(&format!("{SAMPLE}\nextra = 1\n")).is_err());
    }
}

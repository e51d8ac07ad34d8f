//! The subcommands. Each writes its artifacts into a directory and returns
//! the report it also saved there.

use std::fs;
use std::path::{Path, PathBuf};

use phasegi::acquisition::BucketSeries;
use phasegi::fields::{
    line_profile, read_raster, write_pgm, write_profile_csv, write_raster, Axis, Grid2D, ScalarField2D,
};
use phasegi::mask::MaskRealization;
use phasegi::recon::{
    bin_profile, extrema, flat_field_normalize, ghost_synthesize, kernel_smooth, mailbox_profiles, psf,
    rms_difference, stitch, upsample, EpsilonPolicy, StitchPolicy,
};

use crate::config::{ModelConfig, OrderConfig};
use crate::pipeline::{pore_mask, Experiment};
use crate::report::Report;
use crate::CliError;

fn save(field: &ScalarField2D, dir: &Path, name: &str) -> Result<(), CliError> {
    write_raster(field, dir.join(format!("{name}.gir")))?;
    Ok(())
}

fn save_with_preview(field: &ScalarField2D, dir: &Path, name: &str) -> Result<(), CliError> {
    save(field, dir, name)?;
    write_pgm(field, dir.join(format!("{name}.pgm")))?;
    Ok(())
}

fn finish(report: Report, dir: &Path, name: &str) -> Result<Report, CliError> {
    report.write(&dir.join(name))?;
    Ok(report)
}

fn warn(msg: &str) {
    eprintln!("phasegi: warning: {msg}");
}

fn bucket_name(exp: &Experiment, k: usize) -> String {
    match exp.config.tiles {
        None => "buckets".into(),
        Some(_) => format!("buckets_t{k:02}"),
    }
}

fn write_series(series: &BucketSeries, dir: &Path, name: &str) -> Result<(), CliError> {
    series.write(dir.join(format!("{name}.gib")))?;
    fs::write(dir.join(format!("{name}.csv")), series.to_csv())?;
    Ok(())
}

fn order_name(o: OrderConfig) -> &'static str {
    match o {
        OrderConfig::StructuredIllumination => "structured_illumination",
        OrderConfig::StructuredDetection => "structured_detection",
    }
}

fn model_name(m: ModelConfig) -> &'static str {
    match m {
        ModelConfig::Tie => "tie",
        ModelConfig::TieFiniteDifference => "tie_finite_difference",
        ModelConfig::Fresnel => "fresnel",
        ModelConfig::AttenuationOnly => "attenuation_only",
    }
}

/// Writes the thickness map.
pub fn phantom(exp: &Experiment, out: &Path) -> Result<Report, CliError> {
    fs::create_dir_all(out)?;
    let t = exp.phantom()?;
    let f = t.field();
    save_with_preview(f, out, "thickness")?;
    let solid = f.values().iter().filter(|&&v| v != 0.0).count();
    let mut r = Report::new();
    r.push("nx", exp.grid.nx())
        .push("ny", exp.grid.ny())
        .push("pitch_x_m", exp.grid.pitch_x())
        .push("pitch_y_m", exp.grid.pitch_y())
        .push("thickness_min_m", f.min())
        .push("thickness_max_m", f.max())
        .push("thickness_mean_m", f.mean())
        .push("solid_fraction", solid as f64 / f.values().len() as f64);
    finish(r, out, "phantom_report.txt")
}

/// Runs the forward model and writes references, buckets and the direct
/// image. Under `strict`, guard violations abort before anything is
/// written.
pub fn simulate(exp: &Experiment, out: &Path, strict: bool) -> Result<Report, CliError> {
    let near = exp.near_field()?;
    if let Some(nf) = near.filter(|nf| !nf.is_ok()) {
        let msg = format!("near-field condition violated, R lambda / d^2 = {}", nf.ratio());
        if strict {
            return Err(CliError::Guard(msg));
        }
        warn(&msg);
    }
    let t = exp.phantom()?;
    let refs = exp.references()?;
    let direct = exp.direct_image(&t)?;
    let (series, mut guards) = exp.acquire(&t, &direct, &refs)?;
    let flat = if exp.config.acquisition.flat_field {
        let (f, g) = exp.acquire_flat(&refs)?;
        guards.negative_pixels = guards.negative_pixels.max(g.negative_pixels);
        guards.undersampled |= g.undersampled;
        Some(f)
    } else {
        None
    };
    if guards.any() {
        let msg = format!(
            "numerical guard raised: negative_pixels={} undersampled={}",
            guards.negative_pixels, guards.undersampled
        );
        if strict {
            return Err(CliError::Guard(msg));
        }
        warn(&msg);
    }

    fs::create_dir_all(out.join("refs"))?;
    fs::write(out.join("config.toml"), exp.config.to_toml()?)?;
    save_with_preview(t.field(), out, "thickness")?;
    save_with_preview(&direct.field, out, "direct")?;
    write_references(&refs, &out.join("refs"))?;
    for (k, s) in series.iter().enumerate() {
        write_series(s, out, &bucket_name(exp, k))?;
    }
    if let Some(f) = &flat {
        write_series(f, out, "flat_buckets")?;
    }

    let mut r = Report::new();
    r.push("order", order_name(exp.config.acquisition.order))
        .push("contrast_model", model_name(exp.config.acquisition.contrast_model))
        .push("r_s_m", exp.forward.distance)
        .push("wavelength_m", exp.material.wavelength())
        .push("realizations", refs.len())
        .push("mailboxes", exp.geometry.count())
        .push("tiles", exp.tiles.len())
        .push("flat_field", flat.is_some());
    match near {
        None => r.push("near_field", "unchecked"),
        Some(nf) => r
            .push("near_field", if nf.is_ok() { "ok" } else { "violated" })
            .push("near_field_ratio", nf.ratio()),
    };
    r.push("negative_pixels", guards.negative_pixels)
        .push("undersampled", guards.undersampled)
        .push("direct_min", direct.field.min())
        .push("direct_max", direct.field.max());
    finish(r, out, "simulate_report.txt")
}

fn write_references(refs: &[MaskRealization], dir: &Path) -> Result<(), CliError> {
    let mut index = String::from("j,offset_m,pattern_id\n");
    for (j, m) in refs.iter().enumerate() {
        index.push_str(&format!("{j},{},{}\n", m.scan_offset(), m.pattern_id()));
        save(m.pattern(), dir, &format!("ref_{j:04}"))?;
    }
    fs::write(dir.join("index.csv"), index)?;
    Ok(())
}

/// Reads a reference stack written by `simulate`.
pub fn read_references(dir: &Path) -> Result<Vec<MaskRealization>, CliError> {
    let index = fs::read_to_string(dir.join("index.csv"))?;
    let bad = |line: &str| CliError::Format(format!("reference index line {line:?}"));
    index
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(bad(line));
            }
            let j: usize = cols[0].parse().map_err(|_| bad(line))?;
            let offset: f64 = cols[1].parse().map_err(|_| bad(line))?;
            let id: usize = cols[2].parse().map_err(|_| bad(line))?;
            let pattern = read_raster(dir.join(format!("ref_{j:04}.gir")))?;
            Ok(MaskRealization::new(pattern, offset, id)?)
        })
        .collect()
}

fn join(exp: &Experiment, tiles: Vec<ScalarField2D>) -> Result<ScalarField2D, CliError> {
    match &exp.config.tiles {
        None => Ok(tiles.into_iter().next().expect("one tile")),
        Some(t) => Ok(stitch(&tiles, t.crop_width_m, StitchPolicy::Concatenate)?),
    }
}

fn as_mask(values: &[bool], grid: Grid2D) -> Result<ScalarField2D, CliError> {
    Ok(ScalarField2D::new(grid, values.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect())?)
}

fn mean_where(field: &ScalarField2D, mask: &[bool]) -> Option<f64> {
    let (s, n) = field
        .values()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Ghost synthesis, flat-field normalisation and comparison with the
/// kernel-smoothed direct image, from the files in `dir`.
pub fn reconstruct(exp: &Experiment, dir: &Path) -> Result<Report, CliError> {
    let refs = read_references(&dir.join("refs"))?;
    let flat = if dir.join("flat_buckets.gib").exists() {
        Some(BucketSeries::read(dir.join("flat_buckets.gib"))?)
    } else {
        None
    };
    let t = exp.phantom()?;
    let direct = exp.direct_image(&t)?;
    let pore_radius = (exp.basis_width / exp.grid.pitch_x()).ceil() as usize;
    let pores = pore_mask(t.field(), pore_radius);
    let pores = as_mask(&pores, exp.grid)?;
    let policy = EpsilonPolicy::default();

    let mut parts: [Vec<ScalarField2D>; 7] = Default::default();
    for (k, &tile) in exp.tiles.iter().enumerate() {
        let series = BucketSeries::read(dir.join(format!("{}.gib", bucket_name(exp, k))))?;
        let roi = exp.tile_roi(tile);
        let gs = ghost_synthesize(&refs, &series, &exp.geometry)?;
        let view = direct.field.crop(&roi)?;
        let oracle = kernel_smooth(&refs, &view, &exp.geometry, policy)?;
        if let Some(f) = &flat {
            let gf = ghost_synthesize(&refs, f, &exp.geometry)?;
            let n = flat_field_normalize(&gs, &gf, policy)?;
            let both: Vec<bool> = n.valid.iter().zip(&oracle.valid).map(|(a, b)| *a && *b).collect();
            parts[1].push(gf.field);
            parts[2].push(n.field);
            parts[3].push(as_mask(&both, *view.grid())?);
        }
        parts[0].push(gs.field);
        parts[4].push(oracle.field);
        parts[5].push(view);
        parts[6].push(pores.crop(&roi)?);
    }
    let [gs, gf, ratio, valid, oracle, view, pores] = parts;
    let ghost_sample = join(exp, gs)?;
    let oracle = join(exp, oracle)?;
    let view = join(exp, view)?;
    let pores = join(exp, pores)?;

    fs::create_dir_all(dir)?;
    save_with_preview(&ghost_sample, dir, "ghost_sample")?;
    save(&oracle, dir, "oracle")?;
    save(&view, dir, "direct_view")?;

    let mut r = Report::new();
    r.push("realizations", refs.len())
        .push("mailboxes", exp.geometry.count())
        .push("tiles", exp.tiles.len())
        .push("nx", ghost_sample.grid().nx())
        .push("ny", ghost_sample.grid().ny());
    if flat.is_some() {
        let ghost_flat = join(exp, gf)?;
        let ratio = join(exp, ratio)?;
        let valid_field = join(exp, valid)?;
        save(&ghost_flat, dir, "ghost_flat")?;
        save_with_preview(&ratio, dir, "ratio")?;
        save(&valid_field, dir, "valid")?;
        let valid: Vec<bool> = valid_field.values().iter().map(|&v| v > 0.5).collect();
        let count = valid.iter().filter(|&&v| v).count();
        r.push("valid_pixels", count).push("total_pixels", valid.len());
        if count > 0 {
            let vals = ratio.values().iter().zip(&valid).filter(|(_, &ok)| ok).map(|(&v, _)| v);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            r.push("ratio_min", lo)
                .push("ratio_max", hi)
                .push("ratio_mean", mean_where(&ratio, &valid).unwrap_or(0.0))
                .push(
                    "oracle_max",
                    oracle
                        .values()
                        .iter()
                        .zip(&valid)
                        .filter(|(_, &ok)| ok)
                        .map(|(&v, _)| v)
                        .fold(f64::NEG_INFINITY, f64::max),
                )
                .push("rms_vs_oracle", rms_difference(&ratio, &oracle, Some(&valid))?)
                .push("rms_vs_direct", rms_difference(&ratio, &view, Some(&valid))?);
            let in_pores: Vec<bool> =
                pores.values().iter().zip(&valid).map(|(&p, &v)| p > 0.5 && v).collect();
            let pore_count = in_pores.iter().filter(|&&v| v).count();
            r.push("pore_pixels", pore_count);
            if pore_count > 0 {
                r.push("pore_ratio_mean", mean_where(&ratio, &in_pores).unwrap_or(0.0));
            }
        }
    }
    finish(r, dir, "reconstruct_report.txt")
}

/// Ghost-imaging PSF of the first mailbox at detector and basis resolution.
pub fn psf_command(exp: &Experiment, out: &Path) -> Result<Report, CliError> {
    fs::create_dir_all(out)?;
    let refs = exp.references()?;
    let profiles = mailbox_profiles(&refs, &exp.geometry, 0)?;
    let pitch = exp.acquisition_grid.pitch(exp.geometry.axis);
    let fine = psf(&profiles, pitch)?;
    save(&fine.to_field()?, out, "psf")?;
    fs::write(out.join("psf.csv"), fine.to_csv())?;

    let mut r = Report::new();
    r.push("psf_size", fine.size()).push("pitch_m", pitch).push("symmetric", fine.is_symmetric());
    match fine.mean_row_fwhm() {
        Ok((w, rows)) => r.push("fwhm_mean_m", w).push("fwhm_rows", rows),
        Err(_) => r.push("fwhm_mean_m", "none").push("fwhm_rows", 0),
    };
    r.push("fine_dominance_ratio", fine.dominance_ratio());

    let factor = (exp.basis_width / pitch).round() as usize;
    let binned: Result<Vec<Vec<f64>>, _> = profiles.iter().map(|p| bin_profile(p, factor)).collect();
    match binned {
        Ok(b) => {
            let basis = psf(&b, pitch * factor as f64)?;
            fs::write(out.join("basis_psf.csv"), basis.to_csv())?;
            r.push("basis_pixels", basis.size())
                .push("basis_pitch_m", basis.pitch())
                .push("basis_dominance_ratio", basis.dominance_ratio())
                .push("basis_diagonally_dominant", basis.is_diagonally_dominant());
        }
        Err(_) => {
            r.push("basis_pixels", "unavailable");
        }
    }
    finish(r, out, "psf_report.txt")
}

/// Inputs of the `compare` command.
#[derive(Debug, Clone)]
pub struct CompareArgs {
    pub direct: PathBuf,
    pub ghost: PathBuf,
    pub valid: Option<PathBuf>,
    /// Upsampling factor applied to the ghost (and mask) first.
    pub factor: usize,
    /// Row for the line profiles; the middle row when absent.
    pub row: Option<usize>,
}

fn onto(field: ScalarField2D, grid: &Grid2D, what: &str) -> Result<ScalarField2D, CliError> {
    let g = field.grid();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
    if g.nx() != grid.nx()
        || g.ny() != grid.ny()
        || !close(g.pitch_x(), grid.pitch_x())
        || !close(g.pitch_y(), grid.pitch_y())
    {
        return Err(CliError::Format(format!(
            "{what} is {}x{} at {:e} m, direct image is {}x{} at {:e} m",
            g.nx(),
            g.ny(),
            g.pitch_x(),
            grid.nx(),
            grid.ny(),
            grid.pitch_x()
        )));
    }
    Ok(ScalarField2D::new(*grid, field.into_values())?)
}

/// RMS difference and line profiles of a ghost against a direct image.
pub fn compare(args: &CompareArgs, out: &Path) -> Result<Report, CliError> {
    fs::create_dir_all(out)?;
    let direct = read_raster(&args.direct)?;
    let grid = *direct.grid();
    let ghost = onto(upsample(&read_raster(&args.ghost)?, args.factor)?, &grid, "ghost")?;
    let valid = match &args.valid {
        None => None,
        Some(p) => {
            let v = onto(upsample(&read_raster(p)?, args.factor)?, &grid, "valid mask")?;
            Some(v.values().iter().map(|&x| x > 0.5).collect::<Vec<bool>>())
        }
    };
    let row = args.row.unwrap_or(grid.ny() / 2);
    let pd = line_profile(&direct, Axis::Horizontal, row)?;
    let pg = line_profile(&ghost, Axis::Horizontal, row)?;
    write_profile_csv(&pd, out.join("profile_direct.csv"))?;
    write_profile_csv(&pg, out.join("profile_ghost.csv"))?;
    save(&ghost.zip_with(&direct, |a, b| a - b)?, out, "difference")?;
    let (ed, eg) = (extrema(&pd)?, extrema(&pg)?);

    let mut r = Report::new();
    r.push("rms", rms_difference(&ghost, &direct, valid.as_deref())?)
        .push("row", row)
        .push("direct_max", ed.max)
        .push("direct_max_position_m", ed.max_position)
        .push("direct_min", ed.min)
        .push("direct_min_position_m", ed.min_position)
        .push("ghost_max", eg.max)
        .push("ghost_max_position_m", eg.max_position)
        .push("ghost_min", eg.min)
        .push("ghost_min_position_m", eg.min_position);
    finish(r, out, "compare_report.txt")
}

/// One line of a raster as CSV.
pub fn profile(raster: &Path, axis: Axis, index: usize, out: &Path) -> Result<usize, CliError> {
    let field = read_raster(raster)?;
    let p = line_profile(&field, axis, index)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_profile_csv(&p, out)?;
    Ok(p.len())
}

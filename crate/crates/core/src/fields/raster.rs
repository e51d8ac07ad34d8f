//! File formats for fields.
//!
//! GIR1 layout: one ASCII header line
//! `GIR1 <nx> <ny> <pitch_x_m> <pitch_y_m>\n` followed by `nx * ny`
//! little-endian `f32` values in row-major order (x fastest). Values are
//! narrowed from `f64` with round-to-nearest; the pitches are written in
//! shortest round-trip form so grid metadata survives exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Grid2D, ScalarField2D};
use crate::error::{Error, Result};

const MAGIC: &str = "GIR1";
const MAX_HEADER: usize = 256;

/// Serialises `field` into GIR1 bytes.
pub fn encode_raster(field: &ScalarField2D) -> Result<Vec<u8>> {
    let g = field.grid();
    let header = format!("{MAGIC} {} {} {:e} {:e}\n", g.nx(), g.ny(), g.pitch_x(), g.pitch_y());
    let mut out = Vec::with_capacity(header.len() + 4 * g.len());
    out.extend_from_slice(header.as_bytes());
    for (i, &v) in field.values().iter().enumerate() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(Error::NonFinite(i));
        }
        out.extend_from_slice(&narrowed.to_le_bytes());
    }
    Ok(out)
}

/// Parses GIR1 bytes.
pub fn decode_raster(bytes: &[u8]) -> Result<ScalarField2D> {
    let newline = bytes
        .iter()
        .take(MAX_HEADER)
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing GIR1 header line".into()))?;
    let header =
        std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::Format("header is not ASCII".into()))?;
    let tokens: Vec<&str> = header.split_ascii_whitespace().collect();
    if tokens.len() != 5 || tokens[0] != MAGIC {
        return Err(Error::Format(format!("bad header {header:?}")));
    }
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad dimension {s:?}")));
    let parse_f64 = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad pitch {s:?}")));
    let grid = Grid2D::new(
        parse_usize(tokens[1])?,
        parse_usize(tokens[2])?,
        parse_f64(tokens[3])?,
        parse_f64(tokens[4])?,
    )
    .map_err(|e| Error::Format(e.to_string()))?;

    let payload = &bytes[newline + 1..];
    let expected = grid.len().checked_mul(4).ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    if payload.len() < expected {
        return Err(Error::Format(format!("truncated payload: {} of {expected} bytes", payload.len())));
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "dimension mismatch: {} trailing bytes",
            payload.len() - expected
        )));
    }
    let values =
        payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    ScalarField2D::new(grid, values)
}

pub fn write_raster(field: &ScalarField2D, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_raster(field)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<ScalarField2D> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_raster(&bytes)
}

/// 16-bit binary PGM preview, min-max scaled. The scaling is recorded in a
/// header comment so values can be recovered approximately.
pub fn write_pgm(field: &ScalarField2D, path: impl AsRef<Path>) -> Result<()> {
    let (lo, hi) = (field.min(), field.max());
    let span = hi - lo;
    let g = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "P5\n# phasegi min={lo:e} max={hi:e} value=min+(max-min)*level/65535\n{} {}\n65535\n",
        g.nx(),
        g.ny()
    )?;
    for &v in field.values() {
        let level = if span > 0.0 { ((v - lo) / span * 65535.0).round() as u16 } else { 0 };
        w.write_all(&level.to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `(position_m, value)` pairs as a two-column CSV.
pub fn write_profile_csv(profile: &[(f64, f64)], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "position_m,value")?;
    for (p, v) in profile {
        writeln!(w, "{p},{v}")?;
    }
    w.flush()?;
    Ok(())
}

//! Space-time heatmaps as binary PPM (P6) images.
//!
//! One pixel per cell. Time runs left to right, space bottom to top, so the
//! downstream end of the road is the top row. Values map linearly onto a
//! fixed five-stop palette from dark red (low) through yellow to dark green
//! (high), clamped to the quantity's range:
//!
//! | quantity | range                    |
//! |----------|--------------------------|
//! | speed    | 0 to 35 m/s              |
//! | flow     | 0 to 0.8 veh/s per lane  |
//! | density  | 0 to 0.15 veh/m per lane |
//!
//! Density uses the reversed palette so that congestion is dark in every
//! map. Invalid cells are pure blue `(0, 0, 255)`, a color the palette
//! never produces.

use std::io::Write;

use crate::error::{Error, Result};
use crate::macroscopic::MacroField;
use crate::metrics::Quantity;

pub const INVALID_RGB: [u8; 3] = [0, 0, 255];

const PALETTE: [[f64; 3]; 5] = [
    [96.0, 0.0, 0.0],
    [220.0, 40.0, 20.0],
    [250.0, 220.0, 40.0],
    [120.0, 200.0, 60.0],
    [0.0, 100.0, 30.0],
];

/// Value range mapped onto the palette, SI units.
pub fn scale(q: Quantity) -> Result<(f64, f64)> {
    match q {
        Quantity::Speed => Ok((0.0, 35.0)),
        Quantity::Flow => Ok((0.0, 0.8)),
        Quantity::Density => Ok((0.0, 0.15)),
        Quantity::Occupancy => Err(Error::validation("quantity", "no occupancy in macroscopic fields")),
    }
}

/// Palette color for a position in [0, 1]; values outside are clamped.
pub fn color(s: f64) -> [u8; 3] {
    let s = if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) };
    let pos = s * (PALETTE.len() - 1) as f64;
    let k = (pos.floor() as usize).min(PALETTE.len() - 2);
    let w = pos - k as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (PALETTE[k][c] * (1.0 - w) + PALETTE[k + 1][c] * w).round() as u8;
    }
    out
}

/// RGB pixels, row-major from the top-left corner.
pub fn render(field: &MacroField, q: Quantity) -> Result<(usize, usize, Vec<u8>)> {
    let (lo, hi) = scale(q)?;
    let g = &field.grid;
    let (w, h) = (g.nt(), g.nx());
    let mut px = Vec::with_capacity(w * h * 3);
    for row in 0..h {
        let jx = h - 1 - row;
        for it in 0..w {
            let k = g.index(it, jx);
            let rgb = if field.valid[k] {
                let value = match q {
                    Quantity::Speed => field.v[k],
                    Quantity::Flow => field.q[k],
                    _ => field.rho[k],
                };
                let s = (value - lo) / (hi - lo);
                color(if q == Quantity::Density { 1.0 - s } else { s })
            } else {
                INVALID_RGB
            };
            px.extend_from_slice(&rgb);
        }
    }
    Ok((w, h, px))
}

pub fn write_ppm<W: Write>(field: &MacroField, q: Quantity, mut out: W) -> Result<()> {
    let (w, h, px) = render(field, q)?;
    let io = |e| Error::io("heatmap", e);
    write!(out, "P6\n{w} {h}\n255\n").map_err(io)?;
    out.write_all(&px).map_err(io)?;
    Ok(())
}

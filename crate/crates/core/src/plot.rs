//! PNG renderings of spectrograms and experiment reports.

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::experiments::{BenchmarkReport, GridResult};
use crate::stft::PowerSpectrogram;

// viridis, sampled at five points
const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Maps `t` in `[0, 1]` onto the colour ramp.
pub fn colormap(t: f64) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (STOPS[i][k] + (STOPS[i + 1][k] - STOPS[i][k]) * f).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Log-magnitude image, low frequencies at the bottom, `dynamic_range_db`
/// below the peak mapped to the darkest colour.
pub fn spectrogram_png(power: &PowerSpectrogram, dynamic_range_db: f64, path: impl AsRef<Path>) -> Result<()> {
    let (bins, frames) = power.values.dim();
    if bins == 0 || frames == 0 {
        return Err(Error::EmptyInput("spectrogram has no entries".into()));
    }
    let db = power.values.mapv(|p| 10.0 * p.max(1e-300).log10());
    let top = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut img = RgbImage::new(frames as u32, bins as u32);
    for ((k, n), &v) in db.indexed_iter() {
        let t = 1.0 - (top - v) / dynamic_range_db;
        img.put_pixel(n as u32, (bins - 1 - k) as u32, colormap(t));
    }
    save(&img, path.as_ref())
}

/// Grid heatmap with `β₁` increasing downwards and `β*` to the right;
/// darker cells are smaller distances.
pub fn grid_heatmap_png(grid: &GridResult, path: impl AsRef<Path>) -> Result<()> {
    const CELL: u32 = 24;
    let rows = grid.distances.len() as u32;
    let cols = grid.distances.first().map_or(0, Vec::len) as u32;
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyInput("grid has no cells".into()));
    }
    let flat = grid.distances.iter().flatten();
    let lo = flat.clone().cloned().fold(f64::INFINITY, f64::min);
    let hi = flat.cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = RgbImage::new(cols * CELL, rows * CELL);
    for (i, row) in grid.distances.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            let colour = colormap((d - lo) / span);
            for y in 0..CELL {
                for x in 0..CELL {
                    img.put_pixel(j as u32 * CELL + x, i as u32 * CELL + y, colour);
                }
            }
        }
    }
    save(&img, path.as_ref())
}

/// Paired bars per condition: reverberant then restored mean fwsSNR.
pub fn benchmark_bars_png(report: &BenchmarkReport, path: impl AsRef<Path>) -> Result<()> {
    const BAR: u32 = 20;
    const GAP: u32 = 12;
    const HEIGHT: u32 = 200;
    if report.conditions.is_empty() {
        return Err(Error::EmptyInput("report has no conditions".into()));
    }
    let values: Vec<[f64; 2]> = report
        .conditions
        .iter()
        .map(|c| [c.reverberant.fwssnr_mean, c.restored.fwssnr_mean])
        .collect();
    let lo = values.iter().flatten().cloned().fold(0.0f64, f64::min);
    let hi = values.iter().flatten().cloned().fold(0.0f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let zero = (HEIGHT as f64 * hi / span).round() as u32;
    let width = values.len() as u32 * (2 * BAR + GAP) + GAP;
    let mut img = RgbImage::from_pixel(width, HEIGHT + 1, Rgb([255, 255, 255]));
    let colours = [Rgb([190, 80, 60]), Rgb([50, 110, 180])];
    for (c, pair) in values.iter().enumerate() {
        for (b, &v) in pair.iter().enumerate() {
            let x0 = GAP + c as u32 * (2 * BAR + GAP) + b as u32 * BAR;
            let h = (HEIGHT as f64 * v.abs() / span).round() as u32;
            let (y0, y1) = if v >= 0.0 { (zero - h.min(zero), zero) } else { (zero, (zero + h).min(HEIGHT)) };
            for x in x0..x0 + BAR - 2 {
                for y in y0..y1 {
                    img.put_pixel(x, y, colours[b]);
                }
            }
        }
    }
    for x in 0..width {
        img.put_pixel(x, zero.min(HEIGHT), Rgb([0, 0, 0]));
    }
    save(&img, path.as_ref())
}

//! Per-lag cross-quantilogram matrices and their CSV / image export.
//!
//! A heatmap matrix holds the estimates over a level grid at one lag: rows
//! follow the target levels, columns the source levels. CSV export prints
//! shortest round-trip float representations, so re-reading reproduces the
//! matrix exactly. Image rendering is a convenience layer: a diverging
//! palette, symmetric about zero, with positive values in red and negative in
//! blue.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::cqgram::{table_for_lags, CqError, LevelGrid, ObservedSeries};

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error(transparent)]
    Cq(#[from] CqError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed matrix csv: {0}")]
    Parse(String),
    #[error("image encode error: {0}")]
    Image(#[from] image::ImageError),
}

/// The `|taus1| x |taus2|` matrix of estimates at lag `k`. Entry `(i, j)` is
/// identical to the corresponding full-table cell.
pub fn heatmap_matrix(
    series: &ObservedSeries,
    grid: &LevelGrid,
    k: usize,
) -> Result<Vec<Vec<f64>>, CqError> {
    let table = table_for_lags(series, grid, &[k])?;
    let n1 = grid.taus1().len();
    let n2 = grid.taus2().len();
    Ok((0..n1)
        .map(|i| (0..n2).map(|j| table.value(i, j, 0)).collect())
        .collect())
}

/// Writes a matrix with tau labels on the header row and first column.
pub fn write_matrix_csv<W: Write>(
    mut w: W,
    grid: &LevelGrid,
    matrix: &[Vec<f64>],
) -> Result<(), HeatmapError> {
    let header: Vec<String> = std::iter::once(String::new())
        .chain(grid.taus2().iter().map(|t| t.to_string()))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (tau1, row) in grid.taus1().iter().zip(matrix) {
        let cells: Vec<String> = std::iter::once(tau1.to_string())
            .chain(row.iter().map(|v| v.to_string()))
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`]: `(taus1, taus2, matrix)`.
pub fn read_matrix_csv<R: Read>(
    r: R,
) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>), HeatmapError> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| HeatmapError::Parse("empty file".into()))??;
    let taus2: Vec<f64> = header
        .split(',')
        .skip(1)
        .map(|t| {
            t.parse()
                .map_err(|_| HeatmapError::Parse(format!("bad level {t:?}")))
        })
        .collect::<Result<_, _>>()?;
    let mut taus1 = Vec::new();
    let mut matrix = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let tau1: f64 = cells
            .next()
            .ok_or_else(|| HeatmapError::Parse("missing row label".into()))?
            .parse()
            .map_err(|_| HeatmapError::Parse("bad row label".into()))?;
        let row: Vec<f64> = cells
            .map(|c| {
                c.parse()
                    .map_err(|_| HeatmapError::Parse(format!("bad cell {c:?}")))
            })
            .collect::<Result<_, _>>()?;
        if row.len() != taus2.len() {
            return Err(HeatmapError::Parse(format!(
                "row has {} cells, expected {}",
                row.len(),
                taus2.len()
            )));
        }
        taus1.push(tau1);
        matrix.push(row);
    }
    Ok((taus1, taus2, matrix))
}

/// Renders the matrix as a PNG with a blue-white-red diverging palette on a
/// scale symmetric about zero. The highest target level sits at the top.
/// Degenerate (NaN) cells render gray.
pub fn render_png(
    matrix: &[Vec<f64>],
    path: impl AsRef<Path>,
    cell_px: u32,
) -> Result<(), HeatmapError> {
    let rows = matrix.len().max(1) as u32;
    let cols = matrix.first().map_or(1, |r| r.len().max(1)) as u32;
    let scale = matrix
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold(0.0_f64, |a, &v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let img = image::RgbImage::from_fn(cols * cell_px, rows * cell_px, |px, py| {
        let j = (px / cell_px) as usize;
        let i_top = (py / cell_px) as usize;
        let i = matrix.len() - 1 - i_top;
        let v = matrix[i][j];
        if !v.is_finite() {
            return image::Rgb([128, 128, 128]);
        }
        let t = (v / scale).clamp(-1.0, 1.0);
        let fade = (255.0 * (1.0 - t.abs())) as u8;
        if t >= 0.0 {
            image::Rgb([255, fade, fade])
        } else {
            image::Rgb([fade, fade, 255])
        }
    });
    img.save(path)?;
    Ok(())
}

//! Loading, windowing, vectorization, and min-max normalization of
//! spatio-temporal sensor matrices.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// P channels by T ticks of per-unit voltage readings. Rows are channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalMatrix {
    channel_ids: Vec<String>,
    /// Row-major, `n_channels * n_ticks` entries.
    values: Vec<f64>,
    n_ticks: usize,
    pub tick_seconds: f64,
}

impl SpatioTemporalMatrix {
    /// `rows[p]` holds the full tick series for channel `p`.
    pub fn new(channel_ids: Vec<String>, rows: Vec<Vec<f64>>, tick_seconds: f64) -> Result<Self> {
        if channel_ids.is_empty() || rows.is_empty() {
            return Err(Error::EmptyInput("matrix needs at least one channel".into()));
        }
        if channel_ids.len() != rows.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} channel ids but {} rows",
                channel_ids.len(),
                rows.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &channel_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate channel id {id:?}")));
            }
        }
        let n_ticks = rows[0].len();
        if n_ticks == 0 {
            return Err(Error::EmptyInput("matrix needs at least one tick".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * n_ticks);
        for (p, row) in rows.iter().enumerate() {
            if row.len() != n_ticks {
                return Err(Error::DimensionMismatch(format!(
                    "channel {p} has {} ticks, expected {n_ticks}",
                    row.len()
                )));
            }
            for (t, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite value at channel {p}, tick {}",
                        t + 1
                    )));
                }
            }
            values.extend_from_slice(row);
        }
        if !(tick_seconds > 0.0) {
            return Err(Error::InvalidArgument("tick_seconds must be positive".into()));
        }
        Ok(Self {
            channel_ids,
            values,
            n_ticks,
            tick_seconds,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channel_ids.len()
    }

    pub fn n_ticks(&self) -> usize {
        self.n_ticks
    }

    pub fn channel_ids(&self) -> &[String] {
        &self.channel_ids
    }

    /// Value for channel `p` at 1-based tick `t`.
    pub fn value(&self, p: usize, t: usize) -> f64 {
        self.values[p * self.n_ticks + (t - 1)]
    }

    pub fn channel(&self, p: usize) -> &[f64] {
        &self.values[p * self.n_ticks..(p + 1) * self.n_ticks]
    }
}

/// One moving-window slice of the matrix, ending at `end_tick` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub end_tick: usize,
    /// `window[p]` is channel p over the N_w ticks ending at `end_tick`.
    pub window: Vec<Vec<f64>>,
}

impl Segment {
    pub fn width(&self) -> usize {
        self.window.first().map_or(0, Vec::len)
    }
}

/// Min-max normalized vector; all entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedVector {
    pub values: Vec<f64>,
    /// Set when the source vector was constant (max == min).
    pub degenerate: bool,
}

/// Parse the wide CSV format: header `tick,<id_1>,...,<id_P>`, one row per
/// tick, integer tick first. The result is transposed so channels are rows.
pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<SpatioTemporalMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_matrix_csv(&text)
}

pub fn parse_matrix_csv(text: &str) -> Result<SpatioTemporalMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        row: 1,
        col: 1,
        msg: "empty file".into(),
    })?;
    let mut fields = header.split(',');
    match fields.next() {
        Some("tick") => {}
        other => {
            return Err(Error::Parse {
                row: 1,
                col: 1,
                msg: format!("expected header to start with `tick`, got {other:?}"),
            })
        }
    }
    let channel_ids: Vec<String> = fields.map(|s| s.trim().to_string()).collect();
    if channel_ids.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 2,
            msg: "header has no channel columns".into(),
        });
    }
    let n_channels = channel_ids.len();

    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n_channels];
    let mut n_ticks = 0usize;
    for (idx, line) in lines {
        let row_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_channels + 1 {
            return Err(Error::Parse {
                row: row_no,
                col: cells.len(),
                msg: format!("expected {} cells, found {}", n_channels + 1, cells.len()),
            });
        }
        cells[0].trim().parse::<i64>().map_err(|_| Error::Parse {
            row: row_no,
            col: 1,
            msg: format!("tick {:?} is not an integer", cells[0]),
        })?;
        for (c, cell) in cells[1..].iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                col: c + 2,
                msg: format!("cell {cell:?} is not a number"),
            })?;
            rows[c].push(v);
        }
        n_ticks += 1;
    }
    if n_ticks == 0 {
        return Err(Error::EmptyInput("CSV has no data rows".into()));
    }
    SpatioTemporalMatrix::new(channel_ids, rows, 900.0)
}

/// Write the wide CSV format consumed by [`load_matrix_csv`].
pub fn write_matrix_csv(matrix: &SpatioTemporalMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("tick");
    for id in matrix.channel_ids() {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for t in 1..=matrix.n_ticks() {
        out.push_str(&t.to_string());
        for p in 0..matrix.n_channels() {
            out.push(',');
            out.push_str(&format!("{:.12}", matrix.value(p, t)));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Slice the matrix into windows of width `n_w` advancing by `n_s` ticks.
/// Segment end ticks are `n_w, n_w + n_s, n_w + 2 n_s, ...`.
pub fn window_segments(
    matrix: &SpatioTemporalMatrix,
    n_w: usize,
    n_s: usize,
) -> Result<Vec<Segment>> {
    if n_w == 0 || n_s == 0 {
        return Err(Error::InvalidArgument("window and step must be positive".into()));
    }
    let t = matrix.n_ticks();
    if n_w > t {
        return Err(Error::EmptyInput(format!(
            "window width {n_w} exceeds series length {t}"
        )));
    }
    let count = (t - n_w) / n_s + 1;
    let mut segments = Vec::with_capacity(count);
    for k in 0..count {
        let end_tick = n_w + k * n_s;
        let start = end_tick - n_w; // 0-based column offset
        let window = (0..matrix.n_channels())
            .map(|p| matrix.channel(p)[start..end_tick].to_vec())
            .collect();
        segments.push(Segment { end_tick, window });
    }
    Ok(segments)
}

/// Stack window columns in chronological order (column-major): the oldest
/// tick's P values come first.
pub fn vectorize(segment: &Segment) -> Vec<f64> {
    let p = segment.window.len();
    let n_w = segment.width();
    let mut out = Vec::with_capacity(p * n_w);
    for t in 0..n_w {
        for row in &segment.window {
            out.push(row[t]);
        }
    }
    out
}

/// Min-max normalization onto [0, 1]. A constant vector maps to all 0.5 with
/// the degenerate flag set.
pub fn normalize(x: &[f64]) -> NormalizedVector {
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return NormalizedVector {
            values: vec![0.5; x.len()],
            degenerate: true,
        };
    }
    let range = max - min;
    NormalizedVector {
        values: x.iter().map(|v| (v - min) / range).collect(),
        degenerate: false,
    }
}

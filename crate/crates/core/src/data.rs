//! Grid-cell traffic series: ingestion, imputation, normalization,
//! sliding-window samples, and a synthetic generator for desk-scale runs.
//!
//! File formats (all plain decimal text, comma-separated):
//!
//! * format A (raw records): `interval_index, cell_id, load` — one record per
//!   observed interval, 0-based interval indices, 1-based cell ids laid out
//!   row-major on a square grid. Absent `(interval, cell)` pairs are missing
//!   values.
//! * format B (canonical per-cell dump): `cell_id, row, col, v1..vT`.
//! * imputation sidecar: `cell_id, interval, method` with method `neighbors`
//!   or `series_mean`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Intervals per day at the ten-minute interval duration.
pub const INTERVALS_PER_DAY: usize = 144;

// ---------------------------------------------------------------------------
// Core types
// ---------------------------------------------------------------------------

/// One cell's load series with its position on the grid.
#[derive(Debug, Clone)]
pub struct TrafficSeries {
    pub cell_id: u32,
    /// (row, col) on the square grid.
    pub grid_pos: (usize, usize),
    /// One nonnegative load per interval; NaN marks a missing value until
    /// imputation runs.
    pub loads: Vec<f64>,
    /// True where the value was imputed rather than observed.
    pub imputed: Vec<bool>,
}

impl TrafficSeries {
    pub fn observed(cell_id: u32, grid_pos: (usize, usize), loads: Vec<f64>) -> Self {
        let imputed = vec![false; loads.len()];
        TrafficSeries {
            cell_id,
            grid_pos,
            loads,
            imputed,
        }
    }

    pub fn has_missing(&self) -> bool {
        self.loads.iter().any(|v| v.is_nan())
    }
}

/// A set of series on one square grid.
#[derive(Debug, Clone)]
pub struct TrafficGrid {
    pub cells: Vec<TrafficSeries>,
    pub intervals: usize,
}

impl TrafficGrid {
    pub fn new(mut cells: Vec<TrafficSeries>) -> Result<Self> {
        cells.sort_by_key(|c| c.cell_id);
        let intervals = cells.first().map_or(0, |c| c.loads.len());
        for c in &cells {
            if c.loads.len() != intervals {
                return Err(Error::Invalid(format!(
                    "cell {} has {} intervals, expected {}",
                    c.cell_id,
                    c.loads.len(),
                    intervals
                )));
            }
        }
        Ok(TrafficGrid { cells, intervals })
    }
}

/// Max-min normalized series with the raw extrema retained.
#[derive(Debug, Clone)]
pub struct NormalizedSeries {
    pub cell_id: u32,
    pub values: Vec<f64>,
    pub raw_min: f64,
    pub raw_max: f64,
}

/// One supervised sample: a window of consecutive normalized loads labeled
/// with the next interval's load.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSample {
    pub window: Vec<f64>,
    pub label: f64,
    /// Interval index of the first window element.
    pub start: usize,
}

impl PredictionSample {
    /// Interval index of the label.
    pub fn label_index(&self) -> usize {
        self.start + self.window.len()
    }
}

/// Train/validation/test samples with their source interval ranges.
#[derive(Debug, Clone)]
pub struct SampleSplit {
    pub train: Vec<PredictionSample>,
    pub validation: Vec<PredictionSample>,
    pub test: Vec<PredictionSample>,
    /// Half-open interval ranges backing each part, in series order.
    pub train_range: (usize, usize),
    pub validation_range: (usize, usize),
    pub test_range: (usize, usize),
}

/// How to carve a series into train / validation / test interval ranges.
///
/// Validation is the final `validation_within_train` fraction of the
/// training span; test is strictly after both.
#[derive(Debug, Clone, Copy)]
pub struct SplitConfig {
    pub train_frac: f64,
    pub validation_within_train: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_frac: 0.8,
            validation_within_train: 0.2,
        }
    }
}

impl SampleSplit {
    pub fn build(series: &NormalizedSeries, n_s: usize, cfg: SplitConfig) -> Result<Self> {
        let t = series.values.len();
        let train_end =
            ((t as f64) * cfg.train_frac * (1.0 - cfg.validation_within_train)).floor() as usize;
        let valid_end = ((t as f64) * cfg.train_frac).floor() as usize;
        if train_end <= n_s || valid_end - train_end <= n_s || t - valid_end <= n_s {
            return Err(Error::Config(format!(
                "series of {} intervals too short to split with window {}",
                t, n_s
            )));
        }
        let train = windowize_range(series, n_s, 0, train_end);
        let validation = windowize_range(series, n_s, train_end, valid_end);
        let test = windowize_range(series, n_s, valid_end, t);
        Ok(SampleSplit {
            train,
            validation,
            test,
            train_range: (0, train_end),
            validation_range: (train_end, valid_end),
            test_range: (valid_end, t),
        })
    }
}

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

/// How one missing entry was filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputeMethod {
    /// Mean of the available Moore-neighborhood values at the same interval.
    Neighbors,
    /// Entire neighborhood missing; the series' own observed mean was used.
    SeriesMean,
}

impl ImputeMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ImputeMethod::Neighbors => "neighbors",
            ImputeMethod::SeriesMean => "series_mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedEntry {
    pub cell_id: u32,
    pub interval: usize,
    pub method: ImputeMethod,
}

/// Fills every missing value in the grid and flags it.
///
/// Neighbor means are computed from the original observed values only, so
/// imputed entries never feed other imputations and untouched positions are
/// bit-identical to the input.
pub fn impute_missing(grid: &mut TrafficGrid) -> Result<Vec<ImputedEntry>> {
    let by_pos: HashMap<(usize, usize), usize> = grid
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| (c.grid_pos, i))
        .collect();
    let snapshot: Vec<Vec<f64>> = grid.cells.iter().map(|c| c.loads.clone()).collect();
    let mut filled = Vec::new();
    for ci in 0..grid.cells.len() {
        let (row, col) = grid.cells[ci].grid_pos;
        if !grid.cells[ci].has_missing() {
            continue;
        }
        // Only needed for the no-neighbor fallback; a cell with zero observed
        // values is an error only if that fallback is actually required.
        let own_mean = {
            let (sum, count) = snapshot[ci]
                .iter()
                .filter(|v| !v.is_nan())
                .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            if count > 0 {
                Some(sum / count as f64)
            } else {
                None
            }
        };
        for t in 0..grid.intervals {
            if !snapshot[ci][t].is_nan() {
                continue;
            }
            let mut sum = 0.0;
            let mut count = 0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (row as i64 + dr, col as i64 + dc);
                    if nr < 0 || nc < 0 {
                        continue;
                    }
                    if let Some(&ni) = by_pos.get(&(nr as usize, nc as usize)) {
                        let v = snapshot[ni][t];
                        if !v.is_nan() {
                            sum += v;
                            count += 1;
                        }
                    }
                }
            }
            let (value, method) = if count > 0 {
                (sum / count as f64, ImputeMethod::Neighbors)
            } else {
                let mean = own_mean.ok_or_else(|| {
                    Error::Invalid(format!(
                        "cell {} has no observed values at all",
                        grid.cells[ci].cell_id
                    ))
                })?;
                (mean, ImputeMethod::SeriesMean)
            };
            grid.cells[ci].loads[t] = value;
            grid.cells[ci].imputed[t] = true;
            filled.push(ImputedEntry {
                cell_id: grid.cells[ci].cell_id,
                interval: t,
                method,
            });
        }
    }
    Ok(filled)
}

// ---------------------------------------------------------------------------
// Normalization and windowing
// ---------------------------------------------------------------------------

/// Max-min normalization into [0,1]; a constant series maps to all zeros.
pub fn normalize(series: &TrafficSeries) -> NormalizedSeries {
    assert!(!series.loads.is_empty(), "cannot normalize an empty series");
    let min = series.loads.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = series.loads.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let values = if span == 0.0 {
        vec![0.0; series.loads.len()]
    } else {
        series.loads.iter().map(|v| (v - min) / span).collect()
    };
    NormalizedSeries {
        cell_id: series.cell_id,
        values,
        raw_min: min,
        raw_max: max,
    }
}

/// All stride-1 windows of length `n_s`, each labeled by the value at the
/// subsequent interval. Returns an empty vector when the series is too short.
pub fn windowize(series: &NormalizedSeries, n_s: usize) -> Vec<PredictionSample> {
    windowize_range(series, n_s, 0, series.values.len())
}

/// Windows confined to the half-open interval range `[start, end)`: both the
/// window and its label index stay inside the range, so splits never leak.
pub fn windowize_range(
    series: &NormalizedSeries,
    n_s: usize,
    start: usize,
    end: usize,
) -> Vec<PredictionSample> {
    let end = end.min(series.values.len());
    if start >= end || end - start <= n_s {
        return Vec::new();
    }
    (start..end - n_s)
        .map(|s| PredictionSample {
            window: series.values[s..s + n_s].to_vec(),
            label: series.values[s + n_s],
            start: s,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic traffic
// ---------------------------------------------------------------------------

/// Synthetic grid generator parameters. Scales multiply the per-cell drawn
/// amplitudes, which makes degenerate settings (all zero) reachable for
/// tests without changing the drawing code.
#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub num_cells: usize,
    pub num_intervals: usize,
    pub seed: u64,
    pub amplitude_scale: f64,
    pub noise_scale: f64,
    pub burst_scale: f64,
}

impl SynthConfig {
    pub fn new(num_cells: usize, num_intervals: usize, seed: u64) -> Self {
        SynthConfig {
            num_cells,
            num_intervals,
            seed,
            amplitude_scale: 1.0,
            noise_scale: 1.0,
            burst_scale: 1.0,
        }
    }
}

/// Generates a grid of synthetic cell series: base level + daily sinusoid +
/// weekly modulation + AR(1) noise + occasional bursts.
///
/// Per-cell parameters come from bimodal seeded distributions, so the grid
/// contains distinct populations of smooth, noisy and bursty cells that
/// differ in mean, variance, periodicity strength and burstiness.
pub fn synth_generate(cfg: &SynthConfig) -> Result<TrafficGrid> {
    if cfg.num_cells == 0 || cfg.num_intervals == 0 {
        return Err(Error::Config(
            "synthetic grid needs positive cell and interval counts".into(),
        ));
    }
    let side = (cfg.num_cells as f64).sqrt().ceil() as usize;
    let mut cells = Vec::with_capacity(cfg.num_cells);
    for cell_id in 1..=cfg.num_cells as u32 {
        // Independent stream per cell: the grid is identical no matter how
        // generation is scheduled.
        let mut r = rng::stream(&[cfg.seed, u64::from(cell_id)]);
        let base: f64 = r.gen_range(0.5..5.0);
        // Bimodal periodicity: strongly periodic or almost flat.
        let daily_amp = if r.gen_bool(0.5) {
            r.gen_range(1.0..2.5)
        } else {
            r.gen_range(0.0..0.3)
        } * cfg.amplitude_scale;
        let weekly_amp: f64 = r.gen_range(0.0..0.5) * cfg.amplitude_scale;
        let phase: f64 = r.gen_range(0.0..std::f64::consts::TAU);
        let ar_rho: f64 = r.gen_range(0.3..0.95);
        // Bimodal noise level: quiet or loud cells.
        let noise_sigma = if r.gen_bool(0.5) {
            r.gen_range(0.01..0.06)
        } else {
            r.gen_range(0.15..0.4)
        } * cfg.noise_scale;
        let burst_prob: f64 = if r.gen_bool(0.3) {
            r.gen_range(0.002..0.01)
        } else {
            0.0
        };
        let burst_size: f64 = r.gen_range(0.5..3.0) * cfg.burst_scale;

        let day = INTERVALS_PER_DAY as f64;
        let week = 7.0 * day;
        let mut ar = 0.0;
        let mut loads = Vec::with_capacity(cfg.num_intervals);
        for t in 0..cfg.num_intervals {
            let tf = t as f64;
            let weekly = 1.0 + weekly_amp * (std::f64::consts::TAU * tf / week).sin();
            let daily = daily_amp * weekly * (std::f64::consts::TAU * tf / day + phase).sin();
            let eps: f64 = {
                let u1: f64 = r.gen::<f64>().max(1e-300);
                let u2: f64 = r.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            };
            ar = ar_rho * ar + noise_sigma * eps;
            let burst = if burst_prob > 0.0 && r.gen_bool(burst_prob) {
                burst_size * r.gen::<f64>()
            } else {
                0.0
            };
            loads.push((base + daily + ar + burst).max(0.0));
        }
        let id0 = (cell_id - 1) as usize;
        cells.push(TrafficSeries::observed(
            cell_id,
            (id0 / side, id0 % side),
            loads,
        ));
    }
    TrafficGrid::new(cells)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Reads format A (`interval_index, cell_id, load`) into a grid with NaN
/// holes for absent records. Cell ids map row-major onto a square grid whose
/// side is the smallest square covering the largest id.
pub fn read_format_a(path: &Path) -> Result<TrafficGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records: Vec<(usize, u32, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::parse(path, lineno, "expected `interval, cell, load`"));
        }
        let interval: usize = parts[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad interval index"))?;
        let cell: u32 = parts[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad cell id"))?;
        let load: f64 = parts[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad load value"))?;
        if cell == 0 {
            return Err(Error::parse(path, lineno, "cell ids are 1-based"));
        }
        if !load.is_finite() || load < 0.0 {
            return Err(Error::parse(
                path,
                lineno,
                "load must be finite and nonnegative",
            ));
        }
        records.push((interval, cell, load));
    }
    if records.is_empty() {
        return Err(Error::Invalid(format!("{}: no records", path.display())));
    }
    let intervals = records.iter().map(|r| r.0).max().unwrap() + 1;
    let max_cell = records.iter().map(|r| r.1).max().unwrap();
    let side = (max_cell as f64).sqrt().ceil() as usize;
    let mut series: HashMap<u32, Vec<f64>> = HashMap::new();
    for (interval, cell, load) in records {
        let entry = series
            .entry(cell)
            .or_insert_with(|| vec![f64::NAN; intervals]);
        entry[interval] = load;
    }
    let mut ids: Vec<u32> = series.keys().copied().collect();
    ids.sort_unstable();
    let cells = ids
        .into_iter()
        .map(|id| {
            let id0 = (id - 1) as usize;
            TrafficSeries::observed(id, (id0 / side, id0 % side), series.remove(&id).unwrap())
        })
        .collect();
    TrafficGrid::new(cells)
}

/// Writes format B: `cell_id, row, col, v1..vT`, one line per cell.
pub fn write_format_b(path: &Path, grid: &TrafficGrid) -> Result<()> {
    let mut out = String::new();
    for c in &grid.cells {
        out.push_str(&format!("{},{},{}", c.cell_id, c.grid_pos.0, c.grid_pos.1));
        for v in &c.loads {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads format B back into a grid.
pub fn read_format_b(path: &Path) -> Result<TrafficGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cells = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() < 4 {
            return Err(Error::parse(path, lineno, "expected `cell, row, col, v1..`"));
        }
        let cell_id: u32 = parts[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad cell id"))?;
        let row: usize = parts[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad row"))?;
        let col: usize = parts[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad col"))?;
        let loads = parts[3..]
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("bad load '{p}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        cells.push(TrafficSeries::observed(cell_id, (row, col), loads));
    }
    TrafficGrid::new(cells)
}

/// Writes the imputation sidecar: `cell_id, interval, method`.
pub fn write_impute_sidecar(path: &Path, entries: &[ImputedEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{},{},{}\n",
            e.cell_id,
            e.interval,
            e.method.as_str()
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Sample autocorrelation at the given lag: Pearson correlation between the
/// series and its lag-shifted self. Degenerate inputs (too short, or zero
/// variance in either segment) report 0.
pub fn autocorrelation(values: &[f64], lag: usize) -> f64 {
    if values.len() <= lag + 1 {
        return 0.0;
    }
    let a = &values[..values.len() - lag];
    let b = &values[lag..];
    // Exactly-constant segments are degenerate by definition; the float
    // variance below could be a spurious nonzero.
    if a.iter().all(|&x| x == a[0]) || b.iter().all(|&x| x == b[0]) {
        return 0.0;
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - mean_a) * (y - mean_b);
        var_a += (x - mean_a) * (x - mean_a);
        var_b += (y - mean_b) * (y - mean_b);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return 0.0;
    }
    cov / (var_a.sqrt() * var_b.sqrt())
}

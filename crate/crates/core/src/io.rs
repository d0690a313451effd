//! CSV and JSON readers and writers for traces, scans, histograms, wavelet
//! maps and fluence series.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{FluencePoint, TimeFrequencyMap};
use crate::detector::{Histogram, ScanResult};
use crate::error::Result;
use crate::probe::TracePoint;

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    delay_ps: f64,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictRow {
    delay_ps: f64,
    mean_ny: f64,
    var_ny: f64,
}

#[derive(Debug, Serialize)]
struct ScanRow {
    delay_ps: f64,
    dt_mean_v: f64,
    dt_var_v2: f64,
}

#[derive(Debug, Serialize)]
struct PerScanRow {
    scan_index: usize,
    delay_ps: f64,
    dt_mean_v: f64,
    dt_var_v2: f64,
}

#[derive(Debug, Serialize)]
struct HistogramRow {
    bin_left_v: f64,
    count: u64,
}

#[derive(Debug, Serialize)]
struct WaveletRow {
    delay_ps: f64,
    freq_thz: f64,
    amplitude: f64,
    power: f64,
}

#[derive(Debug, Serialize)]
struct ShotNoiseRow {
    power_mw: f64,
    variance_v2: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FluenceRow {
    fluence_mj_cm2: f64,
    a2omega: f64,
    sigma: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `(delay_ps, value)` trace.
pub fn read_trace_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<TraceRow>()
        .map(|row| Ok(row.map(|t| (t.delay_ps, t.value))?))
        .collect()
}

pub fn write_trace_csv(path: &Path, trace: &[(f64, f64)]) -> Result<()> {
    write_rows(path, trace.iter().map(|&(delay_ps, value)| TraceRow { delay_ps, value }))
}

/// Noiseless predicted trace: `delay_ps, mean_ny, var_ny`.
pub fn write_prediction_csv(path: &Path, trace: &[TracePoint]) -> Result<()> {
    write_rows(
        path,
        trace.iter().map(|p| PredictRow { delay_ps: p.tau, mean_ny: p.mean_ny, var_ny: p.var_ny }),
    )
}

/// Scan-averaged statistics: `delay_ps, dt_mean_v, dt_var_v2`.
pub fn write_scan_csv(path: &Path, scan: &ScanResult) -> Result<()> {
    write_rows(
        path,
        (0..scan.delays.len()).map(|d| ScanRow {
            delay_ps: scan.delays[d],
            dt_mean_v: scan.dt_mean[d],
            dt_var_v2: scan.dt_var[d],
        }),
    )
}

/// Per-scan statistics: `scan_index, delay_ps, dt_mean_v, dt_var_v2`.
pub fn write_per_scan_csv(path: &Path, scan: &ScanResult) -> Result<()> {
    write_rows(
        path,
        scan.per_scan_mean.iter().zip(&scan.per_scan_var).enumerate().flat_map(|(l, (means, vars))| {
            scan.delays.iter().enumerate().map(move |(d, &delay_ps)| PerScanRow {
                scan_index: l,
                delay_ps,
                dt_mean_v: means[d],
                dt_var_v2: vars[d],
            })
        }),
    )
}

pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    write_rows(
        path,
        hist.bin_left_v.iter().zip(&hist.counts).map(|(&bin_left_v, &count)| HistogramRow { bin_left_v, count }),
    )
}

/// Long-format wavelet map: `delay_ps, freq_thz, amplitude, power`.
pub fn write_wavelet_csv(path: &Path, map: &TimeFrequencyMap) -> Result<()> {
    write_rows(
        path,
        map.freqs.iter().zip(&map.amplitude).flat_map(|(&freq_thz, row)| {
            map.delays.iter().zip(row).map(move |(&delay_ps, &a)| WaveletRow {
                delay_ps,
                freq_thz,
                amplitude: a,
                power: a * a,
            })
        }),
    )
}

/// Shot-noise calibration points: `power_mw, variance_v2`.
pub fn write_shot_noise_csv(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    write_rows(path, points.iter().map(|&(power_mw, variance_v2)| ShotNoiseRow { power_mw, variance_v2 }))
}

pub fn read_fluence_csv(path: &Path) -> Result<Vec<FluencePoint>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<FluenceRow>()
        .map(|row| {
            let row = row?;
            Ok(FluencePoint { fluence: row.fluence_mj_cm2, a2omega: row.a2omega, sigma: row.sigma })
        })
        .collect()
}

pub fn write_fluence_csv(path: &Path, points: &[FluencePoint]) -> Result<()> {
    write_rows(
        path,
        points.iter().map(|p| FluenceRow { fluence_mj_cm2: p.fluence, a2omega: p.a2omega, sigma: p.sigma }),
    )
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

//! CSV artifacts. Floats are written with 17 significant digits so they
//! read back bit-exact.

use std::fs::File;
use std::path::Path;

use rckf_core::machine::{MachineState, Measurement};
use rckf_core::metrics::MetricsReport;

use crate::error::CliError;

pub const TRUTH_HEADER: [&str; 5] = ["t", "delta_rad", "delta_omega_pu", "eqp_pu", "edp_pu"];
pub const MEASUREMENT_HEADER: [&str; 4] = ["t", "delta_z_rad", "omega_z_pu", "pe_z_pu"];
pub const METRICS_HEADER: [&str; 3] = ["variable", "epsilon1", "epsilon2"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Writes a header and string rows.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn write_states(path: &Path, times: &[f64], states: &[MachineState]) -> Result<(), CliError> {
    write_rows(
        path,
        &TRUTH_HEADER,
        times.iter().zip(states).map(|(t, s)| {
            std::iter::once(fmt_f64(*t))
                .chain(s.to_array().map(fmt_f64))
                .collect::<Vec<_>>()
        }),
    )
}

pub fn write_measurements(path: &Path, times: &[f64], series: &[Measurement]) -> Result<(), CliError> {
    write_rows(
        path,
        &MEASUREMENT_HEADER,
        times.iter().zip(series).map(|(t, m)| {
            std::iter::once(fmt_f64(*t))
                .chain(m.to_array().map(fmt_f64))
                .collect::<Vec<_>>()
        }),
    )
}

pub fn write_metrics(path: &Path, report: &MetricsReport) -> Result<(), CliError> {
    write_rows(
        path,
        &METRICS_HEADER,
        report
            .variables
            .iter()
            .map(|v| vec![v.variable.name().to_string(), fmt_opt(v.epsilon1), fmt_f64(v.epsilon2)]),
    )
}

/// Reads a measurement file and checks it against the time grid.
pub fn read_measurements(path: &Path, times: &[f64]) -> Result<Vec<Measurement>, CliError> {
    let bad = |reason: String| CliError::Input {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() != MEASUREMENT_HEADER.len() {
        return Err(bad(format!(
            "expected {} columns ({}), found {}",
            MEASUREMENT_HEADER.len(),
            MEASUREMENT_HEADER.join(","),
            header.len()
        )));
    }
    let mut out = Vec::with_capacity(times.len());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != MEASUREMENT_HEADER.len() {
            return Err(bad(format!("row {} has {} columns", i + 1, rec.len())));
        }
        let mut vals = [0.0_f64; 4];
        for (j, field) in rec.iter().enumerate() {
            vals[j] = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: `{field}` is not a number", i + 1)))?;
        }
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(bad(format!("row {} has non-finite values", i + 1)));
        }
        out.push((vals[0], Measurement::from_array([vals[1], vals[2], vals[3]])));
    }
    if out.len() != times.len() {
        return Err(bad(format!("expected {} rows on the time grid, found {}", times.len(), out.len())));
    }
    for (k, ((t, _), grid)) in out.iter().zip(times).enumerate() {
        if (t - grid).abs() > 1e-9 * grid.abs().max(1.0) {
            return Err(bad(format!("row {} has t = {t}, grid expects {grid}", k + 1)));
        }
    }
    Ok(out.into_iter().map(|(_, m)| m).collect())
}

//! CSV input and output. Floats are written with 17 significant digits and
//! every file starts with `# `-prefixed header lines echoing the config.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::calibration::CalibrationReport;
use crate::diagnostics::Binning;
use crate::samplers::{Chain, SampleSet};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Write(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: row {row}: {message}")]
    Parse { path: PathBuf, row: usize, message: String },
}

/// `x` with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header block: every line of `text` prefixed with `# `.
pub fn comment_block(text: &str) -> String {
    text.lines().map(|l| format!("# {l}\n")).collect()
}

pub fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::File { path: dir.to_path_buf(), source })?;
    }
    let f = File::create(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })?;
    Ok(BufWriter::new(f))
}

fn csv_writer<W: Write>(mut out: W, header: &str) -> Result<csv::Writer<W>, IoError> {
    out.write_all(comment_block(header).as_bytes())?;
    Ok(csv::Writer::from_writer(out))
}

/// Read a series from the first column of a CSV file. `#` lines and a
/// non-numeric first row are skipped.
pub fn read_series(path: &Path) -> Result<Vec<f64>, IoError> {
    let file = File::open(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let Some(field) = record.get(0).filter(|f| !f.is_empty()) else { continue };
        match field.parse::<f64>() {
            Ok(x) if x.is_finite() => out.push(x),
            Err(_) if row == 0 => continue,
            _ => {
                return Err(IoError::Parse {
                    path: path.to_path_buf(),
                    row: row + 1,
                    message: format!("not a finite number: {field:?}"),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_series<W: Write>(out: W, data: &[f64], header: &str) -> Result<(), IoError> {
    let mut w = csv_writer(out, header)?;
    w.write_record(["x"])?;
    for &x in data {
        w.write_record([fmt17(x)])?;
    }
    w.flush()?;
    Ok(())
}

/// Rejection-sampler rows: index, parameters, statistics and decision.
pub fn write_samples<W: Write>(out: W, set: &SampleSet, names: &[&str], header: &str) -> Result<(), IoError> {
    let mut w = csv_writer(out, header)?;
    let mut cols = vec!["row".to_string()];
    cols.extend(names.iter().map(|n| n.to_string()));
    cols.extend((1..=set.k).map(|k| format!("z{k}")));
    cols.push("accepted".into());
    w.write_record(&cols)?;
    for r in 0..set.rows() {
        let mut rec = vec![r.to_string()];
        rec.extend(set.theta(r).iter().map(|&x| fmt17(x)));
        rec.extend(set.z(r).iter().map(|&x| fmt17(x)));
        rec.push((set.accepted[r] as u8).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// All chains in one file, with a `chain` column and `kept = 0` during
/// burn-in.
pub fn write_chains<W: Write>(out: W, chains: &[Chain], names: &[&str], header: &str) -> Result<(), IoError> {
    let mut w = csv_writer(out, header)?;
    let k = chains.first().map_or(0, |c| c.k);
    let mut cols = vec!["chain".to_string(), "iteration".to_string()];
    cols.extend(names.iter().map(|n| n.to_string()));
    cols.extend((1..=k).map(|j| format!("z{j}")));
    cols.push("kept".into());
    w.write_record(&cols)?;
    for (c, chain) in chains.iter().enumerate() {
        for i in 0..chain.len() {
            let mut rec = vec![c.to_string(), i.to_string()];
            rec.extend(chain.theta(i).iter().map(|&x| fmt17(x)));
            rec.extend(chain.z(i).iter().map(|&x| fmt17(x)));
            rec.push(((i >= chain.burn_in) as u8).to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_calibration<W: Write>(out: W, reports: &[CalibrationReport], header: &str) -> Result<(), IoError> {
    let mut w = csv_writer(out, header)?;
    w.write_record([
        "test", "kind", "n", "m", "alpha", "tau_minus", "tau_plus", "c_minus", "c_plus", "predicted_kl",
        "power_at_rho_star", "power_mode", "converged",
    ])?;
    for (i, r) in reports.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.kind.name().to_string(),
            r.n.to_string(),
            r.m.to_string(),
            fmt17(r.alpha),
            fmt17(r.tau_minus),
            fmt17(r.tau_plus),
            fmt17(r.critical.c_minus),
            fmt17(r.critical.c_plus),
            fmt17(r.predicted_kl),
            fmt17(r.power_at_rho_star),
            fmt17(r.power_mode),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Power curve rows `(test, rho, power)`.
pub fn write_power_curve<W: Write>(out: W, rows: &[(usize, f64, f64)], header: &str) -> Result<(), IoError> {
    let mut w = csv_writer(out, header)?;
    w.write_record(["test", "rho", "power"])?;
    for &(t, rho, p) in rows {
        w.write_record([t.to_string(), fmt17(rho), fmt17(p)])?;
    }
    w.flush()?;
    Ok(())
}

/// Cell masses of a posterior on `binning`, one row per cell.
pub fn write_density_grid<W: Write>(
    out: W,
    binning: &Binning,
    masses: &[f64],
    names: &[&str],
    header: &str,
) -> Result<(), IoError> {
    let header = format!("{header}\nbinning_sha256 = \"{}\"", binning.hash());
    let mut w = csv_writer(out, &header)?;
    let mut cols = vec!["cell".to_string()];
    for n in names {
        cols.push(format!("{n}_lo"));
        cols.push(format!("{n}_hi"));
    }
    cols.push("mass".into());
    w.write_record(&cols)?;
    for (i, &m) in masses.iter().enumerate() {
        let (lo, hi) = binning.cell(i);
        let mut rec = vec![i.to_string()];
        for (l, h) in lo.iter().zip(&hi) {
            rec.push(fmt17(*l));
            rec.push(fmt17(*h));
        }
        rec.push(fmt17(m));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

//! CSV and JSON exchange files.
//!
//! Every CSV has a header row. Reals are written as `{:.16e}` (17 significant
//! digits, exact round trip). Complex matrices put the real and imaginary part
//! of each entry in adjacent columns: `c0_re,c0_im,c1_re,...`.

use std::fs;
use std::path::Path;

use beamforge::{CMatrix, Complex64, CosineCoeffs, MtsfmParams, WaveformSet};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

fn reader(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))
}

pub fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn parse_f64(path: &Path, line: usize, text: &str) -> CliResult<f64> {
    text.parse::<f64>()
        .map_err(|_| CliError::Input(format!("{}: line {line}: `{text}` is not a number", path.display())))
}

fn records(path: &Path, width: usize) -> CliResult<Vec<Vec<f64>>> {
    let mut r = reader(path)?;
    let headers = r.headers().map_err(|e| CliError::io(path, e))?.len();
    if headers != width {
        return Err(CliError::Input(format!(
            "{}: expected {width} columns, header has {headers}",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let line = k + 2;
        let row = rec.iter().map(|t| parse_f64(path, line, t)).collect::<CliResult<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

/// `index,r` rows for `l = 0..M-1`.
pub fn write_coeffs(path: &Path, c: &CosineCoeffs) -> CliResult<()> {
    let header = ["index".to_string(), "r".to_string()];
    write_rows(
        path,
        &header,
        c.as_slice().iter().enumerate().map(|(l, v)| vec![l.to_string(), fmt(*v)]),
    )
}

pub fn read_coeffs(path: &Path) -> CliResult<CosineCoeffs> {
    let rows = records(path, 2)?;
    let mut r = Vec::with_capacity(rows.len());
    for (l, row) in rows.iter().enumerate() {
        if row[0] != l as f64 {
            return Err(CliError::Input(format!(
                "{}: line {}: expected index {l}, found {}",
                path.display(),
                l + 2,
                row[0]
            )));
        }
        r.push(row[1]);
    }
    CosineCoeffs::new(r).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn write_matrix(path: &Path, a: &CMatrix) -> CliResult<()> {
    let header: Vec<String> = (0..a.cols()).flat_map(|c| [format!("c{c}_re"), format!("c{c}_im")]).collect();
    write_rows(
        path,
        &header,
        (0..a.rows()).map(|i| a.row(i).iter().flat_map(|z| [fmt(z.re), fmt(z.im)]).collect()),
    )
}

pub fn read_matrix(path: &Path) -> CliResult<CMatrix> {
    let header_len = reader(path)?.headers().map_err(|e| CliError::io(path, e))?.len();
    if header_len == 0 || header_len % 2 != 0 {
        return Err(CliError::Input(format!(
            "{}: complex matrix needs an even number of columns, found {header_len}",
            path.display()
        )));
    }
    let cols = header_len / 2;
    let rows = records(path, header_len)?;
    let data: Vec<Complex64> = rows
        .iter()
        .flat_map(|row| row.chunks(2).map(|p| Complex64::new(p[0], p[1])))
        .collect();
    CMatrix::from_vec(rows.len(), cols, data).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// `M` rows of `P` phase coefficients.
pub fn write_alpha(path: &Path, p: &MtsfmParams) -> CliResult<()> {
    let header: Vec<String> = (1..=p.p).map(|h| format!("p{h}")).collect();
    write_rows(path, &header, (0..p.m).map(|m| p.alpha_row(m).iter().map(|v| fmt(*v)).collect()))
}

/// One row per sample: `waveform,sample,re,im`.
pub fn write_waveforms(path: &Path, x: &WaveformSet) -> CliResult<()> {
    let header = ["waveform", "sample", "re", "im"].map(String::from);
    let rows = (0..x.count()).flat_map(|m| {
        x.waveform(m)
            .iter()
            .enumerate()
            .map(move |(n, z)| vec![m.to_string(), n.to_string(), fmt(z.re), fmt(z.im)])
    });
    write_rows(path, &header, rows)
}

pub fn read_waveforms(path: &Path) -> CliResult<WaveformSet> {
    let rows = records(path, 4)?;
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let count = rows.iter().map(|r| r[0]).fold(-1.0f64, f64::max) + 1.0;
    if rows.is_empty() || count < 1.0 {
        return Err(bad("no samples".into()));
    }
    let count = count as usize;
    if rows.len() % count != 0 {
        return Err(bad(format!("{} rows do not split into {count} equal waveforms", rows.len())));
    }
    let n = rows.len() / count;
    let mut data = vec![Complex64::new(0.0, 0.0); rows.len()];
    let mut seen = vec![false; rows.len()];
    for r in &rows {
        let (m, k) = (r[0], r[1]);
        if m.fract() != 0.0 || k.fract() != 0.0 || m < 0.0 || k < 0.0 || k as usize >= n {
            return Err(bad(format!("bad waveform/sample index pair ({m}, {k})")));
        }
        let idx = m as usize * n + k as usize;
        if seen[idx] {
            return Err(bad(format!("duplicate sample ({m}, {k})")));
        }
        seen[idx] = true;
        data[idx] = Complex64::new(r[2], r[3]);
    }
    let samples = CMatrix::from_vec(count, n, data).map_err(|e| bad(e.to_string()))?;
    WaveformSet::from_samples(samples).map_err(|e| bad(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("R.csv");
        let a = CMatrix::from_fn(3, 3, |i, k| Complex64::new(1.0 / (1 + i + k) as f64, (i as f64 - k as f64) * 0.1));
        write_matrix(&path, &a).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), a);
    }

    #[test]
    fn coeffs_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.csv");
        let c = CosineCoeffs::new(vec![0.1, -1.0 / 3.0, 2e-17]).unwrap();
        write_coeffs(&path, &c).unwrap();
        assert_eq!(read_coeffs(&path).unwrap(), c);
    }

    #[test]
    fn rejects_shuffled_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.csv");
        fs::write(&path, "index,r\n1,0.5\n0,1.0\n").unwrap();
        assert!(read_coeffs(&path).is_err());
    }
}

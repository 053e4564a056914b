//! Sample CSV files with header `y,x1,…,xd,p1,…,pM`.

use std::path::Path;

use mixreg::MixtureSample;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

/// Largest row-sum drift that is silently rescaled (with a warning).
pub const RENORMALIZE_DRIFT: f64 = 1e-2;

#[derive(Debug)]
pub struct LoadedSample {
    pub sample: MixtureSample,
    /// 0-based data rows whose probabilities were rescaled to sum to 1.
    pub renormalized: Vec<usize>,
}

/// Counts `x*` and `p*` columns, insisting on the exact order.
fn parse_header(header: &csv::StringRecord) -> CliResult<(usize, usize)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.first() != Some(&"y") {
        return Err(CliError::Input("header: first column must be `y`".into()));
    }
    let d = names[1..].iter().take_while(|c| c.starts_with('x')).count();
    let m = names.len() - 1 - d;
    for (i, name) in names[1..=d].iter().enumerate() {
        if *name != format!("x{}", i + 1) {
            return Err(CliError::Input(format!(
                "header: expected `x{}`, found `{name}`",
                i + 1
            )));
        }
    }
    for (i, name) in names[1 + d..].iter().enumerate() {
        if *name != format!("p{}", i + 1) {
            return Err(CliError::Input(format!(
                "header: expected `p{}`, found `{name}`",
                i + 1
            )));
        }
    }
    if d == 0 || m == 0 {
        return Err(CliError::Input(
            "header: need at least one `x` and one `p` column".into(),
        ));
    }
    Ok((d, m))
}

pub fn read_sample(path: &Path) -> CliResult<LoadedSample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::io(path.display(), e))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    let (d, m) = parse_header(&header)?;
    let width = 1 + d + m;

    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut p = Vec::new();
    for (j, record) in reader.records().enumerate() {
        let line = j + 2;
        let record = record.map_err(|e| CliError::Input(format!("line {line}: {e}")))?;
        if record.len() != width {
            return Err(CliError::Input(format!(
                "line {line}: expected {width} fields, found {}",
                record.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Input(format!(
                    "line {line}: `{}` is not a number ({field:?})",
                    &header[c]
                ))
            })?;
            match c {
                0 => y.push(v),
                c if c <= d => x.push(v),
                _ => p.push(v),
            }
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    let mut sample = MixtureSample::new(
        DVector::from_vec(y),
        DMatrix::from_row_slice(n, d, &x),
        DMatrix::from_row_slice(n, m, &p),
    )?;
    let renormalized = sample.renormalize_rows(RENORMALIZE_DRIFT);
    let violations = sample.validate();
    if let Some(first) = violations.first() {
        // Data rows start on line 2.
        let msg = match first.row {
            Some(row) => format!("line {}: {}", row + 2, first.rule),
            None => first.to_string(),
        };
        let more = violations.len() - 1;
        return Err(CliError::Input(if more > 0 {
            format!("{msg} (and {more} more problems)")
        } else {
            msg
        }));
    }
    Ok(LoadedSample {
        sample,
        renormalized,
    })
}

/// Writes with 17 significant digits so that reading back is exact.
pub fn write_sample(path: &Path, s: &MixtureSample) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::io(path.display(), e))?;
    let d = s.dims.d;
    let m = s.dims.m;
    let mut header = vec!["y".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("p{i}")));
    writer
        .write_record(&header)
        .map_err(|e| CliError::io(path.display(), e))?;
    let mut row = Vec::with_capacity(1 + d + m);
    for j in 0..s.n() {
        row.clear();
        row.push(format!("{:.16e}", s.y[j]));
        row.extend(s.x.row(j).iter().map(|v| format!("{v:.16e}")));
        row.extend(s.p.row(j).iter().map(|v| format!("{v:.16e}")));
        writer
            .write_record(&row)
            .map_err(|e| CliError::io(path.display(), e))?;
    }
    writer.flush().map_err(|e| CliError::io(path.display(), e))
}

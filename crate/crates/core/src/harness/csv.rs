//! CSV output of BER sweeps.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::{BerRecord, Detector, Scheme};

pub const CSV_HEADER: &str = "snr_db,scheme,detector,trials,bit_errors,ber,mean_alloc";

/// One CSV row. This is the subset of [`BerRecord`] that the file carries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub detector: Detector,
    pub trials: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub mean_alloc: Option<Vec<f64>>,
}

impl From<&BerRecord> for CsvRow {
    fn from(r: &BerRecord) -> Self {
        CsvRow {
            snr_db: r.snr_db,
            scheme: r.scheme,
            detector: r.detector,
            trials: r.trials,
            bit_errors: r.bit_errors,
            ber: r.ber,
            mean_alloc: r.mean_allocation.clone(),
        }
    }
}

/// Formats with `digits` significant digits and no trailing zeros.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), x);
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..(digits as i32)).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn row_line(r: &CsvRow) -> String {
    let alloc = r
        .mean_alloc
        .as_ref()
        .map(|a| {
            a.iter()
                .map(|x| format_sig(*x, 6))
                .collect::<Vec<_>>()
                .join("/")
        })
        .unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{}",
        format_sig(r.snr_db, 6),
        r.scheme,
        r.detector,
        r.trials,
        r.bit_errors,
        format_sig(r.ber, 6),
        alloc
    )
}

pub fn emit_csv<W: Write>(records: &[BerRecord], sink: &mut W) -> std::io::Result<()> {
    writeln!(sink, "{CSV_HEADER}")?;
    for r in records {
        writeln!(sink, "{}", row_line(&CsvRow::from(r)))?;
    }
    sink.flush()
}

pub fn emit_csv_to_path(records: &[BerRecord], path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    emit_csv(records, &mut w).map_err(io)
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Csv {
                line: 1,
                message: "missing header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Csv {
            line: i + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| err(format!("'{s}': {e}")));
        let mean_alloc = if f[6].is_empty() {
            None
        } else {
            Some(f[6].split('/').map(num).collect::<Result<Vec<_>>>()?)
        };
        rows.push(CsvRow {
            snr_db: num(f[0])?,
            scheme: f[1].parse().map_err(err)?,
            detector: f[2].parse().map_err(err)?,
            trials: int(f[3])?,
            bit_errors: int(f[4])?,
            ber: num(f[5])?,
            mean_alloc,
        });
    }
    Ok(rows)
}

//! CSV and JSON persistence for run records, sweep summaries and fits.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{FitResult, Peak, SeriesSummary};
use crate::evolve::{RecordRow, RunRecord};
use crate::{Error, Result, C64};

/// Column order of a series CSV.
pub const SERIES_COLUMNS: [&str; 9] = [
    "t",
    "entropy_mid",
    "norm_factor",
    "gauss_min",
    "gauss_max",
    "energy_re",
    "energy_im",
    "max_bond",
    "discarded_weight",
];

/// Column order of a sweep summary CSV.
pub const SUMMARY_COLUMNS: [&str; 9] = [
    "value",
    "saturation",
    "spread",
    "saturated",
    "final_value",
    "time_average",
    "peak_t",
    "peak_value",
    "peak_prominence",
];

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes series rows, flushing after each so that an interrupted run leaves
/// a readable prefix.
pub struct SeriesWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> SeriesWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(SERIES_COLUMNS)?;
        inner.flush()?;
        Ok(SeriesWriter { inner })
    }

    pub fn write_row(&mut self, row: &RecordRow) -> Result<()> {
        self.inner.write_record([
            fmt_f64(row.t),
            fmt_f64(row.entropy_mid),
            fmt_f64(row.norm_factor),
            fmt_f64(row.gauss_min),
            fmt_f64(row.gauss_max),
            fmt_f64(row.energy.re),
            fmt_f64(row.energy.im),
            row.max_bond.to_string(),
            fmt_f64(row.discarded_weight),
        ])?;
        self.inner.flush()?;
        Ok(())
    }
}

impl SeriesWriter<std::fs::File> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(std::fs::File::create(path)?)
    }
}

/// Reads a series CSV back into a record (without per-bond entropies).
pub fn read_series<R: Read>(r: R) -> Result<RunRecord> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SERIES_COLUMNS {
        return Err(Error::Config(format!("unexpected series header {header:?}")));
    }
    let mut record = RunRecord::default();
    for row in rdr.records() {
        let row = row?;
        let f = |k: usize| -> Result<f64> {
            row[k]
                .parse()
                .map_err(|_| Error::Config(format!("bad number '{}' in column {}", &row[k], SERIES_COLUMNS[k])))
        };
        record.push(RecordRow {
            t: f(0)?,
            entropy_mid: f(1)?,
            norm_factor: f(2)?,
            gauss_min: f(3)?,
            gauss_max: f(4)?,
            energy: C64::new(f(5)?, f(6)?),
            max_bond: row[7]
                .parse()
                .map_err(|_| Error::Config(format!("bad bond dimension '{}'", &row[7])))?,
            discarded_weight: f(8)?,
            entropies: None,
        });
    }
    Ok(record)
}

pub fn read_series_file(path: &Path) -> Result<RunRecord> {
    read_series(std::fs::File::open(path)?)
}

/// One sweep point as stored in a summary CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryRow {
    pub value: f64,
    pub summary: SeriesSummary,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes summary rows sorted by sweep value.
pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_COLUMNS)?;
    for r in &rows {
        let s = &r.summary;
        out.write_record([
            fmt_f64(r.value),
            fmt_f64(s.saturation.value),
            fmt_f64(s.saturation.spread),
            s.saturated.to_string(),
            fmt_f64(s.saturation.final_value),
            fmt_f64(s.time_average),
            opt(s.peak.map(|p| p.t_peak)),
            opt(s.peak.map(|p| p.value)),
            opt(s.peak.map(|p| p.prominence)),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(r: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SUMMARY_COLUMNS {
        return Err(Error::Config(format!("unexpected summary header {header:?}")));
    }
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |k: usize| -> Result<f64> {
            row[k]
                .parse()
                .map_err(|_| Error::Config(format!("bad number '{}' in column {}", &row[k], SUMMARY_COLUMNS[k])))
        };
        let peak = if row[6].is_empty() {
            None
        } else {
            Some(Peak { t_peak: num(6)?, value: num(7)?, prominence: num(8)? })
        };
        rows.push(SummaryRow {
            value: num(0)?,
            summary: SeriesSummary {
                time_average: num(5)?,
                saturation: crate::analysis::Saturation {
                    value: num(1)?,
                    spread: num(2)?,
                    final_value: num(4)?,
                    tail_samples: 0,
                },
                saturated: row[3]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad flag '{}'", &row[3])))?,
                peak,
            },
        });
    }
    Ok(rows)
}

/// Fit output: the result together with the data it was fitted to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub result: FitResult,
    pub inputs: Vec<(f64, f64)>,
}

pub fn write_fit_json<W: Write>(w: W, report: &FitReport) -> Result<()> {
    serde_json::to_writer_pretty(w, report)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{summarize_series, PeakOptions};

    fn row(t: f64) -> RecordRow {
        RecordRow {
            t,
            entropy_mid: 0.1 + t / 3.0,
            norm_factor: 1.0 - 1e-3 * t,
            gauss_min: 1.0 - 1e-12,
            gauss_max: 1.0,
            energy: C64::new(-8.5, 1e-3 * t),
            max_bond: 4,
            discarded_weight: 1e-17,
            entropies: None,
        }
    }

    #[test]
    fn series_round_trip_is_exact() {
        let mut buf = Vec::new();
        {
            let mut w = SeriesWriter::new(&mut buf).unwrap();
            for k in 0..5 {
                w.write_row(&row(0.1 * k as f64)).unwrap();
            }
        }
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,entropy_mid,norm_factor,gauss_min,gauss_max,energy_re,energy_im,max_bond,discarded_weight\n"));
        let rec = read_series(buf.as_slice()).unwrap();
        assert_eq!(rec.len(), 5);
        for k in 0..5 {
            let (a, b) = (rec.row(k), row(0.1 * k as f64));
            assert_eq!(a.entropy_mid.to_bits(), b.entropy_mid.to_bits());
            assert_eq!(a.energy, b.energy);
            assert_eq!(a.t.to_bits(), b.t.to_bits());
        }
    }

    #[test]
    fn summary_sorted_and_readable() {
        let t: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let v = vec![0.5; 100];
        let s = summarize_series(&t, &v, &PeakOptions::default()).unwrap();
        let rows = [SummaryRow { value: 2.0, summary: s }, SummaryRow { value: 1.0, summary: s }];
        let mut buf = Vec::new();
        write_summary(&mut buf, &rows).unwrap();
        let back = read_summary(buf.as_slice()).unwrap();
        assert_eq!(back.iter().map(|r| r.value).collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert_eq!(back[0].summary.saturation.value, 0.5);
        assert!(back[0].summary.peak.is_none());
    }
}

use std::fmt;

use crate::error::{Error, Result};

/// Fixed column order of metric reports.
pub const REPORT_COLUMNS: [&str; 11] = [
    "model", "strategy", "RR@1", "RR@5", "NDCG@5", "MRR", "F1^0.1", "F1^0.3", "F1^0.5", "CD", "NC",
];

/// A value, or a mean with its standard error over runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub se: Option<f64>,
}

impl Stat {
    pub fn value(mean: f64) -> Self {
        Self { mean, se: None }
    }

    /// Mean and `stdev/√n` (sample standard deviation); a single sample has no error.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no samples to aggregate"));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        if samples.len() == 1 {
            return Ok(Self::value(mean));
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            mean,
            se: Some(var.sqrt() / n.sqrt()),
        })
    }

    fn parse(cell: &str) -> Option<Self> {
        let cell = cell.trim();
        match cell.split_once('±') {
            Some((m, s)) => Some(Self {
                mean: m.trim().parse().ok()?,
                se: Some(s.trim().parse().ok()?),
            }),
            None => Some(Self::value(cell.parse().ok()?)),
        }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.se {
            Some(se) => write!(f, "{:.4} ± {:.4}", self.mean, se),
            None => write!(f, "{:.4}", self.mean),
        }
    }
}

/// One report line; metric cells are in [`REPORT_COLUMNS`] order after the two labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub strategy: String,
    pub values: [Option<Stat>; 9],
}

impl ReportRow {
    fn cells(&self) -> Vec<String> {
        let mut out = vec![self.model.clone(), self.strategy.clone()];
        out.extend(self.values.iter().map(|v| v.map(|s| s.to_string()).unwrap_or_default()));
        out
    }
}

pub fn format_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(REPORT_COLUMNS).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.cells()).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads a report written by [`format_csv`]; the header must match exactly.
pub fn parse_csv(text: &str, source_name: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let err = |msg: String| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            msg,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if i == 0 {
            if rec.iter().ne(REPORT_COLUMNS) {
                return Err(err("unexpected header".into()));
            }
            continue;
        }
        if rec.len() != REPORT_COLUMNS.len() {
            return Err(err(format!(
                "expected {} fields, got {}",
                REPORT_COLUMNS.len(),
                rec.len()
            )));
        }
        let mut values = [None; 9];
        for (slot, cell) in values.iter_mut().zip(rec.iter().skip(2)) {
            if !cell.trim().is_empty() {
                *slot = Some(Stat::parse(cell).ok_or_else(|| err(format!("bad value {cell:?}")))?);
            }
        }
        rows.push(ReportRow {
            model: rec[0].to_string(),
            strategy: rec[1].to_string(),
            values,
        });
    }
    if rows.is_empty() && text.trim().is_empty() {
        return Err(Error::Parse {
            source_name: source_name.to_string(),
            line: 1,
            msg: "empty report".into(),
        });
    }
    Ok(rows)
}

/// Aligned plain-text table; missing cells print as `-`.
pub fn format_table(rows: &[ReportRow]) -> String {
    let mut grid: Vec<Vec<String>> = vec![REPORT_COLUMNS.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        let mut cells = row.cells();
        for c in cells.iter_mut().skip(2) {
            if c.is_empty() {
                *c = "-".into();
            }
        }
        grid.push(cells);
    }
    let widths: Vec<usize> = (0..REPORT_COLUMNS.len())
        .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in grid.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                let pad = w - cell.chars().count();
                if c < 2 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ReportRow {
        let mut values = [None; 9];
        values[0] = Some(Stat::value(12.5));
        values[3] = Some(Stat::from_samples(&[1.0, 2.0, 3.0]).unwrap());
        ReportRow {
            model: "tri, ntxent".into(),
            strategy: "I+V".into(),
            values,
        }
    }

    #[test]
    fn standard_error() {
        let s = Stat::from_samples(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.se.unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(Stat::from_samples(&[4.0]).unwrap().se, None);
    }

    #[test]
    fn csv_round_trip() {
        let text = format_csv(&[row()]).unwrap();
        assert!(text.starts_with("model,strategy,RR@1,RR@5,NDCG@5,MRR,F1^0.1,F1^0.3,F1^0.5,CD,NC\n"));
        assert!(text.contains("2.0000 ± 0.5774"));
        let back = parse_csv(&text, "r.csv").unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].model, "tri, ntxent");
        assert_eq!(back[0].values[0], Some(Stat::value(12.5)));
        assert!(back[0].values[1].is_none());
        assert!(parse_csv("a,b\n", "r.csv").is_err());
        assert!(parse_csv("", "r.csv").is_err());
    }

    #[test]
    fn table_is_aligned() {
        let t = format_table(&[row()]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].contains("12.5000") && lines[2].contains('-'));
    }
}

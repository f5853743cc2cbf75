//! Aggregation across runs and report emission.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::io::write_atomic;

/// One aggregated point: mean and sample standard deviation over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub series: String,
    pub x: String,
    pub mean: f64,
    pub std: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AggregateReport {
    pub metric: String,
    pub x_name: String,
    pub rows: Vec<AggregateRow>,
}

impl AggregateReport {
    pub fn new(metric: impl Into<String>, x_name: impl Into<String>) -> Self {
        Self {
            metric: metric.into(),
            x_name: x_name.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, series: impl Into<String>, x: impl ToString, values: &[f64]) {
        let (mean, std) = mean_std(values);
        self.rows.push(AggregateRow {
            series: series.into(),
            x: x.to_string(),
            mean,
            std,
            n_runs: values.len(),
        });
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["series", self.x_name.as_str(), "mean", "std", "n_runs"])?;
        for r in &self.rows {
            w.write_record([
                r.series.clone(),
                r.x.clone(),
                r.mean.to_string(),
                r.std.to_string(),
                r.n_runs.to_string(),
            ])?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
///
/// Values are summed in sorted order so the result does not depend on the
/// order in which runs finished.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return (sorted[0], 0.0);
    }
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Writes `report` as `<dir>/<stem>.<ext>` and returns the path.
pub fn emit(
    dir: &Path,
    stem: &str,
    format: Format,
    report: &AggregateReport,
) -> Result<std::path::PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let bytes = match format {
        Format::Csv => report.to_csv()?,
        Format::Json => to_json_bytes(report),
    };
    write_atomic(&path, &bytes)?;
    Ok(path)
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

/// Serializes rows of displayable cells as CSV.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn order_invariant() {
        let a = [0.1, 0.7, 0.2, 1e-9, 3.3];
        let mut b = a;
        b.reverse();
        assert_eq!(mean_std(&a), mean_std(&b));
    }

    #[test]
    fn csv_layout() {
        let mut r = AggregateReport::new("subopt", "n");
        r.push("cucb", 100, &[0.5, 0.5]);
        let text = String::from_utf8(r.to_csv().unwrap()).unwrap();
        assert_eq!(text, "series,n,mean,std,n_runs\ncucb,100,0.5,0,2\n");
    }
}

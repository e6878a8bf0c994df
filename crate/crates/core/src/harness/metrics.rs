use std::io::Write;
use std::path::Path;

use crate::error::{ReqError, Result};
use crate::learner::MetricsRow;

/// Column names of `metrics.csv`, in order.
pub const METRICS_HEADER: [&str; 8] = [
    "step",
    "episodic_return",
    "success_rate",
    "q_loss",
    "prior_loss",
    "mean_eta",
    "mean_kl",
    "accept_rate",
];

/// Append-only metrics keyed by strictly increasing learner step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSeries {
    rows: Vec<MetricsRow>,
}

fn row_values(r: &MetricsRow) -> [f64; 7] {
    [
        r.episodic_return,
        r.success_rate,
        r.q_loss,
        r.prior_loss,
        r.mean_eta,
        r.mean_kl,
        r.accept_rate,
    ]
}

impl MetricsSeries {
    pub fn new() -> Self {
        MetricsSeries::default()
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn push(&mut self, row: MetricsRow) -> Result<()> {
        if let Some(prev) = self.rows.last() {
            if row.step <= prev.step {
                return Err(ReqError::Config(format!(
                    "metrics step {} does not follow {}",
                    row.step, prev.step
                )));
            }
        }
        if let Some(i) = row_values(&row).iter().position(|v| !v.is_finite()) {
            return Err(ReqError::NonFinite {
                context: "metrics row",
                index: i + 1,
            });
        }
        self.rows.push(row);
        Ok(())
    }

    /// First step whose success rate reaches `threshold`.
    pub fn steps_to_success(&self, threshold: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.success_rate >= threshold)
            .map(|r| r.step)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(METRICS_HEADER)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a metrics file, checking the header, ordering and finiteness.
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != METRICS_HEADER {
            return Err(ReqError::Dataset {
                path: path.to_path_buf(),
                line: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
        let mut series = MetricsSeries::new();
        for (i, row) in r.deserialize().enumerate() {
            let row: MetricsRow = row?;
            series.push(row).map_err(|e| ReqError::Dataset {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })?;
        }
        Ok(series)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, success: f64) -> MetricsRow {
        MetricsRow {
            step,
            episodic_return: success,
            success_rate: success,
            q_loss: 0.5,
            prior_loss: -1.25,
            mean_eta: 0.01,
            mean_kl: 0.75,
            accept_rate: 0.1,
        }
    }

    #[test]
    fn steps_must_increase() {
        let mut m = MetricsSeries::new();
        m.push(row(10, 0.0)).unwrap();
        assert!(m.push(row(10, 0.0)).is_err());
        assert!(m.push(row(5, 0.0)).is_err());
        m.push(row(20, 0.0)).unwrap();
    }

    #[test]
    fn nan_rows_rejected() {
        let mut m = MetricsSeries::new();
        let mut r = row(1, 0.0);
        r.q_loss = f64::NAN;
        assert!(matches!(
            m.push(r),
            Err(ReqError::NonFinite { index: 3, .. })
        ));
    }

    #[test]
    fn csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut m = MetricsSeries::new();
        m.push(row(100, 0.25)).unwrap();
        m.push(row(200, 0.1 + 0.2)).unwrap();
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
        assert_eq!(MetricsSeries::load(&path).unwrap(), m);
    }

    #[test]
    fn empty_series_still_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        MetricsSeries::new().save(&path).unwrap();
        assert!(MetricsSeries::load(&path).unwrap().rows().is_empty());
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        std::fs::write(&path, "step,return\n1,0\n").unwrap();
        assert!(MetricsSeries::load(&path).is_err());
    }

    #[test]
    fn threshold_crossing() {
        let mut m = MetricsSeries::new();
        for (s, v) in [(1, 0.1), (2, 0.6), (3, 0.4), (4, 0.9)] {
            m.push(row(s, v)).unwrap();
        }
        assert_eq!(m.steps_to_success(0.5), Some(2));
        assert_eq!(m.steps_to_success(0.95), None);
    }
}

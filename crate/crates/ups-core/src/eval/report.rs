//! CSV report emission. `report.csv` holds only deterministic fields so
//! seed-identical runs produce bit-identical files; wall times go to a
//! separate `timings.csv`.

use super::Result;
use crate::trainer::TrainReport;
use std::path::Path;

pub const REPORT_HEADER: [&str; 9] = [
    "setting",
    "family",
    "coefficients",
    "resolution",
    "k_shot",
    "seed",
    "metric",
    "value",
    "config_hash",
];

#[derive(Clone, Debug)]
pub struct EvalRow {
    pub setting: String,
    pub family: String,
    pub coefficients: String,
    pub resolution: usize,
    /// -1 when shots do not apply.
    pub k_shot: i64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub timings: Vec<(String, f64)>,
    pub config_hash: String,
}

impl EvalReport {
    pub fn push(&mut self, row: EvalRow) {
        self.rows.push(row);
    }

    pub fn time(&mut self, label: &str, seconds: f64) {
        self.timings.push((label.to_string(), seconds));
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(REPORT_HEADER)?;
        for row in &self.rows {
            w.write_record([
                row.setting.as_str(),
                row.family.as_str(),
                row.coefficients.as_str(),
                &row.resolution.to_string(),
                &row.k_shot.to_string(),
                &row.seed.to_string(),
                row.metric.as_str(),
                &format!("{}", row.value),
                self.config_hash.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timings(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["label", "wall_time_s"])?;
        for (label, secs) in &self.timings {
            w.write_record([label.as_str(), &format!("{secs:.3}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Look up a metric value; panics are avoided by returning None.
    pub fn value_of(&self, setting: &str, family: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.setting == setting && r.family == family && r.metric == metric)
            .map(|r| r.value)
    }
}

impl From<csv::Error> for super::Error {
    fn from(e: csv::Error) -> Self {
        super::Error::Invalid(format!("csv: {e}"))
    }
}

/// Wide-format training curves: one nRMSE column per family.
pub fn write_train_report(report: &TrainReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let families: Vec<String> = report
        .rows
        .first()
        .map(|r| r.test_nrmse.iter().map(|(f, _)| f.clone()).collect())
        .unwrap_or_default();
    let mut header = vec![
        "stage".to_string(),
        "epoch".to_string(),
        "loss_align".to_string(),
        "loss_task".to_string(),
    ];
    header.extend(families.iter().map(|f| format!("nrmse_{f}")));
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec = vec![
            row.stage.clone(),
            row.epoch.to_string(),
            format!("{}", row.loss_align),
            format!("{}", row.loss_task),
        ];
        for (_, v) in &row.test_nrmse {
            rec.push(format!("{v}"));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

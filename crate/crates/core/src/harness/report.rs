use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eval::EvalRecord;
use crate::error::{Error, Result};

/// Column order of the per-record CSV.
pub const CSV_HEADER: [&str; 10] = [
    "id", "setting", "dice_before", "iou_before", "dice_after", "iou_after", "accepted", "u_before", "u_after", "wall_ms",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population mean and standard deviation; zeros for an empty slice.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub setting: String,
    /// Successful rows.
    pub count: usize,
    pub failed: usize,
    pub dice_before: MeanStd,
    pub iou_before: MeanStd,
    pub dice_after: MeanStd,
    pub iou_after: MeanStd,
    pub acceptance_rate: f64,
}

impl SettingSummary {
    pub fn improvement(&self) -> f64 {
        self.dice_after.mean - self.dice_before.mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// One row per setting, in order of first appearance.
    pub rows: Vec<SettingSummary>,
}

/// Aggregates records per setting.
pub fn report(records: &[EvalRecord]) -> Result<SweepReport> {
    if records.is_empty() {
        return Err(Error::domain("no records to report"));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.setting.as_str()) {
            order.push(&r.setting);
        }
    }
    let rows = order
        .into_iter()
        .map(|setting| {
            let all: Vec<&EvalRecord> = records.iter().filter(|r| r.setting == setting).collect();
            let ok: Vec<&EvalRecord> = all.iter().copied().filter(|r| r.is_ok()).collect();
            let col = |f: fn(&EvalRecord) -> Option<f64>| MeanStd::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            let accepted = ok.iter().filter(|r| r.accepted).count();
            SettingSummary {
                setting: setting.to_string(),
                count: ok.len(),
                failed: all.len() - ok.len(),
                dice_before: col(|r| r.dice_before),
                iou_before: col(|r| r.iou_before),
                dice_after: col(|r| r.dice_after),
                iou_after: col(|r| r.iou_after),
                acceptance_rate: if ok.is_empty() { 0.0 } else { accepted as f64 / ok.len() as f64 },
            }
        })
        .collect();
    Ok(SweepReport { rows })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-record CSV with [`CSV_HEADER`]; failed rows leave metric cells empty.
pub fn records_to_csv(records: &[EvalRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Codec(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.setting.clone(),
            cell(r.dice_before),
            cell(r.iou_before),
            cell(r.dice_after),
            cell(r.iou_after),
            r.accepted.to_string(),
            cell(r.u_before),
            cell(r.u_after),
            r.wall_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Codec(format!("csv: {e}")))
}

#[derive(Serialize)]
struct JsonReport<'a> {
    columns: [&'static str; 10],
    summary: &'a [SettingSummary],
    records: &'a [EvalRecord],
}

/// JSON carrying the same records as the CSV plus the per-setting summary.
pub fn report_to_json(report: &SweepReport, records: &[EvalRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&JsonReport { columns: CSV_HEADER, summary: &report.rows, records })?)
}

impl SweepReport {
    /// Fixed-width table for terminals.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>6} {:>13} {:>13} {:>13} {:>13} {:>8} {:>7}",
            "setting", "n", "failed", "dice_before", "dice_after", "iou_before", "iou_after", "gain", "accept"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<20} {:>5} {:>6} {:>6.3}±{:<6.3} {:>6.3}±{:<6.3} {:>6.3}±{:<6.3} {:>6.3}±{:<6.3} {:>+8.4} {:>6.1}%",
                r.setting,
                r.count,
                r.failed,
                r.dice_before.mean,
                r.dice_before.std,
                r.dice_after.mean,
                r.dice_after.std,
                r.iou_before.mean,
                r.iou_before.std,
                r.iou_after.mean,
                r.iou_after.std,
                r.improvement(),
                100.0 * r.acceptance_rate,
            );
        }
        out
    }
}

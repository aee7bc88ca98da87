//! Sequential monitoring of a feature stream.
//!
//! Input: one sample per line, `N0` comma-separated numbers. Output: one JSON
//! line per sample (`{"row":k,"decision":d}`), followed by an alarm line
//! whenever the chart fires. Rows are processed strictly in order.

use std::io::{BufRead, Write};

use serde::Serialize;

use super::persist::{check_compatible, parse_row, SavedModel};
use crate::detector::{detect, detection_features, BoundaryModelSet};
use crate::error::{Error, Result};
use crate::qcd::{AlarmEvent, ChartConfig};
use crate::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MonitorOptions {
    /// Suppress the per-row decision lines.
    pub alarms_only: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonitorSummary {
    pub rows: u64,
    pub abnormal_rows: u64,
    pub alarms: Vec<AlarmEvent>,
}

#[derive(Serialize)]
struct DecisionLine {
    row: u64,
    decision: u8,
}

/// Run the detector and chart over `input`, writing JSON lines to `out`.
///
/// Aborts on the first malformed row; everything before it has already been
/// written.
pub fn monitor<R: BufRead, W: Write>(
    model: &SavedModel,
    detector: &BoundaryModelSet,
    chart: &ChartConfig,
    input: R,
    out: &mut W,
    opts: MonitorOptions,
) -> Result<MonitorSummary> {
    check_compatible(model, detector)?;
    let width = model.input_dim();
    let mut chart = chart.build()?;
    let mut summary = MonitorSummary::default();
    for (i, line) in input.lines().enumerate() {
        let row = i as u64 + 1;
        let line = line?;
        let values = parse_row(&line, row)?;
        if values.len() != width {
            return Err(Error::MalformedRow {
                row,
                reason: format!("{} values, the model expects N0 = {width}", values.len()),
            });
        }
        let x = Matrix::from_column_slice(width, 1, &values);
        let feature = detection_features(&model.extractor, &model.head, &x, detector.space())
            .map_err(|e| Error::MalformedRow {
                row,
                reason: e.to_string(),
            })?;
        let decision = detect(detector, feature.column(0).as_slice())?;
        summary.rows = row;
        summary.abnormal_rows += u64::from(decision);
        if !opts.alarms_only {
            serde_json::to_writer(&mut *out, &DecisionLine { row, decision })?;
            writeln!(out)?;
        }
        if let Some(alarm) = chart.step(decision) {
            serde_json::to_writer(&mut *out, &alarm)?;
            writeln!(out)?;
            out.flush()?;
            summary.alarms.push(alarm);
        }
    }
    out.flush()?;
    Ok(summary)
}

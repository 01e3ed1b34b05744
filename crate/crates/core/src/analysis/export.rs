use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{BehaviorTable, LabelRecord, PayoffSummary, PriceSeries, Stats};

#[derive(Debug, Error)]
#[error("cannot write {path}: {source}")]
pub struct ExportError {
    pub path: PathBuf,
    #[source]
    pub source: csv::Error,
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ExportError> {
    csv::Writer::from_path(path).map_err(|source| ExportError {
        path: path.to_path_buf(),
        source,
    })
}

fn wrap<T>(path: &Path, r: Result<T, impl Into<csv::Error>>) -> Result<T, ExportError> {
    r.map_err(|e| ExportError {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

/// One row per decision pair.
pub fn write_labels_csv(path: &Path, labels: &[LabelRecord]) -> Result<(), ExportError> {
    let mut w = writer(path)?;
    for l in labels {
        wrap(path, w.serialize(l))?;
    }
    wrap(path, w.flush())
}

/// One row per grouping.
pub fn write_table_csv(path: &Path, table: &BehaviorTable) -> Result<(), ExportError> {
    let mut w = writer(path)?;
    for row in &table.rows {
        wrap(path, w.serialize(row))?;
    }
    wrap(path, w.flush())
}

fn stat_fields(s: &Stats) -> Vec<String> {
    let mut v = vec![
        s.count.to_string(),
        format!("{:.4}", s.mean),
        format!("{:.4}", s.median),
    ];
    v.extend(s.deciles.iter().map(|d| format!("{d:.4}")));
    v
}

/// One row per (group, measure) with count, mean, median and deciles.
pub fn write_payoffs_csv(path: &Path, summaries: &[PayoffSummary]) -> Result<(), ExportError> {
    let mut w = writer(path)?;
    let mut header = vec!["treatment", "model", "variant", "measure", "count", "mean", "median"];
    let deciles: Vec<String> = (1..=9).map(|i| format!("p{}", i * 10)).collect();
    header.extend(deciles.iter().map(String::as_str));
    wrap(path, w.write_record(&header))?;
    for s in summaries {
        for (measure, stats) in [
            ("realized", &s.realized),
            ("expected", &s.expected),
            ("decision_expected", &s.decision_expected),
        ] {
            let mut rec = vec![
                s.treatment.clone(),
                s.model.clone(),
                s.variant.clone(),
                measure.to_string(),
            ];
            rec.extend(stat_fields(stats));
            wrap(path, w.write_record(&rec))?;
        }
    }
    wrap(path, w.flush())
}

/// Long format: session, treatment, round, price. The post-trade price of
/// the last round is written as round `T + 1`.
pub fn write_price_series_csv(path: &Path, series: &[PriceSeries]) -> Result<(), ExportError> {
    let mut w = writer(path)?;
    wrap(path, w.write_record(["session", "treatment", "round", "price"]))?;
    for s in series {
        let last = s.points.last().map_or(1, |p| p.0 + 1);
        for (round, price) in s.points.iter().copied().chain(std::iter::once((last, s.final_price))) {
            wrap(
                path,
                w.write_record([
                    s.session.to_string(),
                    s.treatment.clone(),
                    round.to_string(),
                    format!("{price:.2}"),
                ]),
            )?;
        }
    }
    wrap(path, w.flush())
}

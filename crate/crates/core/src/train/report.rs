//! Metric CSVs. Undefined metrics are written as `NA`.

use std::path::Path;

use crate::dataio::manifest::csv_error;
use crate::error::{Error, Result};
use crate::model::AblationSpec;
use crate::train::{EpochMetrics, MeanStd};

const NA: &str = "NA";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: char,
    pub spec: AblationSpec,
    pub parameters: usize,
    pub c_index: Option<MeanStd>,
    pub auc: Option<MeanStd>,
}

/// `epoch,fold,c_index,auc,loss`.
pub fn write_history_csv(path: impl AsRef<Path>, rows: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["epoch", "fold", "c_index", "auc", "loss"]).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([r.epoch.to_string(), r.fold.to_string(), opt(r.c_index), opt(r.auc), r.loss.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history_csv(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header != vec!["epoch", "fold", "c_index", "auc", "loss"] {
        return Err(Error::ingest(path, Some(1), "expected header epoch,fold,c_index,auc,loss"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = Some(i + 2);
        let bad = |field: &str| Error::ingest(path, line, format!("cannot parse {field}"));
        let num = |k: usize, field: &str| rec[k].parse::<f64>().map_err(|_| bad(field));
        let maybe = |k: usize, field: &str| if &rec[k] == NA { Ok(None) } else { num(k, field).map(Some) };
        out.push(EpochMetrics {
            epoch: rec[0].parse().map_err(|_| bad("epoch"))?,
            fold: rec[1].parse().map_err(|_| bad("fold"))?,
            c_index: maybe(2, "c_index")?,
            auc: maybe(3, "auc")?,
            loss: num(4, "loss")?,
        });
    }
    Ok(out)
}

/// Ablation table with one row per model.
pub fn write_ablation_csv(path: impl AsRef<Path>, rows: &[AblationRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "model",
        "deep_fusion",
        "mgca",
        "gap",
        "feedforward",
        "parameters",
        "c_index_mean",
        "c_index_std",
        "auc_mean",
        "auc_std",
    ])
    .map_err(|e| csv_error(path, e))?;
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    for r in rows {
        w.write_record([
            r.name.to_string(),
            flag(r.spec.deep_fusion),
            flag(r.spec.mgca),
            flag(r.spec.gap),
            flag(r.spec.feedforward),
            r.parameters.to_string(),
            opt(r.c_index.map(|m| m.mean)),
            opt(r.c_index.map(|m| m.std)),
            opt(r.auc.map(|m| m.mean)),
            opt(r.auc.map(|m| m.std)),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_round_trips() {
        let rows = vec![
            EpochMetrics { epoch: 1, fold: 0, c_index: Some(0.61234567890123), auc: None, loss: 1.5 },
            EpochMetrics { epoch: 1, fold: 1, c_index: None, auc: Some(0.5), loss: 0.1 + 0.2 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_history_csv(&p, &rows).unwrap();
        assert_eq!(read_history_csv(&p).unwrap(), rows);
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("epoch,fold,c_index,auc,loss\n"));
    }

    #[test]
    fn ablation_table_has_header_and_rows() {
        let rows: Vec<_> = AblationSpec::PRESETS
            .iter()
            .map(|&c| AblationRow {
                name: c,
                spec: AblationSpec::preset(c).unwrap(),
                parameters: 10,
                c_index: MeanStd::of([Some(0.5)]),
                auc: None,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_ablation_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().nth(1).unwrap().starts_with("A,0,0,0,0,10,0.5,0,NA,NA"));
    }
}

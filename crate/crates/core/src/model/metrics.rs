//! Confusion counts with HIGH as the positive class.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::{ArousalLabel, WindowKey};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: ArousalLabel, pred: ArousalLabel) {
        match (truth.is_high(), pred.is_high()) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.tn += o.tn;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// 0 for an empty table.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    /// `2tp / (2tp + fp + fn)`, 0 when the denominator is 0.
    pub fn f1(&self) -> f64 {
        match 2 * self.tp + self.fp + self.fn_ {
            0 => 0.0,
            d => (2 * self.tp) as f64 / d as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub accuracy: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub per_dataset: BTreeMap<String, DatasetMetrics>,
}

impl MetricsReport {
    pub fn confusion(&self) -> Confusion {
        Confusion { tp: self.tp, tn: self.tn, fp: self.fp, fn_: self.fn_ }
    }

    pub fn from_confusions(per_dataset: &BTreeMap<String, Confusion>) -> Self {
        let mut all = Confusion::default();
        per_dataset.values().for_each(|c| all.merge(c));
        MetricsReport {
            tp: all.tp,
            tn: all.tn,
            fp: all.fp,
            fn_: all.fn_,
            accuracy: all.accuracy(),
            f1: all.f1(),
            per_dataset: per_dataset
                .iter()
                .map(|(d, c)| (d.clone(), DatasetMetrics { accuracy: c.accuracy(), f1: c.f1(), confusion: *c }))
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    /// One row per dataset plus an `ALL` row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["dataset", "tp", "tn", "fp", "fn", "accuracy", "f1"])?;
        let rows = self
            .per_dataset
            .iter()
            .map(|(d, m)| (d.as_str(), m.confusion))
            .chain(std::iter::once(("ALL", self.confusion())));
        for (d, c) in rows {
            wtr.write_record([
                d.to_string(),
                c.tp.to_string(),
                c.tn.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.accuracy().to_string(),
                c.f1().to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn evaluate(
    y_true: &[ArousalLabel],
    y_pred: &[ArousalLabel],
    dataset_ids: &[&str],
) -> Result<MetricsReport, ModelError> {
    if y_true.len() != y_pred.len() || y_true.len() != dataset_ids.len() {
        return Err(ModelError::Invalid("label, prediction and dataset lengths differ".into()));
    }
    let mut per: BTreeMap<String, Confusion> = BTreeMap::new();
    for ((&t, &p), d) in y_true.iter().zip(y_pred).zip(dataset_ids) {
        per.entry(d.to_string()).or_default().add(t, p);
    }
    Ok(MetricsReport::from_confusions(&per))
}

/// One held-out prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub key: WindowKey,
    pub fold: usize,
    pub y_true: ArousalLabel,
    pub y_pred: ArousalLabel,
    pub probability: f64,
}

/// `key,fold,y_true,y_pred,probability` rows.
pub fn write_predictions_csv<W: Write>(w: W, preds: &[Prediction]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["key", "fold", "y_true", "y_pred", "probability"])?;
    let name = |l: ArousalLabel| if l.is_high() { "HIGH" } else { "LOW" };
    for p in preds {
        wtr.write_record([
            p.key.to_string(),
            p.fold.to_string(),
            name(p.y_true).to_string(),
            name(p.y_pred).to_string(),
            format!("{:?}", p.probability),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

//! Recordings, arousal label harmonization, multi-corpus aggregation,
//! stratified folds and synthetic ground-truthed corpora.

mod folds;
mod io;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use folds::{stratified_folds, FoldAssignment};
pub use io::{ingest, write_corpus, Format};
pub use synth::{synth_corpus, Physiology, SynthConfig, SynthGroundTruth};

/// Normalized arousal at or above this value is labelled HIGH.
pub const HIGH_AROUSAL_THRESHOLD: f64 = 5.0;

/// Samples per 10-s ECG window at 256 Hz.
pub const ECG_WINDOW_LEN: usize = 2560;
/// Samples per 10-s EDA window at 128 Hz.
pub const EDA_WINDOW_LEN: usize = 1280;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("duplicate record {key} (inputs {first} and {second})")]
    Collision { key: String, first: String, second: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "ECG")]
    Ecg,
    #[serde(rename = "EDA")]
    Eda,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Ecg => "ECG",
            Modality::Eda => "EDA",
        })
    }
}

impl std::str::FromStr for Modality {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ECG" => Ok(Modality::Ecg),
            "EDA" => Ok(Modality::Eda),
            other => Err(format!("unknown modality '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArousalLabel {
    #[serde(rename = "LOW")]
    Low,
    #[serde(rename = "HIGH")]
    High,
}

impl ArousalLabel {
    pub fn is_high(self) -> bool {
        self == ArousalLabel::High
    }

    pub fn from_bool(high: bool) -> Self {
        if high {
            ArousalLabel::High
        } else {
            ArousalLabel::Low
        }
    }

    pub fn as_f64(self) -> f64 {
        if self.is_high() {
            1.0
        } else {
            0.0
        }
    }
}

/// (dataset, subject, trial) identifying one rated stimulus presentation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub dataset_id: String,
    pub subject_id: String,
    pub trial_id: String,
}

impl fmt::Display for TrialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.dataset_id, self.subject_id, self.trial_id)
    }
}

/// One modality of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub dataset_id: String,
    pub subject_id: String,
    pub trial_id: String,
    pub modality: Modality,
    pub sampling_rate: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub arousal_raw: f64,
    pub samples: Vec<f64>,
}

impl SignalRecord {
    pub fn trial_key(&self) -> TrialKey {
        TrialKey {
            dataset_id: self.dataset_id.clone(),
            subject_id: self.subject_id.clone(),
            trial_id: self.trial_id.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.samples.is_empty() {
            return Err("samples must be nonempty".into());
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(format!("non-finite sample at index {i}"));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate.is_finite()) {
            return Err(format!("sampling_rate must be > 0, got {}", self.sampling_rate));
        }
        if !(self.scale_min < self.scale_max) {
            return Err(format!(
                "scale_min ({}) must be below scale_max ({})",
                self.scale_min, self.scale_max
            ));
        }
        if !(self.arousal_raw >= self.scale_min && self.arousal_raw <= self.scale_max) {
            return Err(format!(
                "arousal out of scale bounds: {} not in [{}, {}]",
                self.arousal_raw, self.scale_min, self.scale_max
            ));
        }
        Ok(())
    }

    /// Arousal rescaled onto [1, 9].
    pub fn arousal_norm(&self) -> f64 {
        1.0 + 8.0 * (self.arousal_raw - self.scale_min) / (self.scale_max - self.scale_min)
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate
    }
}

/// Validated set of recordings from one or more datasets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    records: Vec<SignalRecord>,
    provenance: Vec<String>,
}

impl Corpus {
    /// Validates every record and the one-record-per-(trial, modality) rule.
    pub fn new(records: Vec<SignalRecord>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            r.validate().map_err(|m| CorpusError::Row { row: i + 1, message: m })?;
            if !seen.insert((r.trial_key(), r.modality)) {
                return Err(CorpusError::Row {
                    row: i + 1,
                    message: format!("duplicate {} record for {}", r.modality, r.trial_key()),
                });
            }
        }
        let mut provenance: Vec<String> = Vec::new();
        for r in &records {
            if !provenance.contains(&r.dataset_id) {
                provenance.push(r.dataset_id.clone());
            }
        }
        Ok(Self { records, provenance })
    }

    pub fn records(&self) -> &[SignalRecord] {
        &self.records
    }

    /// Distinct dataset ids in order of first appearance.
    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// ECG/EDA record pairs per trial, in key order. Trials missing either
    /// modality are skipped.
    pub fn trials(&self) -> Vec<(TrialKey, &SignalRecord, &SignalRecord)> {
        let mut map: BTreeMap<TrialKey, (Option<&SignalRecord>, Option<&SignalRecord>)> = BTreeMap::new();
        for r in &self.records {
            let slot = map.entry(r.trial_key()).or_default();
            match r.modality {
                Modality::Ecg => slot.0 = Some(r),
                Modality::Eda => slot.1 = Some(r),
            }
        }
        map.into_iter()
            .filter_map(|(k, (e, d))| Some((k, e?, d?)))
            .collect()
    }

    /// Keeps only records from the given dataset.
    pub fn filter_dataset(&self, dataset_id: &str) -> Corpus {
        let records: Vec<SignalRecord> = self
            .records
            .iter()
            .filter(|r| r.dataset_id == dataset_id)
            .cloned()
            .collect();
        let provenance = if records.is_empty() { Vec::new() } else { vec![dataset_id.to_string()] };
        Corpus { records, provenance }
    }
}

/// Affine map of a rating on `[scale_min, scale_max]` onto `[1, 9]`.
pub fn rescale_arousal(value: f64, scale_min: f64, scale_max: f64) -> Result<f64, CorpusError> {
    if !(scale_min < scale_max) {
        return Err(CorpusError::Invalid(format!(
            "degenerate rating scale [{scale_min}, {scale_max}]"
        )));
    }
    if !(value >= scale_min && value <= scale_max) {
        return Err(CorpusError::Invalid(format!(
            "arousal {value} outside scale [{scale_min}, {scale_max}]"
        )));
    }
    if value == scale_max {
        return Ok(9.0);
    }
    Ok(1.0 + 8.0 * (value - scale_min) / (scale_max - scale_min))
}

/// LOW below [`HIGH_AROUSAL_THRESHOLD`], HIGH at or above it.
pub fn binarize_arousal(norm: f64) -> Result<ArousalLabel, CorpusError> {
    if !(1.0..=9.0).contains(&norm) {
        return Err(CorpusError::Invalid(format!("normalized arousal {norm} outside [1, 9]")));
    }
    Ok(ArousalLabel::from_bool(norm >= HIGH_AROUSAL_THRESHOLD))
}

/// Union of corpora. Fails if any (trial, modality) appears in two inputs.
pub fn aggregate(corpora: &[Corpus]) -> Result<Corpus, CorpusError> {
    let mut owner: BTreeMap<(TrialKey, Modality), usize> = BTreeMap::new();
    let mut records = Vec::new();
    for (ci, c) in corpora.iter().enumerate() {
        for r in &c.records {
            let key = (r.trial_key(), r.modality);
            if let Some(&first) = owner.get(&key) {
                return Err(CorpusError::Collision {
                    key: format!("{}/{}", key.0, key.1),
                    first: format!("#{first} ({})", corpora[first].provenance.join(",")),
                    second: format!("#{ci} ({})", c.provenance.join(",")),
                });
            }
            owner.insert(key, ci);
            records.push(r.clone());
        }
    }
    Corpus::new(records)
}

/// Identifies one 10-s window within a trial.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowKey {
    pub dataset_id: String,
    pub subject_id: String,
    pub trial_id: String,
    pub window_index: usize,
}

impl WindowKey {
    pub fn trial(&self) -> TrialKey {
        TrialKey {
            dataset_id: self.dataset_id.clone(),
            subject_id: self.subject_id.clone(),
            trial_id: self.trial_id.clone(),
        }
    }
}

impl fmt::Display for WindowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.dataset_id, self.subject_id, self.trial_id, self.window_index
        )
    }
}

/// Aligned, normalized ECG and EDA windows sharing the trial's label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPair {
    pub key: WindowKey,
    pub ecg: Vec<f64>,
    pub eda: Vec<f64>,
    pub label: ArousalLabel,
    pub arousal_norm: f64,
}

impl WindowPair {
    pub fn validate(&self) -> Result<(), String> {
        if self.ecg.len() != ECG_WINDOW_LEN {
            return Err(format!("ECG window has {} samples, expected {ECG_WINDOW_LEN}", self.ecg.len()));
        }
        if self.eda.len() != EDA_WINDOW_LEN {
            return Err(format!("EDA window has {} samples, expected {EDA_WINDOW_LEN}", self.eda.len()));
        }
        if self.ecg.iter().chain(&self.eda).any(|v| !(0.0..=1.0).contains(v)) {
            return Err("window values must lie in [0, 1]".into());
        }
        match binarize_arousal(self.arousal_norm) {
            Ok(l) if l == self.label => Ok(()),
            Ok(_) => Err("label inconsistent with arousal_norm".into()),
            Err(e) => Err(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    pub(crate) fn record(ds: &str, subj: &str, trial: &str, m: Modality) -> SignalRecord {
        SignalRecord {
            dataset_id: ds.into(),
            subject_id: subj.into(),
            trial_id: trial.into(),
            modality: m,
            sampling_rate: 128.0,
            scale_min: 1.0,
            scale_max: 9.0,
            arousal_raw: 5.0,
            samples: vec![0.0, 1.0, 2.0],
        }
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale_arousal(9.0, 1.0, 9.0).unwrap(), 9.0);
        assert_eq!(rescale_arousal(1.0, 1.0, 4.0).unwrap(), 1.0);
        assert_eq!(rescale_arousal(3.0, 0.0, 6.0).unwrap(), 5.0);
        assert!(rescale_arousal(3.0, 3.0, 3.0).is_err());
        assert!(rescale_arousal(8.0, 1.0, 7.0).is_err());
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize_arousal(4.99).unwrap(), ArousalLabel::Low);
        assert_eq!(binarize_arousal(6.0).unwrap(), ArousalLabel::High);
        assert_eq!(binarize_arousal(5.0).unwrap(), ArousalLabel::High);
        assert!(binarize_arousal(0.5).is_err());
        assert!(binarize_arousal(9.5).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let a = Corpus::new(vec![
            record("A", "s1", "t1", Modality::Ecg),
            record("A", "s1", "t1", Modality::Eda),
        ])
        .unwrap();
        let b = Corpus::new(vec![record("B", "s1", "t1", Modality::Ecg)]).unwrap();
        assert_eq!(aggregate(std::slice::from_ref(&a)).unwrap(), a);
        let ab = aggregate(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ab.len(), 3);
        assert_eq!(ab.provenance(), &["A".to_string(), "B".to_string()]);
        let err = aggregate(&[a.clone(), a]).unwrap_err();
        assert!(matches!(err, CorpusError::Collision { .. }));
        assert!(err.to_string().contains("#0") && err.to_string().contains("#1"));
    }

    #[test]
    fn corpus_rejects_duplicates_and_bad_records() {
        let r = record("A", "s", "t", Modality::Ecg);
        assert!(Corpus::new(vec![r.clone(), r.clone()]).is_err());
        let mut bad = r.clone();
        bad.arousal_raw = 10.0;
        let err = Corpus::new(vec![bad]).unwrap_err().to_string();
        assert!(err.contains("arousal out of scale bounds") && err.contains("row 1"), "{err}");
        let mut bad = r;
        bad.sampling_rate = 0.0;
        assert!(Corpus::new(vec![bad]).is_err());
    }

    #[test]
    fn trials_pairs_modalities() {
        let c = Corpus::new(vec![
            record("A", "s1", "t1", Modality::Eda),
            record("A", "s1", "t1", Modality::Ecg),
            record("A", "s1", "t2", Modality::Ecg),
        ])
        .unwrap();
        let t = c.trials();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].1.modality, Modality::Ecg);
        assert_eq!(t[0].2.modality, Modality::Eda);
    }

    proptest! {
        #[test]
        fn rescale_is_affine_and_monotone(lo in -10.0f64..10.0, span in 0.5f64..20.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let hi = lo + span;
            let (va, vb) = (lo + a * span, lo + b * span);
            let (ra, rb) = (rescale_arousal(va, lo, hi).unwrap(), rescale_arousal(vb, lo, hi).unwrap());
            prop_assert!((1.0..=9.0).contains(&ra));
            if va <= vb { prop_assert!(ra <= rb + 1e-12); }
            prop_assert_eq!(rescale_arousal(lo, lo, hi).unwrap(), 1.0);
            prop_assert_eq!(rescale_arousal(hi, lo, hi).unwrap(), 9.0);
            // affine: midpoint maps to midpoint
            let mid = rescale_arousal(lo + 0.5 * span, lo, hi).unwrap();
            prop_assert!((mid - 5.0).abs() < 1e-9);
        }

        #[test]
        fn binarized_rescale_is_monotone(lo in 0.0f64..5.0, span in 1.0f64..10.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let hi = lo + span;
            let (va, vb) = if a <= b { (lo + a * span, lo + b * span) } else { (lo + b * span, lo + a * span) };
            let la = binarize_arousal(rescale_arousal(va, lo, hi).unwrap()).unwrap();
            let lb = binarize_arousal(rescale_arousal(vb, lo, hi).unwrap()).unwrap();
            prop_assert!(!(la == ArousalLabel::High && lb == ArousalLabel::Low));
        }

        #[test]
        fn aggregate_is_order_insensitive(order in Just(vec![0usize, 1, 2]).prop_shuffle()) {
            let parts: Vec<Corpus> = ["A", "B", "C"].iter().map(|d| Corpus::new(vec![
                record(d, "s", "t", Modality::Ecg), record(d, "s", "t", Modality::Eda)]).unwrap()).collect();
            let reference = aggregate(&parts).unwrap();
            let permuted: Vec<Corpus> = order.iter().map(|&i| parts[i].clone()).collect();
            let agg = aggregate(&permuted).unwrap();
            let mut r1: Vec<_> = reference.records().iter().map(|r| (r.trial_key(), r.modality)).collect();
            let mut r2: Vec<_> = agg.records().iter().map(|r| (r.trial_key(), r.modality)).collect();
            r1.sort(); r2.sort();
            prop_assert_eq!(r1, r2);
            // associativity
            let left = aggregate(&[aggregate(&parts[..2]).unwrap(), parts[2].clone()]).unwrap();
            let right = aggregate(&[parts[0].clone(), aggregate(&parts[1..]).unwrap()]).unwrap();
            prop_assert_eq!(left.records(), right.records());
        }
    }
}

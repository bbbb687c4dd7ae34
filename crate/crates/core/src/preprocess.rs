//! Per-modality conditioning chain turning raw records into aligned,
//! normalized 10-s window pairs.
//!
//! ECG: zero-phase 5-15 Hz band-pass, resample to 256 Hz.
//! EDA: zero-phase 1 Hz low-pass, 100-sample moving average (at the native
//! rate), resample to 128 Hz.
//! Both are then min-max normalized per subject and cut into windows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{binarize_arousal, rescale_arousal, Corpus, Modality, SignalRecord, WindowKey, WindowPair};
use crate::dsp::{self, DspError, TimeSeries};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeScope {
    /// Extrema over all of a subject's records of the modality.
    Subject,
    /// Extrema of each record separately.
    Record,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub ecg_band_low_hz: f64,
    pub ecg_band_high_hz: f64,
    pub eda_cutoff_hz: f64,
    pub eda_smoothing_samples: usize,
    pub ecg_rate_hz: f64,
    pub eda_rate_hz: f64,
    pub window_s: f64,
    pub filter_order: usize,
    pub normalize: NormalizeScope,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            ecg_band_low_hz: 5.0,
            ecg_band_high_hz: 15.0,
            eda_cutoff_hz: 1.0,
            eda_smoothing_samples: 100,
            ecg_rate_hz: 256.0,
            eda_rate_hz: 128.0,
            window_s: 10.0,
            filter_order: dsp::DEFAULT_FILTER_ORDER,
            normalize: NormalizeScope::Subject,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.ecg_band_low_hz > 0.0 && self.ecg_band_low_hz < self.ecg_band_high_hz) {
            return bad(format!(
                "ECG band ({}, {}) must satisfy 0 < low < high",
                self.ecg_band_low_hz, self.ecg_band_high_hz
            ));
        }
        if !(self.ecg_band_high_hz < self.ecg_rate_hz / 2.0) {
            return bad("ECG band upper edge must be below the target Nyquist rate".into());
        }
        if !(self.eda_cutoff_hz > 0.0 && self.eda_cutoff_hz < self.eda_rate_hz / 2.0) {
            return bad(format!("EDA cutoff {} out of range", self.eda_cutoff_hz));
        }
        if self.eda_smoothing_samples == 0 {
            return bad("EDA smoothing length must be >= 1".into());
        }
        if !(self.window_s > 0.0) || self.filter_order == 0 {
            return bad("window length and filter order must be positive".into());
        }
        Ok(())
    }

    pub fn ecg_window_len(&self) -> usize {
        (self.window_s * self.ecg_rate_hz).round() as usize
    }

    pub fn eda_window_len(&self) -> usize {
        (self.window_s * self.eda_rate_hz).round() as usize
    }
}

/// Band-pass then resample an ECG record (no normalization).
pub fn condition_ecg(record: &SignalRecord, cfg: &PreprocessConfig) -> Result<TimeSeries, DspError> {
    let x = TimeSeries::new(record.samples.clone(), record.sampling_rate)?;
    let band = dsp::butterworth_bandpass_zero_phase(&x, cfg.ecg_band_low_hz, cfg.ecg_band_high_hz, cfg.filter_order)?;
    dsp::resample(&band, cfg.ecg_rate_hz)
}

/// Low-pass, smooth, then resample an EDA record (no normalization).
pub fn condition_eda(record: &SignalRecord, cfg: &PreprocessConfig) -> Result<TimeSeries, DspError> {
    let x = TimeSeries::new(record.samples.clone(), record.sampling_rate)?;
    let low = dsp::lowpass(&x, cfg.eda_cutoff_hz, cfg.filter_order)?;
    let n = cfg.eda_smoothing_samples.min(low.len());
    let smooth = dsp::moving_average(&low, n)?;
    dsp::resample(&smooth, cfg.eda_rate_hz)
}

/// Runs the full chain over every trial that has both modalities.
pub fn build_windows(corpus: &Corpus, cfg: &PreprocessConfig) -> Result<Vec<WindowPair>, Error> {
    cfg.validate()?;
    let trials = corpus.trials();
    let mut conditioned = Vec::with_capacity(trials.len());
    for (key, ecg, eda) in &trials {
        let ctx = |e: DspError| Error::Data(format!("{key}: {e}"));
        conditioned.push((condition_ecg(ecg, cfg).map_err(ctx)?, condition_eda(eda, cfg).map_err(ctx)?));
    }

    // per-subject extrema for each modality
    let mut bounds: BTreeMap<(String, String, Modality), (f64, f64)> = BTreeMap::new();
    for ((key, _, _), (e, d)) in trials.iter().zip(&conditioned) {
        for (m, ts) in [(Modality::Ecg, e), (Modality::Eda, d)] {
            let (lo, hi) = dsp::min_max(&ts.values);
            let slot = bounds
                .entry((key.dataset_id.clone(), key.subject_id.clone(), m))
                .or_insert((f64::INFINITY, f64::NEG_INFINITY));
            slot.0 = slot.0.min(lo);
            slot.1 = slot.1.max(hi);
        }
    }

    let mut out = Vec::new();
    for ((key, ecg_rec, _), (e, d)) in trials.iter().zip(conditioned) {
        let norm = |m: Modality, ts: &TimeSeries| -> Vec<f64> {
            let b = match cfg.normalize {
                NormalizeScope::Subject => bounds[&(key.dataset_id.clone(), key.subject_id.clone(), m)],
                NormalizeScope::Record => dsp::min_max(&ts.values),
            };
            dsp::minmax_with_bounds(&ts.values, b)
        };
        let e = TimeSeries { values: norm(Modality::Ecg, &e), sampling_rate: e.sampling_rate };
        let d = TimeSeries { values: norm(Modality::Eda, &d), sampling_rate: d.sampling_rate };
        let ew = dsp::window(&e, cfg.window_s)?;
        let dw = dsp::window(&d, cfg.window_s)?;
        let arousal_norm = rescale_arousal(ecg_rec.arousal_raw, ecg_rec.scale_min, ecg_rec.scale_max)?;
        let label = binarize_arousal(arousal_norm)?;
        for (i, (ecg, eda)) in ew.into_iter().zip(dw).enumerate() {
            out.push(WindowPair {
                key: WindowKey {
                    dataset_id: key.dataset_id.clone(),
                    subject_id: key.subject_id.clone(),
                    trial_id: key.trial_id.clone(),
                    window_index: i,
                },
                ecg,
                eda,
                label,
                arousal_norm,
            });
        }
    }
    Ok(out)
}

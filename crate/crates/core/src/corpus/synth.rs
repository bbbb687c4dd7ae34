//! Synthetic ECG/EDA trials with known R-peak and SCR onset times.
//!
//! ECG is a train of Gaussian P/Q/R/S/T bumps at a per-trial heart rate with
//! mild respiratory modulation, plus 0.3 Hz baseline wander and white noise.
//! EDA is a slowly drifting tonic level plus bi-exponential SCRs arriving as
//! a Poisson process, plus white noise. The arousal level of each trial
//! selects the heart-rate and SCR-rate ranges.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ArousalLabel, Corpus, CorpusError, Modality, SignalRecord, TrialKey};

/// Arousal-to-physiology mapping of the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physiology {
    pub hr_low_bpm: (f64, f64),
    pub hr_high_bpm: (f64, f64),
    pub scr_low_per_min: (f64, f64),
    pub scr_high_per_min: (f64, f64),
    /// Tonic skin-conductance increase for HIGH trials, microsiemens.
    pub scl_high_shift_us: f64,
}

impl Default for Physiology {
    fn default() -> Self {
        Self {
            hr_low_bpm: (55.0, 75.0),
            hr_high_bpm: (90.0, 120.0),
            scr_low_per_min: (1.0, 3.0),
            scr_high_per_min: (6.0, 12.0),
            scl_high_shift_us: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub dataset_id: String,
    pub n_subjects: usize,
    pub trials_per_subject: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub ecg_rate: f64,
    pub eda_rate: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// White-noise SD added to the ECG, millivolts.
    pub ecg_noise_std: f64,
    /// White-noise SD added to the EDA, microsiemens.
    pub eda_noise_std: f64,
    /// Shift applied to both heart-rate ranges.
    pub hr_offset_bpm: f64,
    pub physiology: Physiology,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dataset_id: "SYN".into(),
            n_subjects: 1,
            trials_per_subject: 1,
            duration_s: 10.0,
            seed: 0,
            ecg_rate: 256.0,
            eda_rate: 128.0,
            scale_min: 1.0,
            scale_max: 9.0,
            ecg_noise_std: 0.02,
            eda_noise_std: 0.005,
            hr_offset_bpm: 0.0,
            physiology: Physiology::default(),
        }
    }
}

impl SynthConfig {
    pub fn new(n_subjects: usize, trials_per_subject: usize, duration_s: f64, seed: u64) -> Self {
        Self { n_subjects, trials_per_subject, duration_s, seed, ..Self::default() }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::Invalid(m.to_string()));
        if self.n_subjects == 0 || self.trials_per_subject == 0 {
            return bad("subject and trial counts must be positive");
        }
        if !(self.duration_s > 0.0) || !(self.ecg_rate > 0.0) || !(self.eda_rate > 0.0) {
            return bad("duration and sampling rates must be positive");
        }
        if !(self.scale_min < self.scale_max) {
            return bad("scale_min must be below scale_max");
        }
        if self.ecg_noise_std < 0.0 || self.eda_noise_std < 0.0 {
            return bad("noise levels must be nonnegative");
        }
        let p = &self.physiology;
        for (lo, hi) in [p.hr_low_bpm, p.hr_high_bpm, p.scr_low_per_min, p.scr_high_per_min] {
            if !(lo <= hi && lo >= 0.0) {
                return bad("physiology ranges must be ordered and nonnegative");
            }
        }
        if p.hr_low_bpm.0 + self.hr_offset_bpm <= 20.0 {
            return bad("heart rate offset leaves implausible rates");
        }
        Ok(())
    }
}

/// Event times and drawn parameters of one synthetic trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthGroundTruth {
    pub r_peak_times: Vec<f64>,
    pub scr_event_times: Vec<f64>,
    pub true_arousal_level: ArousalLabel,
    pub hr_bpm: f64,
    pub scr_rate_per_min: f64,
}

const MIN_SCR_GAP_S: f64 = 2.0;
const SCR_RISE_TAU: f64 = 0.75;
const SCR_DECAY_TAU: f64 = 2.0;

/// Generates a labelled corpus and the per-trial ground truth.
pub fn synth_corpus(
    cfg: &SynthConfig,
) -> Result<(Corpus, BTreeMap<TrialKey, SynthGroundTruth>), CorpusError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(2 * cfg.n_subjects * cfg.trials_per_subject);
    let mut truth = BTreeMap::new();
    let p = &cfg.physiology;

    for s in 0..cfg.n_subjects {
        let subject_id = format!("S{s:03}");
        let mut labels: Vec<ArousalLabel> = (0..cfg.trials_per_subject)
            .map(|t| ArousalLabel::from_bool(t % 2 == 0))
            .collect();
        labels.shuffle(&mut rng);
        let scl_base = rng.random_range(2.0..8.0);

        for (t, &label) in labels.iter().enumerate() {
            let trial_id = format!("T{t:02}");
            let (hr_range, scr_range, norm_range) = match label {
                ArousalLabel::High => (p.hr_high_bpm, p.scr_high_per_min, (6.0, 9.0)),
                ArousalLabel::Low => (p.hr_low_bpm, p.scr_low_per_min, (1.0, 4.5)),
            };
            let hr = uniform(&mut rng, hr_range) + cfg.hr_offset_bpm;
            let scr_rate = uniform(&mut rng, scr_range);
            let norm = uniform(&mut rng, norm_range);
            let arousal_raw = (cfg.scale_min + (norm - 1.0) / 8.0 * (cfg.scale_max - cfg.scale_min))
                .clamp(cfg.scale_min, cfg.scale_max);

            let (ecg, r_peaks) = synth_ecg(&mut rng, hr, cfg.duration_s, cfg.ecg_rate, cfg.ecg_noise_std);
            let scl = scl_base + if label.is_high() { p.scl_high_shift_us } else { 0.0 };
            let (eda, scr_onsets) =
                synth_eda(&mut rng, scr_rate, scl, cfg.duration_s, cfg.eda_rate, cfg.eda_noise_std);

            for (modality, samples, rate) in [
                (Modality::Ecg, ecg, cfg.ecg_rate),
                (Modality::Eda, eda, cfg.eda_rate),
            ] {
                records.push(SignalRecord {
                    dataset_id: cfg.dataset_id.clone(),
                    subject_id: subject_id.clone(),
                    trial_id: trial_id.clone(),
                    modality,
                    sampling_rate: rate,
                    scale_min: cfg.scale_min,
                    scale_max: cfg.scale_max,
                    arousal_raw,
                    samples,
                });
            }
            truth.insert(
                TrialKey {
                    dataset_id: cfg.dataset_id.clone(),
                    subject_id: subject_id.clone(),
                    trial_id,
                },
                SynthGroundTruth {
                    r_peak_times: r_peaks,
                    scr_event_times: scr_onsets,
                    true_arousal_level: label,
                    hr_bpm: hr,
                    scr_rate_per_min: scr_rate,
                },
            );
        }
    }
    Ok((Corpus::new(records)?, truth))
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// (offset s, amplitude mV, width s) of the P, Q, R, S waves; T is placed
/// relative to the RR interval.
const PQRS: [(f64, f64, f64); 4] = [
    (-0.16, 0.12, 0.025),
    (-0.03, -0.12, 0.008),
    (0.0, 1.0, 0.010),
    (0.03, -0.20, 0.009),
];

fn synth_ecg(rng: &mut ChaCha8Rng, hr: f64, duration: f64, fs: f64, noise: f64) -> (Vec<f64>, Vec<f64>) {
    let n = (duration * fs).round() as usize;
    let rr_mean = 60.0 / hr;
    let resp_phase = rng.random_range(0.0..2.0 * PI);
    let resp_freq = rng.random_range(0.2..0.3);

    // beats start before t = 0 so the first window sample is mid-rhythm
    let mut beats = Vec::new();
    let mut t = -rr_mean * rng.random_range(0.0..1.0) - rr_mean;
    while t < duration + rr_mean {
        let amp = 1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal);
        beats.push((t, amp.max(0.7)));
        let modulation = 0.03 * (2.0 * PI * resp_freq * t + resp_phase).sin();
        let jitter = 0.01 * rng.sample::<f64, _>(StandardNormal);
        t += rr_mean * (1.0 + modulation + jitter);
    }

    let mut x = vec![0.0; n];
    let t_offset = 0.28 * rr_mean.sqrt();
    for &(bt, amp) in &beats {
        let waves = PQRS
            .iter()
            .copied()
            .chain(std::iter::once((t_offset, 0.3, 0.05)));
        for (off, a, w) in waves {
            let centre = bt + off;
            let lo = (((centre - 5.0 * w) * fs).floor().max(0.0)) as usize;
            let hi = (((centre + 5.0 * w) * fs).ceil().max(0.0) as usize).min(n);
            for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
                let d = (i as f64 / fs - centre) / w;
                *v += amp * a * (-0.5 * d * d).exp();
            }
        }
    }
    let wander_phase = rng.random_range(0.0..2.0 * PI);
    for (i, v) in x.iter_mut().enumerate() {
        let ti = i as f64 / fs;
        *v += 0.1 * (2.0 * PI * 0.3 * ti + wander_phase).sin();
        *v += noise * rng.sample::<f64, _>(StandardNormal);
    }
    let r_peaks = beats
        .iter()
        .map(|b| b.0)
        .filter(|&bt| bt >= 0.0 && bt < duration)
        .collect();
    (x, r_peaks)
}

fn synth_eda(
    rng: &mut ChaCha8Rng,
    rate_per_min: f64,
    scl: f64,
    duration: f64,
    fs: f64,
    noise: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = (duration * fs).round() as usize;
    let mut onsets: Vec<f64> = Vec::new();
    if rate_per_min > 0.0 {
        let lambda = rate_per_min / 60.0;
        let mut t = 0.0;
        loop {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            t += -u.ln() / lambda;
            if t >= duration {
                break;
            }
            if onsets.last().is_none_or(|&l| t - l >= MIN_SCR_GAP_S) {
                onsets.push(t);
            }
        }
    }
    let peak_t = SCR_RISE_TAU * SCR_DECAY_TAU / (SCR_DECAY_TAU - SCR_RISE_TAU)
        * (SCR_DECAY_TAU / SCR_RISE_TAU).ln();
    let peak_val = (-peak_t / SCR_DECAY_TAU).exp() - (-peak_t / SCR_RISE_TAU).exp();
    let amps: Vec<f64> = onsets.iter().map(|_| rng.random_range(0.2..1.0)).collect();

    let slope = rng.random_range(-0.02..0.02);
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let mut v = scl + slope * t + 0.1 * (2.0 * PI * 0.01 * t + drift_phase).sin();
            for (&on, &a) in onsets.iter().zip(&amps) {
                if t >= on {
                    let d = t - on;
                    v += a * ((-d / SCR_DECAY_TAU).exp() - (-d / SCR_RISE_TAU).exp()) / peak_val;
                }
            }
            v + noise * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    (x, onsets)
}

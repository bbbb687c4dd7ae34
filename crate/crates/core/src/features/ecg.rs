use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::dsp::{band_power, lomb_grid, lomb_periodogram, PeakList};

/// Successive R-R intervals and the time each one starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RrSeries {
    pub intervals: Vec<f64>,
    pub onset_times: Vec<f64>,
}

impl RrSeries {
    /// Time covered from the first beat to the last.
    pub fn span(&self) -> f64 {
        match (self.onset_times.first(), self.onset_times.last(), self.intervals.last()) {
            (Some(first), Some(last), Some(iv)) => last + iv - first,
            _ => 0.0,
        }
    }
}

pub fn rr_from_peaks(peaks: &PeakList) -> Result<RrSeries, FeatureError> {
    if peaks.len() < 2 {
        return Err(FeatureError::InsufficientBeats(peaks.len()));
    }
    let fs = peaks.sampling_rate;
    let intervals = peaks
        .indices
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / fs)
        .collect();
    let onset_times = peaks.indices[..peaks.len() - 1]
        .iter()
        .map(|&i| i as f64 / fs)
        .collect();
    Ok(RrSeries { intervals, onset_times })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EcgTimeFeatures {
    pub hr: f64,
    pub rr_min: f64,
    pub rr_max: f64,
    pub rr_diff: f64,
    pub rr_mean: f64,
    pub rr_sd: f64,
    pub rr_cv: f64,
    pub rmssd: f64,
    pub sdsd: f64,
    pub nn50: f64,
    pub pnn50: f64,
}

/// Time-domain HRV statistics. `window_s` is the analysis window length
/// used for the beat-count heart rate; the beat count is `intervals + 1`.
pub fn ecg_time_features(rr: &RrSeries, window_s: f64) -> Result<EcgTimeFeatures, FeatureError> {
    let iv = &rr.intervals;
    if iv.is_empty() {
        return Err(FeatureError::InsufficientBeats(0));
    }
    if !(window_s > 0.0) {
        return Err(FeatureError::Invalid(format!("window length must be positive, got {window_s}")));
    }
    let n = iv.len() as f64;
    let rr_min = iv.iter().cloned().fold(f64::INFINITY, f64::min);
    let rr_max = iv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rr_mean = iv.iter().sum::<f64>() / n;
    let rr_sd = (iv.iter().map(|v| (v - rr_mean).powi(2)).sum::<f64>() / n).sqrt();

    let diffs: Vec<f64> = iv.windows(2).map(|w| w[1] - w[0]).collect();
    let (rmssd, sdsd, nn50, pnn50) = if diffs.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let m = diffs.len() as f64;
        let rmssd = (diffs.iter().map(|d| d * d).sum::<f64>() / m).sqrt();
        let dmean = diffs.iter().sum::<f64>() / m;
        let sdsd = (diffs.iter().map(|d| (d - dmean).powi(2)).sum::<f64>() / m).sqrt();
        let nn50 = diffs.iter().filter(|d| d.abs() > 0.05).count() as f64;
        (rmssd, sdsd, nn50, nn50 / m)
    };
    Ok(EcgTimeFeatures {
        hr: 60.0 * (n + 1.0) / window_s,
        rr_min,
        rr_max,
        rr_diff: rr_max - rr_min,
        rr_mean,
        rr_sd,
        rr_cv: if rr_mean > 0.0 { rr_sd / rr_mean } else { 0.0 },
        rmssd,
        sdsd,
        nn50,
        pnn50,
    })
}

pub const ULF_BAND: (f64, f64) = (0.0, 0.003);
pub const VLF_BAND: (f64, f64) = (0.003, 0.04);
pub const LF_BAND: (f64, f64) = (0.04, 0.15);
pub const HF_BAND: (f64, f64) = (0.15, 0.4);
pub const TOTAL_BAND: (f64, f64) = (0.0, 0.4);
const LOW_MID_BAND: (f64, f64) = (0.08, 0.15);

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EcgFreqFeatures {
    pub ulf: f64,
    pub vlf: f64,
    pub lf: f64,
    pub hf: f64,
    pub tp: f64,
    pub lf_norm: f64,
    pub hf_norm: f64,
    pub lf_hf: f64,
    pub lmhf: f64,
    /// Set when a ratio's denominator vanished and the ratio was zeroed.
    pub degenerate: bool,
}

/// Band powers of the Lomb periodogram of the RR series.
pub fn ecg_freq_features(rr: &RrSeries) -> Result<EcgFreqFeatures, FeatureError> {
    if rr.intervals.len() < 4 {
        return Err(FeatureError::InsufficientBeats(rr.intervals.len() + 1));
    }
    let grid = lomb_grid(rr.span());
    let spec = lomb_periodogram(&rr.onset_times, &rr.intervals, &grid)?;
    let band = |(lo, hi): (f64, f64)| band_power(&spec, lo, hi);
    let (ulf, vlf, lf, hf) = (band(ULF_BAND), band(VLF_BAND), band(LF_BAND), band(HF_BAND));
    let tp = band(TOTAL_BAND);
    let mut degenerate = false;
    let (lf_norm, hf_norm) = if lf + hf > 0.0 {
        (lf / (lf + hf), hf / (lf + hf))
    } else {
        degenerate = true;
        (0.0, 0.0)
    };
    let (lf_hf, lmhf) = if hf > 0.0 {
        (lf / hf, band(LOW_MID_BAND) / hf)
    } else {
        degenerate = true;
        (0.0, 0.0)
    };
    Ok(EcgFreqFeatures { ulf, vlf, lf, hf, tp, lf_norm, hf_norm, lf_hf, lmhf, degenerate })
}

/// The 20 ECG features under their canonical names.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EcgFeatureVector {
    #[serde(rename = "HR")]
    pub hr: f64,
    #[serde(rename = "RRmin")]
    pub rr_min: f64,
    #[serde(rename = "RRmax")]
    pub rr_max: f64,
    #[serde(rename = "RRdiff")]
    pub rr_diff: f64,
    #[serde(rename = "RRmean")]
    pub rr_mean: f64,
    #[serde(rename = "RRsd")]
    pub rr_sd: f64,
    #[serde(rename = "RRcv")]
    pub rr_cv: f64,
    #[serde(rename = "RMSSD")]
    pub rmssd: f64,
    #[serde(rename = "SDSD")]
    pub sdsd: f64,
    #[serde(rename = "NN50")]
    pub nn50: f64,
    #[serde(rename = "PNN50")]
    pub pnn50: f64,
    #[serde(rename = "ULF")]
    pub ulf: f64,
    #[serde(rename = "VLF")]
    pub vlf: f64,
    #[serde(rename = "LF")]
    pub lf: f64,
    #[serde(rename = "HF")]
    pub hf: f64,
    #[serde(rename = "TP")]
    pub tp: f64,
    #[serde(rename = "LFnorm")]
    pub lf_norm: f64,
    #[serde(rename = "HFnorm")]
    pub hf_norm: f64,
    #[serde(rename = "LF_HF")]
    pub lf_hf: f64,
    #[serde(rename = "LMHF")]
    pub lmhf: f64,
}

impl EcgFeatureVector {
    pub const NAMES: [&'static str; 20] = [
        "HR", "RRmin", "RRmax", "RRdiff", "RRmean", "RRsd", "RRcv", "RMSSD", "SDSD", "NN50", "PNN50",
        "ULF", "VLF", "LF", "HF", "TP", "LFnorm", "HFnorm", "LF_HF", "LMHF",
    ];

    pub fn from_parts(t: &EcgTimeFeatures, f: &EcgFreqFeatures) -> Self {
        Self {
            hr: t.hr,
            rr_min: t.rr_min,
            rr_max: t.rr_max,
            rr_diff: t.rr_diff,
            rr_mean: t.rr_mean,
            rr_sd: t.rr_sd,
            rr_cv: t.rr_cv,
            rmssd: t.rmssd,
            sdsd: t.sdsd,
            nn50: t.nn50,
            pnn50: t.pnn50,
            ulf: f.ulf,
            vlf: f.vlf,
            lf: f.lf,
            hf: f.hf,
            tp: f.tp,
            lf_norm: f.lf_norm,
            hf_norm: f.hf_norm,
            lf_hf: f.lf_hf,
            lmhf: f.lmhf,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.hr, self.rr_min, self.rr_max, self.rr_diff, self.rr_mean, self.rr_sd, self.rr_cv,
            self.rmssd, self.sdsd, self.nn50, self.pnn50, self.ulf, self.vlf, self.lf, self.hf,
            self.tp, self.lf_norm, self.hf_norm, self.lf_hf, self.lmhf,
        ]
    }
}

/// All 20 features for one window. Frequency features are zero (and
/// `degenerate` is reported) when fewer than four intervals exist.
pub fn ecg_features(peaks: &PeakList, window_s: f64) -> Result<(EcgFeatureVector, bool), FeatureError> {
    let rr = rr_from_peaks(peaks)?;
    let t = ecg_time_features(&rr, window_s)?;
    let f = match ecg_freq_features(&rr) {
        Ok(f) => f,
        Err(FeatureError::InsufficientBeats(_)) => EcgFreqFeatures { degenerate: true, ..Default::default() },
        Err(e) => return Err(e),
    };
    Ok((EcgFeatureVector::from_parts(&t, &f), f.degenerate))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;

    fn rr(intervals: &[f64]) -> RrSeries {
        let mut t = 0.0;
        let onset_times = intervals
            .iter()
            .map(|iv| {
                let o = t;
                t += iv;
                o
            })
            .collect();
        RrSeries { intervals: intervals.to_vec(), onset_times }
    }

    #[test]
    fn intervals_from_peaks() {
        let p = PeakList { indices: vec![0, 256, 512], sampling_rate: 256.0 };
        assert_eq!(rr_from_peaks(&p).unwrap().intervals, vec![1.0, 1.0]);
        let p = PeakList { indices: vec![0, 200, 456], sampling_rate: 256.0 };
        let r = rr_from_peaks(&p).unwrap();
        assert_eq!(r.intervals, vec![0.78125, 1.0]);
        assert_eq!(r.onset_times, vec![0.0, 0.78125]);
        let p = PeakList { indices: vec![10], sampling_rate: 256.0 };
        assert!(matches!(rr_from_peaks(&p), Err(FeatureError::InsufficientBeats(1))));
    }

    #[test]
    fn constant_intervals() {
        let f = ecg_time_features(&rr(&[0.8; 5]), 10.0).unwrap();
        assert_eq!((f.rr_sd, f.rmssd, f.sdsd, f.nn50), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn alternating_intervals() {
        let f = ecg_time_features(&rr(&[0.8, 0.86, 0.8]), 10.0).unwrap();
        assert_eq!(f.nn50, 2.0);
        assert_eq!(f.pnn50, 1.0);
        assert!((f.rmssd - 0.06).abs() < 1e-12);
    }

    #[test]
    fn heart_rate_from_beat_count() {
        let f = ecg_time_features(&rr(&[0.8; 11]), 10.0).unwrap();
        assert!((f.hr - 72.0).abs() < 1e-12);
        assert!(ecg_time_features(&rr(&[]), 10.0).is_err());
    }

    fn modulated(freq: f64, secs: f64) -> RrSeries {
        let mut t = 0.0;
        let mut iv = Vec::new();
        while t < secs {
            let v = 0.8 + 0.05 * (2.0 * PI * freq * t).sin();
            iv.push(v);
            t += v;
        }
        rr(&iv)
    }

    #[test]
    fn respiratory_modulation_lands_in_hf() {
        let f = ecg_freq_features(&modulated(0.25, 120.0)).unwrap();
        assert!(f.hf > f.lf);
        assert!((f.lf_norm + f.hf_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slow_modulation_lands_in_lf() {
        let f = ecg_freq_features(&modulated(0.1, 120.0)).unwrap();
        assert!(f.lf > f.hf);
        assert!(f.lf_norm > 0.5);
    }

    #[test]
    fn constant_rr_is_degenerate() {
        let f = ecg_freq_features(&rr(&[0.8; 12])).unwrap();
        assert!(f.degenerate);
        assert_eq!((f.lf_hf, f.lmhf), (0.0, 0.0));
        assert!(ecg_freq_features(&rr(&[0.8; 3])).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let (v, _) = ecg_features(
            &PeakList { indices: vec![0, 200, 410, 600, 815, 1010, 1230], sampling_rate: 256.0 },
            10.0,
        )
        .unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.contains("\"LF_HF\""));
        assert_eq!(serde_json::from_str::<EcgFeatureVector>(&s).unwrap(), v);
        assert_eq!(v.to_vec().len(), EcgFeatureVector::NAMES.len());
    }

    proptest! {
        #[test]
        fn invariants_hold(iv in prop::collection::vec(0.3f64..1.5, 5..40)) {
            let r = rr(&iv);
            let t = ecg_time_features(&r, 30.0).unwrap();
            prop_assert!(t.rr_min <= t.rr_mean + 1e-12 && t.rr_mean <= t.rr_max + 1e-12);
            prop_assert_eq!(t.rr_diff, t.rr_max - t.rr_min);
            prop_assert!((0.0..=1.0).contains(&t.pnn50));
            let f = ecg_freq_features(&r).unwrap();
            prop_assert!(f.ulf >= 0.0 && f.vlf >= 0.0 && f.lf >= 0.0 && f.hf >= 0.0 && f.tp >= 0.0);
            if f.lf + f.hf > 0.0 {
                prop_assert!((f.lf_norm + f.hf_norm - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn time_features_ignore_translation(shift in 0usize..5000, gaps in prop::collection::vec(60usize..400, 3..20)) {
            let mut idx = vec![0usize];
            for g in &gaps { idx.push(idx.last().unwrap() + g); }
            let a = PeakList { indices: idx.clone(), sampling_rate: 256.0 };
            let b = PeakList { indices: idx.iter().map(|i| i + shift).collect(), sampling_rate: 256.0 };
            let fa = ecg_time_features(&rr_from_peaks(&a).unwrap(), 10.0).unwrap();
            let fb = ecg_time_features(&rr_from_peaks(&b).unwrap(), 10.0).unwrap();
            prop_assert_eq!(fa, fb);
        }
    }
}

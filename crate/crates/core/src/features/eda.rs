use serde::{Deserialize, Serialize};

use crate::dsp::{periodogram, TimeSeries};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScrConfig {
    /// Minimum topographic prominence, in signal units.
    pub min_prominence: f64,
    /// Minimum spacing between accepted peaks.
    pub min_separation_s: f64,
    /// Upper edge of the band used for the spectral features.
    pub spectral_max_hz: f64,
}

impl Default for ScrConfig {
    fn default() -> Self {
        Self { min_prominence: 0.01, min_separation_s: 0.5, spectral_max_hz: 1.0 }
    }
}

/// One skin conductance response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrEvent {
    pub onset_t: f64,
    pub peak_t: f64,
    pub amplitude: f64,
    pub rise_time: f64,
    pub half_recovery_time: Option<f64>,
    pub area: f64,
    pub prominence: f64,
}

/// Local maxima (plateaus resolved to their middle sample), excluding the
/// first and last sample.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                out.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

fn prominence(x: &[f64], p: usize) -> f64 {
    let h = x[p];
    let mut left_min = h;
    for &v in x[..p].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[p + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Detects SCRs on a conditioned EDA signal.
pub fn eda_scr_events(eda: &TimeSeries, cfg: &ScrConfig) -> Vec<ScrEvent> {
    let x = &eda.values;
    let fs = eda.sampling_rate;
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let mut cands: Vec<(usize, f64)> = local_maxima(x)
        .into_iter()
        .map(|p| (p, prominence(x, p)))
        .filter(|&(_, prom)| prom >= cfg.min_prominence)
        .collect();

    // spacing: higher peaks win
    let min_sep = (cfg.min_separation_s * fs).round() as usize;
    cands.sort_by(|a, b| x[b.0].total_cmp(&x[a.0]).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| k.0.abs_diff(c.0) >= min_sep) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|k| k.0);

    let onsets: Vec<usize> = kept
        .iter()
        .map(|&(p, _)| {
            let mut j = p;
            while j > 0 && x[j - 1] < x[j] {
                j -= 1;
            }
            j
        })
        .collect();

    kept.iter()
        .enumerate()
        .map(|(k, &(p, prom))| {
            let on = onsets[k];
            let base = x[on];
            let amplitude = x[p] - base;
            let seg_end = onsets.get(k + 1).copied().unwrap_or(n - 1).max(p);
            let half = base + amplitude / 2.0;
            let recovery = (p + 1..=seg_end).find(|&i| x[i] <= half);
            let half_recovery_time = recovery.map(|i| {
                // linear interpolation between the bracketing samples
                let (a, b) = (x[i - 1], x[i]);
                let frac = if a > b { (a - half) / (a - b) } else { 1.0 };
                ((i - 1) as f64 + frac - p as f64) / fs
            });
            let end = recovery.unwrap_or(seg_end);
            let area = (on..end)
                .map(|i| 0.5 * ((x[i] - base) + (x[i + 1] - base)) / fs)
                .sum();
            ScrEvent {
                onset_t: on as f64 / fs,
                peak_t: p as f64 / fs,
                amplitude,
                rise_time: (p - on) as f64 / fs,
                half_recovery_time,
                area,
                prominence: prom,
            }
        })
        .collect()
}

/// Mean, population SD, min, max and sum of one SCR component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub sum: f64,
}

impl ComponentStats {
    /// Zero-filled for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let sum: f64 = values.iter().sum();
        let mean = sum / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            mean,
            sd,
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            sum,
        }
    }

    fn push_into(&self, out: &mut Vec<f64>) {
        out.extend([self.mean, self.sd, self.min, self.max, self.sum]);
    }
}

/// 30 time-domain and 2 frequency-domain EDA features.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EdaFeatureVector {
    pub rise_time: ComponentStats,
    pub half_recovery_time: ComponentStats,
    pub amplitude: ComponentStats,
    pub area: ComponentStats,
    pub prominence: ComponentStats,
    pub num_scr: f64,
    pub scl_mean: f64,
    pub scl_sd: f64,
    pub mav1diff_scl: f64,
    pub mav2diff_scl: f64,
    pub tp: f64,
    pub psd_mean: f64,
}

impl EdaFeatureVector {
    pub const NAMES: [&'static str; 32] = [
        "rise_time_mean", "rise_time_sd", "rise_time_min", "rise_time_max", "rise_time_sum",
        "half_recovery_time_mean", "half_recovery_time_sd", "half_recovery_time_min",
        "half_recovery_time_max", "half_recovery_time_sum",
        "amplitude_mean", "amplitude_sd", "amplitude_min", "amplitude_max", "amplitude_sum",
        "area_mean", "area_sd", "area_min", "area_max", "area_sum",
        "prominence_mean", "prominence_sd", "prominence_min", "prominence_max", "prominence_sum",
        "num_scr", "scl_mean", "scl_sd", "mav1diff_scl", "mav2diff_scl", "tp", "psd_mean",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(32);
        for c in [&self.rise_time, &self.half_recovery_time, &self.amplitude, &self.area, &self.prominence] {
            c.push_into(&mut v);
        }
        v.extend([
            self.num_scr,
            self.scl_mean,
            self.scl_sd,
            self.mav1diff_scl,
            self.mav2diff_scl,
            self.tp,
            self.psd_mean,
        ]);
        v
    }
}

pub fn eda_features(eda: &TimeSeries, cfg: &ScrConfig) -> EdaFeatureVector {
    let events = eda_scr_events(eda, cfg);
    let col = |f: fn(&ScrEvent) -> f64| -> Vec<f64> { events.iter().map(f).collect() };
    let half: Vec<f64> = events.iter().filter_map(|e| e.half_recovery_time).collect();

    let x = &eda.values;
    let n = x.len().max(1) as f64;
    let scl_mean = x.iter().sum::<f64>() / n;
    let scl_sd = (x.iter().map(|v| (v - scl_mean).powi(2)).sum::<f64>() / n).sqrt();
    let d1: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d2: Vec<f64> = d1.windows(2).map(|w| w[1] - w[0]).collect();
    let mav = |d: &[f64]| {
        if d.is_empty() {
            0.0
        } else {
            d.iter().map(|v| v.abs()).sum::<f64>() / d.len() as f64
        }
    };
    let spec = periodogram(x, eda.sampling_rate, cfg.spectral_max_hz);
    let df = if x.is_empty() { 0.0 } else { eda.sampling_rate / x.len() as f64 };
    let tp = spec.power.iter().sum::<f64>() * df;
    let psd_mean = if spec.power.is_empty() { 0.0 } else { spec.power.iter().sum::<f64>() / spec.power.len() as f64 };

    EdaFeatureVector {
        rise_time: ComponentStats::of(&col(|e| e.rise_time)),
        half_recovery_time: ComponentStats::of(&half),
        amplitude: ComponentStats::of(&col(|e| e.amplitude)),
        area: ComponentStats::of(&col(|e| e.area)),
        prominence: ComponentStats::of(&col(|e| e.prominence)),
        num_scr: events.len() as f64,
        scl_mean,
        scl_sd,
        mav1diff_scl: mav(&d1),
        mav2diff_scl: mav(&d2),
        tp,
        psd_mean,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const FS: f64 = 128.0;

    /// Instant rise to `amp` at `t0`, exponential decay with time constant `tau`.
    fn ideal(events: &[(f64, f64)], tau: f64, secs: f64) -> TimeSeries {
        let n = (secs * FS) as usize;
        let values = (0..n)
            .map(|i| {
                let t = i as f64 / FS;
                events
                    .iter()
                    .filter(|(t0, _)| t >= *t0)
                    .map(|(t0, a)| a * (-(t - t0) / tau).exp())
                    .sum()
            })
            .collect();
        TimeSeries::new(values, FS).unwrap()
    }

    #[test]
    fn single_ideal_event_half_recovery() {
        let ev = eda_scr_events(&ideal(&[(2.0, 1.0)], 2.0, 10.0), &ScrConfig::default());
        assert_eq!(ev.len(), 1);
        let hr = ev[0].half_recovery_time.unwrap();
        let expected = 2.0 * std::f64::consts::LN_2;
        assert!((hr - expected).abs() / expected < 0.1, "{hr}");
        assert!((ev[0].amplitude - 1.0).abs() < 1e-12);
        // the right-hand base is the window's last sample, still above zero
        let right_base = (-(10.0 - 1.0 / FS - 2.0) / 2.0f64).exp();
        assert!((ev[0].prominence - (1.0 - right_base)).abs() < 1e-12);
        // area up to the half-recovery point: integral of e^{-t/2} - 0 from 0 to 2 ln 2 = 2 * 0.5
        assert!((ev[0].area - 1.0).abs() < 0.02, "{}", ev[0].area);
    }

    #[test]
    fn ramp_has_no_events() {
        let ts = TimeSeries::new((0..1280).map(|i| i as f64 / 1280.0).collect(), FS).unwrap();
        assert!(eda_scr_events(&ts, &ScrConfig::default()).is_empty());
    }

    #[test]
    fn identical_events_have_equal_amplitude() {
        let ev = eda_scr_events(&ideal(&[(2.0, 0.5), (12.0, 0.5)], 1.0, 20.0), &ScrConfig::default());
        assert_eq!(ev.len(), 2);
        assert!((ev[0].amplitude - ev[1].amplitude).abs() < 1e-6);
    }

    #[test]
    fn unrecovered_event_has_no_half_recovery() {
        // decays too slowly to reach half amplitude within the window
        let ev = eda_scr_events(&ideal(&[(8.0, 1.0)], 20.0, 10.0), &ScrConfig::default());
        assert_eq!(ev.len(), 1);
        assert!(ev[0].half_recovery_time.is_none());
        let f = eda_features(&ideal(&[(8.0, 1.0)], 20.0, 10.0), &ScrConfig::default());
        assert_eq!(f.half_recovery_time, ComponentStats::default());
        assert_eq!(f.num_scr, 1.0);
    }

    #[test]
    fn constant_signal_features() {
        let ts = TimeSeries::new(vec![0.4; 1280], FS).unwrap();
        let f = eda_features(&ts, &ScrConfig::default());
        assert_eq!(f.num_scr, 0.0);
        assert!(f.scl_sd < 1e-12 && f.mav1diff_scl < 1e-12 && f.mav2diff_scl < 1e-12);
        assert!(f.tp.abs() < 1e-20);
        assert_eq!(f.to_vec().len(), EdaFeatureVector::NAMES.len());
    }

    #[test]
    fn json_roundtrip() {
        let f = eda_features(&ideal(&[(2.0, 0.7), (6.0, 0.4)], 1.0, 10.0), &ScrConfig::default());
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<EdaFeatureVector>(&s).unwrap(), f);
    }

    proptest! {
        #[test]
        fn offset_and_scale_properties(a1 in 0.2f64..1.0, a2 in 0.2f64..1.0, offset in -5.0f64..5.0, c in 0.5f64..3.0) {
            let base = ideal(&[(1.5, a1), (9.0, a2)], 1.5, 16.0);
            let f = eda_features(&base, &ScrConfig::default());
            let shifted = TimeSeries::new(base.values.iter().map(|v| v + offset).collect(), FS).unwrap();
            let fs = eda_features(&shifted, &ScrConfig::default());
            let scr = |v: &EdaFeatureVector| v.to_vec()[..26].to_vec();
            for (x, y) in scr(&f).iter().zip(scr(&fs)) {
                prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
            }
            prop_assert!((fs.scl_mean - f.scl_mean - offset).abs() < 1e-9);

            let scaled = TimeSeries::new(base.values.iter().map(|v| v * c).collect(), FS).unwrap();
            let fc = eda_features(&scaled, &ScrConfig::default());
            prop_assert_eq!(fc.num_scr, f.num_scr);
            for (x, y) in [(f.amplitude, fc.amplitude), (f.area, fc.area), (f.prominence, fc.prominence)] {
                prop_assert!((x.mean * c - y.mean).abs() < 1e-9 && (x.sum * c - y.sum).abs() < 1e-9);
            }
            for (x, y) in [(f.rise_time, fc.rise_time), (f.half_recovery_time, fc.half_recovery_time)] {
                prop_assert!((x.mean - y.mean).abs() < 1e-9 && (x.max - y.max).abs() < 1e-9);
            }
            if f.num_scr > 0.0 {
                for s in [f.rise_time, f.amplitude, f.area, f.prominence] {
                    prop_assert!(s.min <= s.mean + 1e-12 && s.mean <= s.max + 1e-12);
                }
            }
        }
    }
}

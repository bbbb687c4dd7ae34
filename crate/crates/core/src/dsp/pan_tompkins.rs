//! Pan-Tompkins R-peak detection on a band-passed ECG.
//!
//! Stages: five-point derivative, rectification, moving-window
//! integration, adaptive dual thresholds with search-back, and refinement of
//! each detection to the band-passed maximum nearby.

use serde::{Deserialize, Serialize};

use super::{centered_mean, DspError, PeakList, TimeSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rectifier {
    Square,
    Abs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanTompkinsConfig {
    pub rectifier: Rectifier,
    /// Moving-window integrator width in seconds.
    pub integration_window_s: f64,
    pub refractory_s: f64,
    /// Gap without accepted beats that triggers search-back.
    pub searchback_after_s: f64,
    pub searchback: bool,
    /// Half-width of the refinement neighbourhood in seconds.
    pub refine_s: f64,
}

impl Default for PanTompkinsConfig {
    fn default() -> Self {
        Self {
            rectifier: Rectifier::Square,
            integration_window_s: 0.150,
            refractory_s: 0.200,
            searchback_after_s: 2.0,
            searchback: true,
            refine_s: 0.050,
        }
    }
}

struct Levels {
    spk: f64,
    npk: f64,
}

impl Levels {
    fn thr1(&self) -> f64 {
        self.npk + 0.25 * (self.spk - self.npk)
    }
    fn thr2(&self) -> f64 {
        0.5 * self.thr1()
    }
}

/// Detects R-peaks with the default configuration.
pub fn pan_tompkins_rpeaks(ecg: &TimeSeries) -> Result<PeakList, DspError> {
    detect(ecg, &PanTompkinsConfig::default())
}

impl PanTompkinsConfig {
    pub fn detect(&self, ecg: &TimeSeries) -> Result<PeakList, DspError> {
        detect(ecg, self)
    }
}

fn detect(ecg: &TimeSeries, cfg: &PanTompkinsConfig) -> Result<PeakList, DspError> {
    let fs = ecg.sampling_rate;
    let x = &ecg.values;
    let n = x.len();
    let need = (2.0 * fs).ceil() as usize;
    if n < need {
        return Err(DspError::TooShort { got: n, need });
    }
    let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];
    let rect: Vec<f64> = (0..n as isize)
        .map(|i| {
            let d = (2.0 * at(i + 1) + at(i + 2) - 2.0 * at(i - 1) - at(i - 2)) * fs / 8.0;
            match cfg.rectifier {
                Rectifier::Square => d * d,
                Rectifier::Abs => d.abs(),
            }
        })
        .collect();
    let win = ((cfg.integration_window_s * fs).round() as usize).max(1);
    let integ = centered_mean(&rect, win);

    let peak_level = integ.iter().cloned().fold(0.0, f64::max);
    if !(peak_level > 0.0) {
        return Ok(PeakList { indices: Vec::new(), sampling_rate: fs });
    }

    let refractory = (cfg.refractory_s * fs).round() as usize;
    let candidates = candidate_peaks(&integ, refractory);

    let learn = need.min(n);
    let learn_max = integ[..learn].iter().cloned().fold(0.0, f64::max);
    let learn_mean = integ[..learn].iter().sum::<f64>() / learn as f64;
    let mut lv = Levels { spk: learn_max / 3.0, npk: learn_mean / 2.0 };

    let gap = (cfg.searchback_after_s * fs).round() as usize;
    let refine = (cfg.refine_s * fs).round() as usize;
    let mut accepted: Vec<usize> = Vec::new();
    let mut rejected: Vec<usize> = Vec::new();

    let searchback = |until: usize, accepted: &mut Vec<usize>, rejected: &mut Vec<usize>, lv: &mut Levels| {
        loop {
            let last = accepted.last().copied();
            let since = last.unwrap_or(0);
            if until <= since || until - since <= gap {
                return;
            }
            let lo = last.map_or(0, |l| l + refractory);
            let hi = until.saturating_sub(refractory);
            let thr2 = lv.thr2();
            let best = rejected
                .iter()
                .copied()
                .filter(|&c| c >= lo && c <= hi && integ[c] >= thr2)
                .max_by(|&a, &b| integ[a].total_cmp(&integ[b]).then(b.cmp(&a)));
            match best {
                Some(c) => {
                    lv.spk = 0.25 * integ[c] + 0.75 * lv.spk;
                    rejected.retain(|&r| r != c);
                    let pos = accepted.partition_point(|&a| a < c);
                    accepted.insert(pos, c);
                    // anything before the recovered beat is no longer eligible
                    rejected.retain(|&r| r > c);
                }
                None => return,
            }
        }
    };

    for &c in &candidates {
        if cfg.searchback {
            searchback(c, &mut accepted, &mut rejected, &mut lv);
        }
        let v = integ[c];
        let clear = accepted.last().is_none_or(|&l| c >= l + refractory);
        if v >= lv.thr1() && clear {
            lv.spk = 0.125 * v + 0.875 * lv.spk;
            accepted.push(c);
            rejected.clear();
        } else {
            lv.npk = 0.125 * v + 0.875 * lv.npk;
            rejected.push(c);
        }
    }
    if cfg.searchback {
        searchback(n, &mut accepted, &mut rejected, &mut lv);
    }

    // Refine onto the band-passed maximum and enforce the refractory period
    // on the refined positions.
    let mut peaks: Vec<usize> = Vec::with_capacity(accepted.len());
    for c in accepted {
        let lo = c.saturating_sub(refine);
        let hi = (c + refine).min(n - 1);
        let r = (lo..=hi)
            .max_by(|&a, &b| x[a].total_cmp(&x[b]).then(b.cmp(&a)))
            .unwrap_or(c);
        // a maximum pinned to the first or last sample belongs to a beat
        // outside the record
        if r == 0 || r == n - 1 {
            continue;
        }
        match peaks.last_mut() {
            Some(prev) if r < *prev + refractory => {
                if x[r] > x[*prev] {
                    *prev = r;
                }
            }
            _ => peaks.push(r),
        }
    }
    Ok(PeakList { indices: peaks, sampling_rate: fs })
}

/// Local maxima of the integrated signal, thinned so that no two are closer
/// than `spacing` samples (larger ones win).
fn candidate_peaks(integ: &[f64], spacing: usize) -> Vec<usize> {
    let n = integ.len();
    let mut maxima: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || integ[i] > integ[i - 1];
            let right = i + 1 == n || integ[i] >= integ[i + 1];
            left && right && integ[i] > 0.0
        })
        .collect();
    maxima.sort_by(|&a, &b| integ[b].total_cmp(&integ[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for m in maxima {
        if kept.iter().all(|&k| k.abs_diff(m) >= spacing) {
            kept.push(m);
        }
    }
    kept.sort_unstable();
    kept
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dsp::butterworth_bandpass_zero_phase;

    const FS: f64 = 256.0;

    /// Q/R/S Gaussians at `beats` (time, R amplitude), small noise, then 5-15 Hz band-pass.
    fn ecg(beats: &[(f64, f64)], secs: f64, noise_seed: u64) -> TimeSeries {
        let n = (secs * FS) as usize;
        let mut state = noise_seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let values = (0..n)
            .map(|i| {
                let t = i as f64 / FS;
                let mut v = 0.0;
                for &(bt, a) in beats {
                    for (off, amp, w) in [(-0.03, -0.12, 0.008), (0.0, 1.0, 0.010), (0.03, -0.2, 0.009)] {
                        let d = (t - bt - off) / w;
                        v += a * amp * (-0.5 * d * d).exp();
                    }
                }
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v + 0.01 * (((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5)
            })
            .collect();
        let raw = TimeSeries::new(values, FS).unwrap();
        butterworth_bandpass_zero_phase(&raw, 5.0, 15.0, 2).unwrap()
    }

    fn regular(bpm: f64, secs: f64, start: f64) -> Vec<(f64, f64)> {
        let rr = 60.0 / bpm;
        (0..).map(|i| start + i as f64 * rr).take_while(|&t| t < secs).map(|t| (t, 1.0)).collect()
    }

    fn matched(det: &PeakList, truth: &[(f64, f64)], tol: f64) -> usize {
        truth
            .iter()
            .filter(|(t, _)| det.times().iter().any(|d| (d - t).abs() <= tol))
            .count()
    }

    #[test]
    fn sixty_bpm_clean() {
        let beats = regular(60.0, 10.0, 0.5);
        let det = pan_tompkins_rpeaks(&ecg(&beats, 10.0, 1)).unwrap();
        assert!((9..=11).contains(&det.len()), "{}", det.len());
        assert_eq!(matched(&det, &beats, 0.02), beats.len());
    }

    #[test]
    fn flat_signal_has_no_peaks() {
        let flat = TimeSeries::new(vec![0.0; 2560], FS).unwrap();
        assert!(pan_tompkins_rpeaks(&flat).unwrap().is_empty());
    }

    #[test]
    fn too_short_is_an_error() {
        let short = TimeSeries::new(vec![0.0; 300], FS).unwrap();
        assert!(matches!(pan_tompkins_rpeaks(&short), Err(DspError::TooShort { .. })));
    }

    #[test]
    fn halved_beat_needs_searchback() {
        // 50 bpm so one missed beat leaves a gap longer than 2 s. Squared,
        // a 0.4 beat carries 16% of the energy: between THR2 and THR1 once
        // the signal level has settled.
        let mut beats = regular(50.0, 14.0, 0.6);
        beats[8].1 = 0.4;
        let x = ecg(&beats, 14.0, 2);
        let with = pan_tompkins_rpeaks(&x).unwrap();
        let without = PanTompkinsConfig { searchback: false, ..Default::default() }.detect(&x).unwrap();
        let weak = [beats[8]];
        assert_eq!(matched(&with, &weak, 0.02), 1);
        assert_eq!(matched(&without, &weak, 0.02), 0);
        assert_eq!(matched(&with, &beats, 0.02), beats.len());
    }

    #[test]
    fn abs_rectifier_also_detects() {
        let beats = regular(75.0, 10.0, 0.3);
        let cfg = PanTompkinsConfig { rectifier: Rectifier::Abs, ..Default::default() };
        let det = cfg.detect(&ecg(&beats, 10.0, 3)).unwrap();
        assert_eq!(matched(&det, &beats, 0.02), beats.len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn spacing_respects_refractory(bpm in 40.0f64..180.0, start in 0.1f64..0.5, seed in 0u64..1000) {
            let det = pan_tompkins_rpeaks(&ecg(&regular(bpm, 10.0, start), 10.0, seed)).unwrap();
            for w in det.indices.windows(2) {
                prop_assert!(w[1] > w[0]);
                prop_assert!((w[1] - w[0]) as f64 / FS >= 0.2);
            }
        }
    }
}

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::DspError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    /// Frequency holding the largest power, if any.
    pub fn peak_frequency(&self) -> Option<f64> {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| self.frequencies[i])
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }
}

/// Default analysis grid for a series spanning `duration` seconds: from
/// `1/duration` to 0.5 Hz in steps of `1/(4 * duration)`.
pub fn lomb_grid(duration: f64) -> Vec<f64> {
    if !(duration > 0.0) {
        return Vec::new();
    }
    let f0 = 1.0 / duration;
    let step = 1.0 / (4.0 * duration);
    let n = ((0.5 - f0) / step + 1e-9).floor();
    if n < 0.0 {
        return Vec::new();
    }
    (0..=n as usize).map(|k| f0 + k as f64 * step).collect()
}

/// Normalized Lomb periodogram of an irregularly sampled series.
///
/// Values are mean-centered and the power at each frequency is divided by
/// twice the sample variance. A series with no variation yields all-zero
/// power.
pub fn lomb_periodogram(times: &[f64], values: &[f64], freqs: &[f64]) -> Result<Spectrum, DspError> {
    let n = times.len();
    if n != values.len() {
        return Err(DspError::InvalidParameter(format!(
            "times ({n}) and values ({}) differ in length",
            values.len()
        )));
    }
    if n < 4 {
        return Err(DspError::TooShort { got: n, need: 4 });
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DspError::InvalidParameter("times must be strictly increasing".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let var = centered.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    let spread = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if spread <= 1e-12 * mean.abs().max(1.0) {
        return Ok(Spectrum { frequencies: freqs.to_vec(), power: vec![0.0; freqs.len()] });
    }
    // Times relative to the first sample keep the trigonometric arguments
    // small; the periodogram is shift-invariant.
    let t0 = times[0];
    let rel: Vec<f64> = times.iter().map(|t| t - t0).collect();

    let power = freqs
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f;
            if w <= 0.0 {
                return 0.0;
            }
            let (s2, c2) = rel.iter().fold((0.0, 0.0), |(s, c), t| {
                let (sn, cs) = (2.0 * w * t).sin_cos();
                (s + sn, c + cs)
            });
            let tau = s2.atan2(c2) / (2.0 * w);
            let (mut yc, mut ys, mut cc, mut ss) = (0.0, 0.0, 0.0, 0.0);
            for (t, y) in rel.iter().zip(&centered) {
                let (sn, cs) = (w * (t - tau)).sin_cos();
                yc += y * cs;
                ys += y * sn;
                cc += cs * cs;
                ss += sn * sn;
            }
            let mut p = 0.0;
            if cc > 1e-12 {
                p += yc * yc / cc;
            }
            if ss > 1e-12 {
                p += ys * ys / ss;
            }
            p / (2.0 * var)
        })
        .collect();
    Ok(Spectrum { frequencies: freqs.to_vec(), power })
}

/// One-sided power spectral density of a uniformly sampled signal at the
/// DFT bins in `(0, fmax]`. The mean is removed first.
pub fn periodogram(values: &[f64], fs: f64, fmax: f64) -> Spectrum {
    let n = values.len();
    if n < 2 {
        return Spectrum { frequencies: Vec::new(), power: Vec::new() };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let df = fs / n as f64;
    let kmax = ((fmax / df) + 1e-9).floor() as usize;
    let kmax = kmax.min(n / 2);
    let mut frequencies = Vec::with_capacity(kmax);
    let mut power = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let w = 2.0 * PI * k as f64 / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in values.iter().enumerate() {
            let (s, c) = (w * i as f64).sin_cos();
            re += (v - mean) * c;
            im -= (v - mean) * s;
        }
        let scale = if 2 * k == n { 1.0 } else { 2.0 };
        frequencies.push(k as f64 * df);
        power.push(scale * (re * re + im * im) / (fs * n as f64));
    }
    Spectrum { frequencies, power }
}

/// Integral of the piecewise-linear interpolant of `spec` over `[lo, hi]`.
/// Power outside the grid's frequency range counts as zero.
pub fn band_power(spec: &Spectrum, lo: f64, hi: f64) -> f64 {
    let f = &spec.frequencies;
    let p = &spec.power;
    if f.len() < 2 || hi <= lo {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..f.len() - 1 {
        let (a, b) = (f[i], f[i + 1]);
        let left = a.max(lo);
        let right = b.min(hi);
        if right <= left {
            continue;
        }
        let slope = (p[i + 1] - p[i]) / (b - a);
        let pl = p[i] + slope * (left - a);
        let pr = p[i] + slope * (right - a);
        total += 0.5 * (pl + pr) * (right - left);
    }
    total
}

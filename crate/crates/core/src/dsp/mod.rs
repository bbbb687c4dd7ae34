//! Signal conditioning: zero-phase Butterworth filtering, smoothing,
//! resampling, normalization, windowing, R-peak detection and spectral
//! estimation for irregularly sampled series.

mod filter;
mod pan_tompkins;
mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::Sos;
pub use pan_tompkins::{pan_tompkins_rpeaks, PanTompkinsConfig, Rectifier};
pub use spectral::{band_power, lomb_grid, lomb_periodogram, periodogram, Spectrum};

/// Prototype order used for every Butterworth stage (applied twice by
/// forward-backward filtering).
pub const DEFAULT_FILTER_ORDER: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("filter design produced unstable coefficients")]
    Unstable,
    #[error("signal too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

/// Uniformly sampled signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub sampling_rate: f64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, sampling_rate: f64) -> Result<Self, DspError> {
        if !(sampling_rate > 0.0 && sampling_rate.is_finite()) {
            return Err(DspError::InvalidParameter(format!(
                "sampling rate must be positive, got {sampling_rate}"
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(Self { values, sampling_rate })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Duration in seconds (`len / rate`).
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.sampling_rate
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self { values, sampling_rate: self.sampling_rate }
    }
}

/// Sorted sample indices of detected events.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakList {
    pub indices: Vec<usize>,
    pub sampling_rate: f64,
}

impl PeakList {
    pub fn times(&self) -> Vec<f64> {
        self.indices
            .iter()
            .map(|&i| i as f64 / self.sampling_rate)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Zero-phase Butterworth band-pass (forward then backward pass).
pub fn butterworth_bandpass_zero_phase(
    x: &TimeSeries,
    low: f64,
    high: f64,
    order: usize,
) -> Result<TimeSeries, DspError> {
    let sos = Sos::butter_bandpass(order, low, high, x.sampling_rate)?;
    Ok(x.with_values(sos.filtfilt(&x.values)))
}

/// Zero-phase Butterworth low-pass.
pub fn lowpass(x: &TimeSeries, cutoff: f64, order: usize) -> Result<TimeSeries, DspError> {
    let sos = Sos::butter_lowpass(order, cutoff, x.sampling_rate)?;
    Ok(x.with_values(sos.filtfilt(&x.values)))
}

/// Centered moving average; windows at the edges are truncated to the
/// available samples. For even `n` the window extends one sample further to
/// the left.
pub fn moving_average(x: &TimeSeries, n: usize) -> Result<TimeSeries, DspError> {
    if n < 1 {
        return Err(DspError::InvalidParameter("moving average length must be >= 1".into()));
    }
    if n > x.len() {
        return Err(DspError::InvalidParameter(format!(
            "moving average length {n} exceeds signal length {}",
            x.len()
        )));
    }
    Ok(x.with_values(centered_mean(&x.values, n)))
}

pub(crate) fn centered_mean(values: &[f64], n: usize) -> Vec<f64> {
    let len = values.len();
    let left = n / 2;
    let right = n - 1 - left;
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        prefix.push(acc);
    }
    (0..len)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(len - 1);
            // Direct summation for short windows keeps constants exact.
            if hi - lo < 64 {
                values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            } else {
                (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1) as f64
            }
        })
        .collect()
}

/// Resample onto a uniform grid at `target` Hz spanning the same duration.
/// Down-sampling applies a zero-phase anti-alias low-pass at `0.45 * target`
/// first; values between input samples are linearly interpolated.
pub fn resample(x: &TimeSeries, target: f64) -> Result<TimeSeries, DspError> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(DspError::InvalidParameter(format!("target rate must be positive, got {target}")));
    }
    if x.is_empty() {
        return Ok(TimeSeries { values: Vec::new(), sampling_rate: target });
    }
    let src = if target < x.sampling_rate {
        lowpass(x, 0.45 * target, DEFAULT_FILTER_ORDER)?.values
    } else {
        x.values.clone()
    };
    let out_len = (x.duration() * target).round() as usize;
    let ratio = x.sampling_rate / target;
    let last = src.len() - 1;
    let values = (0..out_len)
        .map(|j| {
            let pos = j as f64 * ratio;
            let i = pos.floor() as usize;
            if i >= last {
                return src[last];
            }
            let frac = pos - i as f64;
            if frac == 0.0 {
                src[i]
            } else {
                src[i] + frac * (src[i + 1] - src[i])
            }
        })
        .collect();
    Ok(TimeSeries { values, sampling_rate: target })
}

/// Affine map onto [0, 1]; a constant signal maps to 0.5 everywhere.
pub fn minmax_normalize(x: &TimeSeries) -> TimeSeries {
    x.with_values(minmax_with_bounds(&x.values, min_max(&x.values)))
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Normalizes with externally supplied bounds (e.g. per-subject extrema),
/// clamping into [0, 1].
pub(crate) fn minmax_with_bounds(values: &[f64], (lo, hi): (f64, f64)) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.5; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / span).clamp(0.0, 1.0))
        .collect()
}

/// Consecutive non-overlapping windows of `round(seconds * rate)` samples;
/// a trailing partial window is dropped.
pub fn window(x: &TimeSeries, seconds: f64) -> Result<Vec<Vec<f64>>, DspError> {
    if !(seconds > 0.0) {
        return Err(DspError::InvalidParameter(format!("window length must be positive, got {seconds}")));
    }
    let n = (seconds * x.sampling_rate).round() as usize;
    if n == 0 {
        return Err(DspError::InvalidParameter("window shorter than one sample".into()));
    }
    Ok(x.values.chunks_exact(n).map(|c| c.to_vec()).collect())
}

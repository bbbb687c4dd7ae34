//! Butterworth IIR design (bilinear transform, second-order sections) and
//! forward-backward zero-phase application.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::DspError;

/// Cascade of second-order sections, each stored as `[b0, b1, b2, a1, a2]`
/// with the leading denominator coefficient normalized to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Sos {
    sections: Vec<[f64; 5]>,
}

impl Sos {
    pub fn sections(&self) -> &[[f64; 5]] {
        &self.sections
    }

    /// Digital Butterworth low-pass of the given prototype order.
    pub fn butter_lowpass(order: usize, cutoff: f64, fs: f64) -> Result<Self, DspError> {
        check_order(order)?;
        let nyq = fs / 2.0;
        if !(cutoff > 0.0 && cutoff < nyq) {
            return Err(DspError::InvalidParameter(format!(
                "low-pass cutoff {cutoff} Hz must lie in (0, {nyq})"
            )));
        }
        let wc = prewarp(cutoff, fs);
        let proto = prototype_poles(order);
        let poles: Vec<Complex64> = proto.iter().map(|p| p * wc).collect();
        let gain = wc.powi(order as i32);
        Self::from_analog(&[], &poles, gain, fs)
    }

    /// Digital Butterworth band-pass; the analog prototype of `order` poles
    /// becomes a filter with `2 * order` poles.
    pub fn butter_bandpass(order: usize, low: f64, high: f64, fs: f64) -> Result<Self, DspError> {
        check_order(order)?;
        let nyq = fs / 2.0;
        if !(low > 0.0 && low < high && high < nyq) {
            return Err(DspError::InvalidParameter(format!(
                "band-pass edges ({low}, {high}) Hz must satisfy 0 < low < high < {nyq}"
            )));
        }
        let w1 = prewarp(low, fs);
        let w2 = prewarp(high, fs);
        let bw = w2 - w1;
        let w0_sq = w1 * w2;
        let mut poles = Vec::with_capacity(2 * order);
        for p in prototype_poles(order) {
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0_sq).sqrt();
            poles.push((pb + disc) / 2.0);
            poles.push((pb - disc) / 2.0);
        }
        let zeros = vec![Complex64::new(0.0, 0.0); order];
        let gain = bw.powi(order as i32);
        Self::from_analog(&zeros, &poles, gain, fs)
    }

    fn from_analog(
        zeros: &[Complex64],
        poles: &[Complex64],
        gain: f64,
        fs: f64,
    ) -> Result<Self, DspError> {
        let fs2 = Complex64::new(2.0 * fs, 0.0);
        let dz: Vec<Complex64> = zeros.iter().map(|z| (fs2 + z) / (fs2 - z)).collect();
        let dp: Vec<Complex64> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
        let num: Complex64 = zeros.iter().map(|z| fs2 - z).product();
        let den: Complex64 = poles.iter().map(|p| fs2 - p).product();
        let k = gain * (num / den).re;

        if dp.iter().any(|p| !p.is_finite() || p.norm() >= 1.0 - 1e-12) {
            return Err(DspError::Unstable);
        }

        // Zeros at analog infinity map to z = -1.
        let mut zlist: Vec<f64> = dz.iter().map(|z| z.re).collect();
        zlist.extend(std::iter::repeat_n(-1.0, poles.len() - zeros.len()));

        let mut complex_pairs = Vec::new();
        let mut reals = Vec::new();
        for p in &dp {
            if p.im > 1e-14 {
                complex_pairs.push(*p);
            } else if p.im.abs() <= 1e-14 {
                reals.push(p.re);
            }
        }

        let mut sections = Vec::new();
        let mut zi = zlist.into_iter();
        for p in complex_pairs {
            let (z1, z2) = (zi.next().unwrap_or(0.0), zi.next().unwrap_or(0.0));
            sections.push([1.0, -(z1 + z2), z1 * z2, -2.0 * p.re, p.norm_sqr()]);
        }
        let mut rit = reals.chunks(2);
        for chunk in &mut rit {
            if chunk.len() == 2 {
                let (z1, z2) = (zi.next().unwrap_or(0.0), zi.next().unwrap_or(0.0));
                sections.push([
                    1.0,
                    -(z1 + z2),
                    z1 * z2,
                    -(chunk[0] + chunk[1]),
                    chunk[0] * chunk[1],
                ]);
            } else {
                let z1 = zi.next().unwrap_or(0.0);
                sections.push([1.0, -z1, 0.0, -chunk[0], 0.0]);
            }
        }
        if let Some(first) = sections.first_mut() {
            first[0] *= k;
            first[1] *= k;
            first[2] *= k;
        }
        if sections.iter().flatten().any(|c| !c.is_finite()) {
            return Err(DspError::Unstable);
        }
        Ok(Sos { sections })
    }

    /// Complex frequency response at `f` Hz.
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let w = 2.0 * PI * f / fs;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| (s[0] + s[1] * z1 + s[2] * z2) / (1.0 + s[3] * z1 + s[4] * z2))
            .product()
    }

    /// Steady-state initial conditions for a unit step input.
    fn step_state(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let g = (s[0] + s[1] + s[2]) / (1.0 + s[3] + s[4]);
                let y = g * level;
                let z2 = s[2] * level - s[4] * y;
                let z1 = s[1] * level - s[3] * y + z2;
                level = y;
                [z1, z2]
            })
            .collect()
    }

    fn run(&self, x: &[f64], state: &mut [[f64; 2]]) -> Vec<f64> {
        let mut y = x.to_vec();
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            for v in y.iter_mut() {
                let xin = *v;
                let out = s[0] * xin + z[0];
                z[0] = s[1] * xin - s[3] * out + z[1];
                z[1] = s[2] * xin - s[4] * out;
                *v = out;
            }
        }
        y
    }

    /// Causal single-pass filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut state = vec![[0.0; 2]; self.sections.len()];
        self.run(x, &mut state)
    }

    /// Zero-phase filtering: odd-extended edges, steady-state initial
    /// conditions, one forward and one backward pass.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }

        let zi = self.step_state();
        let mut state: Vec<[f64; 2]> = zi
            .iter()
            .map(|z| [z[0] * ext[0], z[1] * ext[0]])
            .collect();
        let mut fwd = self.run(&ext, &mut state);
        fwd.reverse();
        let mut state: Vec<[f64; 2]> = zi
            .iter()
            .map(|z| [z[0] * fwd[0], z[1] * fwd[0]])
            .collect();
        let mut back = self.run(&fwd, &mut state);
        back.reverse();
        back[pad..pad + n].to_vec()
    }
}

fn check_order(order: usize) -> Result<(), DspError> {
    if order == 0 {
        return Err(DspError::InvalidParameter("filter order must be >= 1".into()));
    }
    Ok(())
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

/// Left-half-plane poles of the normalized analog Butterworth prototype.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    let n = order as f64;
    (0..order)
        .map(|k| {
            let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

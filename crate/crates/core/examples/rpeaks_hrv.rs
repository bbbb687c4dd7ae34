//! Detect R-peaks on a synthetic ECG and compute HRV features, including
//! the Lomb periodogram of the RR series.

use biosig_affect::corpus::{synth_corpus, SynthConfig};
use biosig_affect::dsp::{butterworth_bandpass_zero_phase, lomb_grid, lomb_periodogram, pan_tompkins_rpeaks, TimeSeries};
use biosig_affect::features::{ecg_features, rr_from_peaks, EcgFeatureVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (corpus, truth) = synth_corpus(&SynthConfig::new(1, 1, 60.0, 9))?;
    let (key, ecg, _) = &corpus.trials()[0];
    let raw = TimeSeries::new(ecg.samples.clone(), ecg.sampling_rate)?;
    let band = butterworth_bandpass_zero_phase(&raw, 5.0, 15.0, 2)?;
    let peaks = pan_tompkins_rpeaks(&band)?;
    println!("{key}: detected {} beats, generator placed {}", peaks.len(), truth[key].r_peak_times.len());

    let (f, degenerate) = ecg_features(&peaks, raw.duration())?;
    for (name, v) in EcgFeatureVector::NAMES.iter().zip(f.to_vec()) {
        println!("  {name:<10} {v:.5}");
    }
    println!("  degenerate spectrum: {degenerate}");

    let rr = rr_from_peaks(&peaks)?;
    let spec = lomb_periodogram(&rr.onset_times, &rr.intervals, &lomb_grid(rr.span()))?;
    println!("RR spectrum peak at {:.3} Hz", spec.peak_frequency().unwrap_or(f64::NAN));
    Ok(())
}

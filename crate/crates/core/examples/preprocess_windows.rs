//! Condition raw recordings into aligned, normalized 10 s window pairs.

use biosig_affect::corpus::{synth_corpus, SynthConfig};
use biosig_affect::preprocess::{build_windows, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (corpus, _) = synth_corpus(&SynthConfig::new(2, 3, 30.0, 1))?;
    let cfg = PreprocessConfig::default();
    let pairs = build_windows(&corpus, &cfg)?;
    println!("{} windows (ECG {} samples, EDA {} samples)", pairs.len(), cfg.ecg_window_len(), cfg.eda_window_len());
    for p in pairs.iter().take(4) {
        let (lo, hi) = p.ecg.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!("{} {:?}: ECG range [{lo:.3}, {hi:.3}]", p.key, p.label);
    }
    Ok(())
}

//! Skin conductance responses and the 32 EDA features of one window.

use biosig_affect::corpus::{synth_corpus, SynthConfig};
use biosig_affect::dsp::TimeSeries;
use biosig_affect::features::{eda_features, eda_scr_events, EdaFeatureVector, ScrConfig};
use biosig_affect::preprocess::{build_windows, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (corpus, _) = synth_corpus(&SynthConfig::new(1, 2, 10.0, 4))?;
    let cfg = ScrConfig::default();
    for p in build_windows(&corpus, &PreprocessConfig::default())? {
        let eda = TimeSeries::new(p.eda.clone(), 128.0)?;
        let events = eda_scr_events(&eda, &cfg);
        println!("{} {:?}: {} SCRs", p.key, p.label, events.len());
        let f = eda_features(&eda, &cfg).to_vec();
        for (name, v) in EdaFeatureVector::NAMES.iter().zip(&f).filter(|(n, _)| !n.contains("_sd")) {
            println!("  {name:<26} {v:.5}");
        }
    }
    Ok(())
}

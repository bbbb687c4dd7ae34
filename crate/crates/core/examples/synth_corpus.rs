//! Generate a small synthetic ECG/EDA corpus and print what came out.

use biosig_affect::corpus::{synth_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (corpus, truth) = synth_corpus(&SynthConfig::new(3, 4, 20.0, 42))?;
    println!("{} records, {} trials", corpus.len(), corpus.trials().len());
    for (key, gt) in truth.iter().take(6) {
        println!(
            "{key}: {:?} hr {:.1} bpm, {} beats, {} SCRs",
            gt.true_arousal_level,
            gt.hr_bpm,
            gt.r_peak_times.len(),
            gt.scr_event_times.len()
        );
    }
    Ok(())
}

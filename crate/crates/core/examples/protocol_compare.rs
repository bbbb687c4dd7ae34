//! A reduced k-fold protocol comparing latent and hand-crafted modes on a
//! synthetic corpus. Small widths and few epochs keep it quick.

use biosig_affect::corpus::{synth_corpus, SynthConfig};
use biosig_affect::model::{run_protocols, Mode, ProtocolConfig};
use biosig_affect::preprocess::{build_windows, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (corpus, _) = synth_corpus(&SynthConfig::new(6, 6, 10.0, 5))?;
    let pairs = build_windows(&corpus, &PreprocessConfig::default())?;
    let cfg = ProtocolConfig { k: 5, width_divisor: 32, ae_max_epochs: 4, ..Default::default() };
    let modes: Vec<Mode> = ["latent_ecg", "latent_eda", "latent_featfusion", "handcrafted_featfusion"]
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_, _>>()?;
    for run in run_protocols(&pairs, &modes, &cfg)? {
        let folds: Vec<String> = run.folds.iter().map(|f| format!("{:.2}", f.accuracy)).collect();
        println!("{:<24} accuracy {:.3} f1 {:.3}  folds [{}]", run.mode.to_string(), run.report.accuracy, run.report.f1, folds.join(" "));
    }
    Ok(())
}

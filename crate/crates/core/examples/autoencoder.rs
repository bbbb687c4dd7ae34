//! Train a narrowed ECG autoencoder for a few epochs, then encode windows
//! into 80-dimensional latents. Pass an epoch count as the first argument.

use biosig_affect::corpus::{synth_corpus, SynthConfig};
use biosig_affect::nn::{build_ae, train, AeWidths, TrainConfig};
use biosig_affect::preprocess::{build_windows, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let (corpus, _) = synth_corpus(&SynthConfig::new(4, 4, 20.0, 11))?;
    let pairs = build_windows(&corpus, &PreprocessConfig::default())?;
    let x: Vec<Vec<f64>> = pairs.iter().map(|p| p.ecg.clone()).collect();
    let (val, fit) = x.split_at(x.len() / 10);

    let spec = build_ae(2560, &AeWidths::ecg().narrowed(16));
    let cfg = TrainConfig { max_epochs: epochs, ..TrainConfig::autoencoder(1) };
    let t = train(&spec, fit, fit, val, val, &cfg)?;
    for (i, e) in t.history.epochs.iter().enumerate() {
        println!("epoch {i}: train {:.5} val {:.5}", e.train_loss, e.val_loss.unwrap_or(f64::NAN));
    }
    println!("kept epoch {}", t.history.best_epoch);

    let z = t.encode(&x[..3])?;
    for (p, v) in pairs.iter().zip(&z) {
        let active = v.iter().filter(|&&a| a > 0.0).count();
        println!("{}: latent dim {}, {active} active units", p.key, v.len());
    }
    Ok(())
}

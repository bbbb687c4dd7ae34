use std::path::PathBuf;
use std::process::ExitCode;

use biosig_affect::pipeline::{self, ExperimentConfig};
use biosig_affect::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "biosig-affect", version, about = "ECG/EDA arousal classification pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Preprocessed windows file (overrides `corpus.windows`).
    #[arg(long)]
    windows: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of folds (overrides `protocol.k`).
    #[arg(long)]
    k: Option<usize>,
    /// Any config key, e.g. `--set protocol.ae_max_epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn load(&self, extra: &[String]) -> Result<ExperimentConfig, Error> {
        let mut o = self.sets.clone();
        if let Some(p) = &self.out {
            o.push(format!("output_dir={}", toml_str(p)));
        }
        if let Some(p) = &self.windows {
            o.push(format!("corpus.windows={}", toml_str(p)));
        }
        if let Some(s) = self.seed {
            o.push(format!("protocol.seed={s}"));
        }
        if let Some(k) = self.k {
            o.push(format!("protocol.k={k}"));
        }
        o.extend_from_slice(extra);
        ExperimentConfig::load(self.config.as_deref(), &o)
    }
}

fn toml_str(p: &std::path::Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus and its ground truth.
    Synth(Common),
    /// Filter, resample, normalize and window the corpus.
    Preprocess(Common),
    /// Hand-crafted ECG and EDA features per window.
    Features(Common),
    /// Train both autoencoders on all windows.
    TrainAe(Common),
    /// Encode windows with saved autoencoders.
    Encode {
        #[command(flatten)]
        common: Common,
        /// Directory holding ae_ecg.json and ae_eda.json (default: <out>/models).
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Cross-validate the configured classifier on a feature CSV.
    TrainClf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
    },
    /// Full k-fold protocol for one mode.
    Run {
        #[command(flatten)]
        common: Common,
        /// e.g. latent_featfusion, handcrafted_ecg, cnn_decfusion
        #[arg(long)]
        mode: Option<String>,
    },
    /// Run several modes and write comparison.csv.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated modes (overrides `compare.modes`).
        #[arg(long)]
        modes: Option<String>,
        /// Also train on each dataset separately.
        #[arg(long)]
        separate: bool,
    },
    /// Summarize a saved network, report, windows file or feature CSV.
    Inspect { path: PathBuf },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Synth(c) => {
            for p in pipeline::cmd_synth(&c.load(&[])?)? {
                println!("{}", p.display());
            }
        }
        Cmd::Preprocess(c) => {
            let (p, n) = pipeline::cmd_preprocess(&c.load(&[])?)?;
            println!("{n} windows -> {}", p.display());
        }
        Cmd::Features(c) => {
            let (p, n, skipped) = pipeline::cmd_features(&c.load(&[])?)?;
            println!("{n} windows -> {} ({skipped} without usable beats)", p.display());
        }
        Cmd::TrainAe(c) => {
            for (p, t) in pipeline::cmd_train_ae(&c.load(&[])?)? {
                let h = &t.history;
                println!("{}: {} epochs, best {} (loss {:.6})", p.display(), h.epochs.len(), h.best_epoch, h.monitored(h.best_epoch));
            }
        }
        Cmd::Encode { common, models } => {
            let cfg = common.load(&[])?;
            let dir = models.unwrap_or_else(|| cfg.output_dir.join("models"));
            let (p, n) = pipeline::cmd_encode(&cfg, &dir)?;
            println!("{n} windows -> {}", p.display());
        }
        Cmd::TrainClf { common, features } => {
            let r = pipeline::cmd_train_clf(&common.load(&[])?, &features)?;
            println!("{} {}-fold: accuracy {:.4} f1 {:.4}", r.classifier, r.k, r.report.accuracy, r.report.f1);
        }
        Cmd::Run { common, mode } => {
            let extra: Vec<String> = mode.into_iter().map(|m| format!("mode={}", toml::Value::String(m))).collect();
            let cfg = common.load(&extra)?;
            let r = pipeline::cmd_run(&cfg)?;
            for s in &r.runs {
                println!("{}: accuracy {:.4} f1 {:.4}", s.mode, s.report.accuracy, s.report.f1);
            }
            println!("report -> {}", cfg.output_dir.join("report.json").display());
        }
        Cmd::Compare { common, modes, separate } => {
            let mut extra = Vec::new();
            if let Some(m) = modes {
                let list: Vec<toml::Value> = m.split(',').map(|s| toml::Value::String(s.trim().into())).collect();
                extra.push(format!("compare.modes={}", toml::Value::Array(list)));
            }
            if separate {
                extra.push("compare.separate_datasets=true".into());
            }
            let cfg = common.load(&extra)?;
            for r in pipeline::cmd_compare(&cfg)? {
                println!("{:<24} {:<8} accuracy {:.4} f1 {:.4}", r.mode.to_string(), r.training, r.accuracy, r.f1);
            }
            println!("table -> {}", cfg.output_dir.join("comparison.csv").display());
        }
        Cmd::Inspect { path } => print!("{}", pipeline::inspect(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

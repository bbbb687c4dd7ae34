//! Config-driven stages behind the command-line tool. Each stage reads an
//! [`ExperimentConfig`] and writes its artifacts under `output_dir`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    aggregate, ingest, synth_corpus, write_corpus, ArousalLabel, Corpus, Format, SynthConfig, SynthGroundTruth,
    TrialKey, WindowPair,
};
use crate::features::{write_feature_csv, EcgFeatureVector, EdaFeatureVector};
use crate::model::{
    classifier_proba, evaluate, fold_assignment, handcrafted_table, run_protocols_with, write_predictions_csv,
    Confusion, FeatureMode, Prediction, FoldHistory, FoldOutcome, Mode, MetricsReport, ProtocolConfig, ProtocolRun, RepresentationKind,
};
use crate::nn::{self, build_ae, load_network, save_network, TrainConfig, TrainedNetwork, FORMAT_NAME, LATENT_DIM};
use crate::preprocess::{build_windows, PreprocessConfig};
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSource {
    /// Recording files (CSV or JSONL). When empty the synthetic corpora are used.
    pub paths: Vec<PathBuf>,
    /// One entry per synthetic sub-corpus; they are aggregated.
    pub synth: Vec<SynthConfig>,
    /// Preprocessed windows (JSONL). Skips corpus loading and preprocessing.
    pub windows: Option<PathBuf>,
}

impl Default for CorpusSource {
    fn default() -> Self {
        Self { paths: Vec::new(), synth: vec![SynthConfig::new(20, 10, 10.0, 0)], windows: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub modes: Vec<Mode>,
    /// Also train and test on each dataset on its own.
    pub separate_datasets: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        use FeatureMode::*;
        use RepresentationKind::*;
        let modes = [(Latent, Ecg), (Latent, Eda), (Latent, FeatFusion), (Latent, DecFusion), (Handcrafted, FeatFusion)]
            .into_iter()
            .map(|(r, f)| Mode::new(r, f))
            .collect();
        Self { modes, separate_datasets: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub mode: Mode,
    pub corpus: CorpusSource,
    pub preprocess: PreprocessConfig,
    pub protocol: ProtocolConfig,
    pub compare: CompareConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs/default"),
            mode: Mode::new(RepresentationKind::Latent, FeatureMode::FeatFusion),
            corpus: CorpusSource::default(),
            preprocess: PreprocessConfig::default(),
            protocol: ProtocolConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

/// Sets `a.b.c = value` in a TOML table. The value is parsed as a TOML
/// literal, falling back to a plain string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), Error> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = path.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("{path}: {p} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides, and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, Error> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, Error> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.preprocess.validate()?;
        self.protocol.validate()?;
        for p in self.corpus.paths.iter().chain(&self.corpus.windows) {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
            if self.corpus.windows.as_ref() != Some(p) && Format::from_path(p).is_none() {
                return Err(Error::Config(format!("{}: expected a .csv or .jsonl file", p.display())));
            }
        }
        if self.corpus.paths.is_empty() && self.corpus.synth.is_empty() && self.corpus.windows.is_none() {
            return Err(Error::Config("no corpus source configured".into()));
        }
        if self.compare.modes.is_empty() {
            return Err(Error::Config("compare.modes is empty".into()));
        }
        Ok(())
    }

    fn out(&self, name: &str) -> Result<PathBuf, Error> {
        fs::create_dir_all(&self.output_dir)?;
        Ok(self.output_dir.join(name))
    }
}

pub type GroundTruth = BTreeMap<TrialKey, SynthGroundTruth>;

/// Ingests the configured files, or generates and aggregates the synthetic
/// sub-corpora (then also returning their ground truth).
pub fn load_corpus(cfg: &ExperimentConfig) -> Result<(Corpus, Option<GroundTruth>), Error> {
    if !cfg.corpus.paths.is_empty() {
        let parts = cfg
            .corpus
            .paths
            .iter()
            .map(|p| ingest(p, Format::from_path(p).expect("validated")))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok((aggregate(&parts)?, None));
    }
    let mut parts = Vec::new();
    let mut truth = GroundTruth::new();
    for s in &cfg.corpus.synth {
        let (c, t) = synth_corpus(s).map_err(|e| Error::Config(e.to_string()))?;
        parts.push(c);
        truth.extend(t);
    }
    Ok((aggregate(&parts)?, Some(truth)))
}

pub fn write_windows(pairs: &[WindowPair], path: &Path) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_windows(path: &Path) -> Result<Vec<WindowPair>, Error> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: WindowPair =
            serde_json::from_str(&line).map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        p.validate().map_err(|m| Error::Data(format!("{}: {m}", p.key)))?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{}: no windows", path.display())));
    }
    Ok(out)
}

/// Windows from `corpus.windows` if set, else corpus plus preprocessing.
pub fn load_windows(cfg: &ExperimentConfig) -> Result<Vec<WindowPair>, Error> {
    match &cfg.corpus.windows {
        Some(p) => read_windows(p),
        None => {
            let (c, _) = load_corpus(cfg)?;
            build_windows(&c, &cfg.preprocess)
        }
    }
}

/// Writes `corpus.jsonl` and, for synthetic data, `ground_truth.json`.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, Error> {
    let (corpus, truth) = load_corpus(cfg)?;
    let path = cfg.out("corpus.jsonl")?;
    write_corpus(&corpus, &path, Format::Jsonl)?;
    let mut written = vec![path];
    if let Some(t) = truth {
        let rows: Vec<(String, &SynthGroundTruth)> = t.iter().map(|(k, v)| (k.to_string(), v)).collect();
        let gt = cfg.out("ground_truth.json")?;
        fs::write(&gt, serde_json::to_string_pretty(&rows.into_iter().collect::<BTreeMap<_, _>>())?)?;
        written.push(gt);
    }
    Ok(written)
}

/// Writes `windows.jsonl`.
pub fn cmd_preprocess(cfg: &ExperimentConfig) -> Result<(PathBuf, usize), Error> {
    let pairs = load_windows(cfg)?;
    let path = cfg.out("windows.jsonl")?;
    write_windows(&pairs, &path)?;
    Ok((path, pairs.len()))
}

pub fn handcrafted_names() -> Vec<String> {
    EcgFeatureVector::NAMES
        .iter()
        .map(|n| format!("ecg_{n}"))
        .chain(EdaFeatureVector::NAMES.iter().map(|n| format!("eda_{n}")))
        .collect()
}

/// Writes `features.csv`: all hand-crafted features per usable window.
pub fn cmd_features(cfg: &ExperimentConfig) -> Result<(PathBuf, usize, usize), Error> {
    let pairs = load_windows(cfg)?;
    let table = handcrafted_table(&pairs, &cfg.protocol);
    let rows: Vec<_> = pairs
        .iter()
        .zip(&table)
        .filter_map(|(p, t)| t.as_ref().map(|(e, d)| (p.key.clone(), e.iter().chain(d).copied().collect())))
        .collect();
    let names = handcrafted_names();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let path = cfg.out("features.csv")?;
    write_feature_csv(BufWriter::new(File::create(&path)?), &refs, &rows)?;
    Ok((path, rows.len(), pairs.len() - rows.len()))
}

/// Trains both autoencoders on all windows (the validation fraction is
/// held out for early stopping) and saves them under `models/`.
pub fn cmd_train_ae(cfg: &ExperimentConfig) -> Result<Vec<(PathBuf, TrainedNetwork)>, Error> {
    let mut pairs = load_windows(cfg)?;
    pairs.sort_by(|a, b| a.key.cmp(&b.key));
    let p = &cfg.protocol;
    let n_val = (p.validation_fraction * pairs.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(p.seed));
    }
    let (val, fit) = order.split_at(n_val.min(pairs.len().saturating_sub(1)));
    fs::create_dir_all(cfg.output_dir.join("models"))?;
    let mut out = Vec::new();
    for (name, ecg, widths) in [("ae_ecg", true, p.ecg_widths()), ("ae_eda", false, p.eda_widths())] {
        let rows = |idx: &[usize]| -> Vec<Vec<f64>> {
            idx.iter().map(|&i| if ecg { pairs[i].ecg.clone() } else { pairs[i].eda.clone() }).collect()
        };
        let (tx, vx) = (rows(fit), rows(val));
        let spec = build_ae(tx[0].len(), &widths);
        let tc = TrainConfig {
            learning_rate: p.ae_learning_rate,
            batch_size: p.ae_batch_size,
            max_epochs: p.ae_max_epochs,
            patience: p.ae_patience,
            ..TrainConfig::autoencoder(p.seed ^ if ecg { 1 } else { 2 })
        };
        let t = nn::train(&spec, &tx, &tx, &vx, &vx, &tc)?;
        let path = cfg.output_dir.join("models").join(format!("{name}.json"));
        save_network(&t, &path)?;
        out.push((path, t));
    }
    Ok(out)
}

/// Encodes every window with the saved autoencoders into `latent.csv`
/// (ECG block first).
pub fn cmd_encode(cfg: &ExperimentConfig, models: &Path) -> Result<(PathBuf, usize), Error> {
    let pairs = load_windows(cfg)?;
    let load = |n: &str| {
        let p = models.join(format!("{n}.json"));
        if !p.exists() {
            return Err(Error::Config(format!("{} does not exist; run train-ae first", p.display())));
        }
        Ok(load_network(&p)?)
    };
    let (ae_e, ae_d) = (load("ae_ecg")?, load("ae_eda")?);
    let ecg: Vec<Vec<f64>> = pairs.iter().map(|p| p.ecg.clone()).collect();
    let eda: Vec<Vec<f64>> = pairs.iter().map(|p| p.eda.clone()).collect();
    let (le, ld) = (ae_e.encode(&ecg)?, ae_d.encode(&eda)?);
    let rows: Vec<_> = pairs
        .iter()
        .zip(le.iter().zip(&ld))
        .map(|(p, (a, b))| (p.key.clone(), crate::model::feature_fusion(a, b)))
        .collect();
    let names: Vec<String> = (0..LATENT_DIM)
        .map(|i| format!("ecg_{i}"))
        .chain((0..LATENT_DIM).map(|i| format!("eda_{i}")))
        .collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let path = cfg.out("latent.csv")?;
    write_feature_csv(BufWriter::new(File::create(&path)?), &refs, &rows)?;
    Ok((path, rows.len()))
}

/// Reads a `key,...` feature CSV.
pub fn read_feature_csv(path: &Path) -> Result<(Vec<String>, Vec<(String, Vec<f64>)>), Error> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    if header.get(0) != Some("key") {
        return Err(Error::Data(format!("{}: first column must be `key`", path.display())));
    }
    let names: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| Error::Data(format!("{} row {}: {e}", path.display(), i + 1)))?;
        rows.push((rec[0].to_string(), vals));
    }
    Ok((names, rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub features: PathBuf,
    pub classifier: String,
    pub k: usize,
    pub report: MetricsReport,
}

/// k-fold evaluation of the configured classifier on a fixed feature table
/// (`latent.csv` or `features.csv`), labels joined from the windows.
pub fn cmd_train_clf(cfg: &ExperimentConfig, features: &Path) -> Result<ClassifierReport, Error> {
    if !features.exists() {
        return Err(Error::Config(format!("{} does not exist", features.display())));
    }
    let pairs = load_windows(cfg)?;
    let (_, rows) = read_feature_csv(features)?;
    let by_key: BTreeMap<String, &WindowPair> = pairs.iter().map(|p| (p.key.to_string(), p)).collect();
    let mut kept = Vec::new();
    let mut x = Vec::new();
    for (k, v) in rows {
        let p = by_key.get(&k).ok_or_else(|| Error::Data(format!("feature row {k} has no window")))?;
        kept.push((*p).clone());
        x.push(v);
    }
    let folds = fold_assignment(&kept, &cfg.protocol)?;
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    let mut ds = Vec::new();
    let mut preds = Vec::new();
    for f in 0..cfg.protocol.k {
        let (tr, te): (Vec<usize>, Vec<usize>) = (0..kept.len()).partition(|&i| folds.fold_of(&kept[i].key) != Some(f));
        let pick = |idx: &[usize]| -> Vec<Vec<f64>> { idx.iter().map(|&i| x[i].clone()).collect() };
        let ytr: Vec<ArousalLabel> = tr.iter().map(|&i| kept[i].label).collect();
        let probs = classifier_proba(&cfg.protocol.classifier, &pick(&tr), &ytr, &pick(&te), cfg.protocol.seed ^ f as u64)?;
        for (&i, p) in te.iter().zip(probs) {
            let yp = ArousalLabel::from_bool(p >= 0.5);
            y_true.push(kept[i].label);
            y_pred.push(yp);
            ds.push(kept[i].key.dataset_id.clone());
            preds.push(Prediction { key: kept[i].key.clone(), fold: f, y_true: kept[i].label, y_pred: yp, probability: p.clamp(0.0, 1.0) });
        }
    }
    let ds_ref: Vec<&str> = ds.iter().map(|s| s.as_str()).collect();
    let report = ClassifierReport {
        features: features.to_path_buf(),
        classifier: cfg.protocol.classifier.name().into(),
        k: cfg.protocol.k,
        report: evaluate(&y_true, &y_pred, &ds_ref)?,
    };
    fs::write(cfg.out("clf_report.json")?, serde_json::to_string_pretty(&report)?)?;
    write_predictions_csv(BufWriter::new(File::create(cfg.out("clf_predictions.csv")?)?), &preds)
        .map_err(|e| Error::Data(e.to_string()))?;
    Ok(report)
}

/// One mode's results without the per-window predictions (those go to CSV).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub classifier: String,
    pub k: usize,
    pub seed: u64,
    pub report: MetricsReport,
    pub folds: Vec<FoldOutcome>,
    pub histories: Vec<FoldHistory>,
}

impl From<&ProtocolRun> for RunSummary {
    fn from(r: &ProtocolRun) -> Self {
        Self {
            mode: r.mode,
            classifier: r.classifier.clone(),
            k: r.k,
            seed: r.seed,
            report: r.report.clone(),
            folds: r.folds.clone(),
            histories: r.histories.clone(),
        }
    }
}

/// Contents of `report.json`. Timings live in `timings.json` so that the
/// report body is reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: String,
    pub windows: usize,
    pub runs: Vec<RunSummary>,
    pub artifacts: Vec<String>,
}

fn rel(cfg: &ExperimentConfig, p: &Path) -> String {
    p.strip_prefix(&cfg.output_dir).unwrap_or(p).display().to_string()
}

/// Runs the protocol for `modes` and writes the run directory.
pub fn run_modes(cfg: &ExperimentConfig, modes: &[Mode]) -> Result<(RunReport, Vec<ProtocolRun>), Error> {
    let t0 = Instant::now();
    let pairs = load_windows(cfg)?;
    let t_windows = t0.elapsed().as_secs_f64();
    let (runs, reps) = run_protocols_with(&pairs, None, modes, &cfg.protocol)?;
    let t_protocol = t0.elapsed().as_secs_f64() - t_windows;

    let config = cfg.to_toml()?;
    let mut artifacts = Vec::new();
    let cfg_path = cfg.out("config.toml")?;
    fs::write(&cfg_path, &config)?;
    artifacts.push(rel(cfg, &cfg_path));

    let folds = fold_assignment(&pairs, &cfg.protocol)?;
    let fp = cfg.out("folds.csv")?;
    folds.write_csv(BufWriter::new(File::create(&fp)?))?;
    artifacts.push(rel(cfg, &fp));

    for r in &reps {
        if r.networks.is_empty() {
            continue;
        }
        let dir = cfg.output_dir.join("models").join(format!("fold_{:02}", r.fold));
        fs::create_dir_all(&dir)?;
        for (name, net) in &r.networks {
            let p = dir.join(format!("{name}.json"));
            save_network(net, &p)?;
            artifacts.push(rel(cfg, &p));
        }
    }
    for run in &runs {
        let dir = cfg.output_dir.join("predictions").join(run.mode.to_string());
        fs::create_dir_all(&dir)?;
        for f in 0..cfg.protocol.k {
            let p = dir.join(format!("fold_{f:02}.csv"));
            let rows: Vec<_> = run.predictions.iter().filter(|p| p.fold == f).cloned().collect();
            write_predictions_csv(BufWriter::new(File::create(&p)?), &rows).map_err(|e| Error::Data(e.to_string()))?;
            artifacts.push(rel(cfg, &p));
        }
        let m = cfg.out(&format!("metrics_{}.csv", run.mode))?;
        run.report.write_csv(BufWriter::new(File::create(&m)?)).map_err(|e| Error::Data(e.to_string()))?;
        artifacts.push(rel(cfg, &m));
    }
    artifacts.push("report.json".into());
    artifacts.push("timings.json".into());
    let report = RunReport { config, windows: pairs.len(), runs: runs.iter().map(RunSummary::from).collect(), artifacts };
    fs::write(cfg.out("report.json")?, serde_json::to_string_pretty(&report)?)?;
    let timings = serde_json::json!({
        "windows_s": t_windows,
        "protocol_s": t_protocol,
        "total_s": t0.elapsed().as_secs_f64(),
    });
    fs::write(cfg.out("timings.json")?, serde_json::to_string_pretty(&timings)?)?;
    Ok((report, runs))
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport, Error> {
    Ok(run_modes(cfg, &[cfg.mode])?.0)
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub mode: Mode,
    /// `multi` (all datasets pooled) or `separate` (one model per dataset).
    pub training: String,
    pub per_dataset: BTreeMap<String, (f64, f64)>,
    pub accuracy: f64,
    pub f1: f64,
}

/// Runs every compare mode on the pooled windows and, when configured, on
/// each dataset separately; writes `comparison.csv`.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Vec<CompareRow>, Error> {
    let modes = &cfg.compare.modes;
    let (multi, _) = run_modes(cfg, modes)?;
    let row = |m: Mode, training: &str, r: &MetricsReport| CompareRow {
        mode: m,
        training: training.into(),
        per_dataset: r.per_dataset.iter().map(|(d, v)| (d.clone(), (v.accuracy, v.f1))).collect(),
        accuracy: r.accuracy,
        f1: r.f1,
    };
    let mut rows: Vec<CompareRow> = multi.runs.iter().map(|r| row(r.mode, "multi", &r.report)).collect();
    if cfg.compare.separate_datasets {
        let pairs = load_windows(cfg)?;
        let datasets: Vec<String> = pairs.iter().map(|p| p.key.dataset_id.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let mut per: BTreeMap<Mode, BTreeMap<String, Confusion>> = BTreeMap::new();
        for d in &datasets {
            let sub: Vec<WindowPair> = pairs.iter().filter(|p| &p.key.dataset_id == d).cloned().collect();
            let (runs, _) = run_protocols_with(&sub, None, modes, &cfg.protocol)?;
            for r in runs {
                per.entry(r.mode).or_default().insert(d.clone(), r.report.confusion());
            }
        }
        for m in modes {
            rows.push(row(*m, "separate", &MetricsReport::from_confusions(&per[m])));
        }
    }
    write_compare_csv(&rows, &cfg.out("comparison.csv")?)?;
    Ok(rows)
}

pub fn write_compare_csv(rows: &[CompareRow], path: &Path) -> Result<(), Error> {
    let datasets: Vec<String> =
        rows.iter().flat_map(|r| r.per_dataset.keys().cloned()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    let mut header = vec!["mode".to_string(), "training".to_string()];
    for d in &datasets {
        header.push(format!("{d}_accuracy"));
        header.push(format!("{d}_f1"));
    }
    header.push("accuracy".into());
    header.push("f1".into());
    wtr.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for r in rows {
        let mut rec = vec![r.mode.to_string(), r.training.clone()];
        for d in &datasets {
            match r.per_dataset.get(d) {
                Some((a, f)) => {
                    rec.push(a.to_string());
                    rec.push(f.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        rec.push(r.accuracy.to_string());
        rec.push(r.f1.to_string());
        wtr.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Human-readable summary of a saved network, run report, windows file or
/// feature CSV.
pub fn inspect(path: &Path) -> Result<String, Error> {
    if !path.exists() {
        return Err(Error::Config(format!("{} does not exist", path.display())));
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let mut s = String::new();
    use std::fmt::Write as _;
    match ext {
        "json" => {
            let text = fs::read_to_string(path)?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            if v.get("format").and_then(|f| f.as_str()) == Some(FORMAT_NAME) {
                let t = nn::network_from_json(&text)?;
                let shapes = t.network.shapes();
                writeln!(s, "network, {} parameters", t.network.parameter_count()).ok();
                for (i, l) in t.spec().layers.iter().enumerate() {
                    let mark = if t.spec().latent_tap == Some(i) { "  <- latent" } else { "" };
                    writeln!(s, "{i:>3} {:<12} {:>5} x {:<4}{mark}", l.name(), shapes[i + 1].len, shapes[i + 1].channels).ok();
                }
                let h = &t.history;
                writeln!(s, "epochs {}, best {}, stopped early {}", h.epochs.len(), h.best_epoch, h.stopped_early).ok();
            } else if let Ok(r) = serde_json::from_value::<RunReport>(v) {
                writeln!(s, "run over {} windows", r.windows).ok();
                for run in &r.runs {
                    writeln!(s, "{:<24} acc {:.4} f1 {:.4}", run.mode.to_string(), run.report.accuracy, run.report.f1).ok();
                }
            } else {
                return Err(Error::Data(format!("{}: not a network or run report", path.display())));
            }
        }
        "jsonl" => {
            let pairs = read_windows(path)?;
            let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
            for p in &pairs {
                *counts.entry((p.key.dataset_id.clone(), format!("{:?}", p.label).to_uppercase())).or_default() += 1;
            }
            writeln!(s, "{} windows", pairs.len()).ok();
            for ((d, l), n) in counts {
                writeln!(s, "{d} {l}: {n}").ok();
            }
        }
        "csv" => {
            let (names, rows) = read_feature_csv(path)?;
            writeln!(s, "{} rows x {} features", rows.len(), names.len()).ok();
        }
        _ => return Err(Error::Config(format!("{}: cannot inspect this file type", path.display()))),
    }
    Ok(s)
}

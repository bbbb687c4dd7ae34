//! Leakage-free k-fold protocol. Representation models, feature selection
//! and classifiers see the training folds only; the held-out fold is
//! encoded and scored afterwards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    decision_fusion_train, feature_fusion, knn_proba, train_decision_tree, train_random_forest, Confusion,
    DecisionTreeConfig, ForestConfig, MetricsReport, ModelError, Prediction, KNN_K,
};
use crate::corpus::{stratified_folds, ArousalLabel, FoldAssignment, WindowPair};
use crate::dsp::{PanTompkinsConfig, TimeSeries};
use crate::features::{ecg_features, eda_features, lasso_select, LassoConfig, ScrConfig, Standardizer};
use crate::nn::{self, build_ae, build_cnn, build_mlp, AeWidths, History, TrainConfig, TrainedNetwork};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationKind {
    /// Autoencoder bottleneck activations.
    Latent,
    /// Hand-crafted ECG/EDA features after LASSO selection.
    Handcrafted,
    /// Last dropout output of a supervised CNN.
    Cnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Ecg,
    Eda,
    /// Concatenation, ECG first.
    FeatFusion,
    /// Linear fusion of per-modality probabilities.
    DecFusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Mode {
    pub representation: RepresentationKind,
    pub features: FeatureMode,
}

impl Mode {
    pub const fn new(representation: RepresentationKind, features: FeatureMode) -> Self {
        Self { representation, features }
    }

    pub fn all() -> Vec<Mode> {
        use FeatureMode::*;
        use RepresentationKind::*;
        [Latent, Handcrafted, Cnn]
            .into_iter()
            .flat_map(|r| [Ecg, Eda, FeatFusion, DecFusion].into_iter().map(move |f| Mode::new(r, f)))
            .collect()
    }

    /// (ECG, EDA) blocks this mode reads.
    pub fn needs(&self) -> [bool; 2] {
        match self.features {
            FeatureMode::Ecg => [true, false],
            FeatureMode::Eda => [false, true],
            _ => [true, true],
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = match self.representation {
            RepresentationKind::Latent => "latent",
            RepresentationKind::Handcrafted => "handcrafted",
            RepresentationKind::Cnn => "cnn",
        };
        let m = match self.features {
            FeatureMode::Ecg => "ecg",
            FeatureMode::Eda => "eda",
            FeatureMode::FeatFusion => "featfusion",
            FeatureMode::DecFusion => "decfusion",
        };
        write!(f, "{r}_{m}")
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Mode::all()
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

impl TryFrom<String> for Mode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> String {
        m.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    RandomForest(ForestConfig),
    DecisionTree(DecisionTreeConfig),
    Knn { k: usize },
    Mlp { hidden: Vec<usize>, dropout: f64, epochs: usize },
}

impl Default for ClassifierKind {
    fn default() -> Self {
        ClassifierKind::RandomForest(ForestConfig::default())
    }
}

impl ClassifierKind {
    pub fn knn() -> Self {
        ClassifierKind::Knn { k: KNN_K }
    }

    /// 160-80-40-40 for the latent vectors.
    pub fn mlp_latent() -> Self {
        ClassifierKind::Mlp { hidden: vec![160, 80, 40, 40], dropout: 0.5, epochs: 200 }
    }

    /// 36-24-16 for hand-crafted features.
    pub fn mlp_handcrafted() -> Self {
        ClassifierKind::Mlp { hidden: vec![36, 24, 16], dropout: 0.5, epochs: 200 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::RandomForest(_) => "random_forest",
            ClassifierKind::DecisionTree(_) => "decision_tree",
            ClassifierKind::Knn { .. } => "knn",
            ClassifierKind::Mlp { .. } => "mlp",
        }
    }

    fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        match self {
            ClassifierKind::RandomForest(c) if c.n_trees == 0 => bad("n_trees must be >= 1"),
            ClassifierKind::Knn { k: 0 } => bad("knn k must be >= 1"),
            ClassifierKind::Mlp { dropout, epochs, .. } if !(0.0..1.0).contains(dropout) || *epochs == 0 => {
                bad("mlp dropout must lie in [0, 1) and epochs be >= 1")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub k: usize,
    pub seed: u64,
    pub classifier: ClassifierKind,
    /// Filter counts of both autoencoders and CNNs are divided by this.
    pub width_divisor: usize,
    pub ae_max_epochs: usize,
    pub ae_batch_size: usize,
    pub ae_patience: usize,
    pub ae_learning_rate: f64,
    /// Share of the training windows held out for early stopping.
    pub validation_fraction: f64,
    pub cnn_ecg_epochs: usize,
    pub cnn_eda_epochs: usize,
    pub cnn_dropout: f64,
    /// Epochs of the MLP that fuses the two CNN representations.
    pub cnn_fusion_epochs: usize,
    /// Inner folds producing out-of-fold probabilities for decision fusion.
    pub decision_inner_folds: usize,
    pub lasso: LassoConfig,
    pub scr: ScrConfig,
    pub pan_tompkins: PanTompkinsConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            classifier: ClassifierKind::default(),
            width_divisor: 16,
            ae_max_epochs: 20,
            ae_batch_size: 32,
            ae_patience: 4,
            ae_learning_rate: 1e-3,
            validation_fraction: 0.1,
            cnn_ecg_epochs: 1500,
            cnn_eda_epochs: 4000,
            cnn_dropout: 0.5,
            cnn_fusion_epochs: 200,
            decision_inner_folds: 5,
            lasso: LassoConfig::default(),
            scr: ScrConfig::default(),
            pan_tompkins: PanTompkinsConfig::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k < 2 {
            return bad(format!("k must be >= 2, got {}", self.k));
        }
        if self.width_divisor == 0 {
            return bad("width_divisor must be >= 1".into());
        }
        if self.ae_max_epochs == 0 || self.ae_batch_size == 0 || self.cnn_ecg_epochs == 0 || self.cnn_eda_epochs == 0 {
            return bad("epoch counts and batch size must be >= 1".into());
        }
        if !(self.ae_learning_rate >= 0.0 && self.ae_learning_rate.is_finite()) {
            return bad(format!("ae_learning_rate {} must be >= 0", self.ae_learning_rate));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction {} outside [0, 0.5)", self.validation_fraction));
        }
        if !(0.0..1.0).contains(&self.cnn_dropout) {
            return bad(format!("cnn_dropout {} outside [0, 1)", self.cnn_dropout));
        }
        if self.decision_inner_folds < 2 {
            return bad("decision_inner_folds must be >= 2".into());
        }
        self.classifier.validate()
    }

    pub fn ecg_widths(&self) -> AeWidths {
        AeWidths::ecg().narrowed(self.width_divisor)
    }

    pub fn eda_widths(&self) -> AeWidths {
        AeWidths::eda().narrowed(self.width_divisor)
    }

    fn ae_train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.ae_learning_rate,
            batch_size: self.ae_batch_size,
            max_epochs: self.ae_max_epochs,
            patience: self.ae_patience,
            ..TrainConfig::autoencoder(seed)
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one component (`tag`) within one fold.
pub(crate) fn fold_seed(seed: u64, fold: usize, tag: u64) -> u64 {
    splitmix(seed ^ splitmix((fold as u64) << 8 | tag))
}

const TAG_SPLIT: u64 = 1;
const TAG_ECG: u64 = 2;
const TAG_EDA: u64 = 3;
const TAG_CLF: u64 = 4;
const TAG_INNER: u64 = 5;

/// Train/test matrices of one block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Block {
    pub train: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
}

/// Standardizer and LASSO support fitted on a fold's training windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSelection {
    pub standardizer: Standardizer,
    pub selected: Vec<usize>,
    pub lambda: f64,
}

/// CNN output probabilities on the inner validation and held-out windows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CnnProba {
    pub val_ecg: Vec<f64>,
    pub val_eda: Vec<f64>,
    pub test_ecg: Vec<f64>,
    pub test_eda: Vec<f64>,
}

/// Everything fitted for one fold before the final classifier. Row
/// indices refer to the window slice the fold was prepared from.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldRepresentation {
    pub fold: usize,
    pub kind: RepresentationKind,
    pub train_rows: Vec<usize>,
    /// Subset of `train_rows` used only for early stopping.
    pub val_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub ecg: Option<Block>,
    pub eda: Option<Block>,
    /// Hand-crafted fusion gets its own selection.
    pub fused: Option<Block>,
    pub networks: Vec<(String, TrainedNetwork)>,
    pub selections: Vec<(String, BlockSelection)>,
    pub cnn: Option<CnnProba>,
}

impl FoldRepresentation {
    /// True when every fitted model (networks, scalers, supports) is
    /// bit-identical. Encoded matrices are not compared.
    pub fn same_models(&self, other: &FoldRepresentation) -> bool {
        self.kind == other.kind && self.networks == other.networks && self.selections == other.selections
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub confusion: Confusion,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldHistory {
    pub fold: usize,
    pub model: String,
    pub history: History,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub mode: Mode,
    pub classifier: String,
    pub k: usize,
    pub seed: u64,
    pub report: MetricsReport,
    pub folds: Vec<FoldOutcome>,
    pub predictions: Vec<Prediction>,
    pub histories: Vec<FoldHistory>,
}

impl ProtocolRun {
    pub fn fold_mean_accuracy(&self) -> f64 {
        self.folds.iter().map(|f| f.accuracy).sum::<f64>() / self.folds.len().max(1) as f64
    }
}

/// Hand-crafted (ECG, EDA) vectors per window; `None` when the ECG window
/// yields too few beats or a non-finite value.
pub type HandcraftedTable = Vec<Option<(Vec<f64>, Vec<f64>)>>;

pub fn handcrafted_table(pairs: &[WindowPair], cfg: &ProtocolConfig) -> HandcraftedTable {
    let ecg_fs = pairs.first().map_or(256.0, |p| p.ecg.len() as f64 / 10.0);
    let eda_fs = pairs.first().map_or(128.0, |p| p.eda.len() as f64 / 10.0);
    let window_s = pairs.first().map_or(10.0, |p| p.ecg.len() as f64 / ecg_fs);
    pairs
        .iter()
        .map(|p| {
            let ecg = TimeSeries::new(p.ecg.clone(), ecg_fs).ok()?;
            let peaks = cfg.pan_tompkins.detect(&ecg).ok()?;
            let (fe, _) = ecg_features(&peaks, window_s).ok()?;
            let eda = TimeSeries::new(p.eda.clone(), eda_fs).ok()?;
            let (e, d) = (fe.to_vec(), eda_features(&eda, &cfg.scr).to_vec());
            e.iter().chain(&d).all(|v| v.is_finite()).then_some((e, d))
        })
        .collect()
}

struct Ctx<'a> {
    pairs: &'a [WindowPair],
    folds: &'a FoldAssignment,
    cfg: &'a ProtocolConfig,
    hand: Option<HandcraftedTable>,
}

pub fn fold_assignment(pairs: &[WindowPair], cfg: &ProtocolConfig) -> Result<FoldAssignment, Error> {
    Ok(stratified_folds(pairs, cfg.k, cfg.seed)?)
}

/// Fits the representation of one fold. Windows whose key is not in
/// `folds` are ignored.
pub fn prepare_fold_representation(
    pairs: &[WindowPair],
    folds: &FoldAssignment,
    fold: usize,
    kind: RepresentationKind,
    need: [bool; 2],
    cfg: &ProtocolConfig,
) -> Result<FoldRepresentation, Error> {
    cfg.validate()?;
    let mut ctx = Ctx { pairs, folds, cfg, hand: None };
    ctx.prepare(fold, kind, need)
}

fn rows_of<'b>(pairs: &'b [WindowPair], rows: &[usize], ecg: bool) -> Vec<&'b [f64]> {
    rows.iter().map(|&i| if ecg { pairs[i].ecg.as_slice() } else { pairs[i].eda.as_slice() }).collect()
}

fn owned(v: Vec<&[f64]>) -> Vec<Vec<f64>> {
    v.into_iter().map(|r| r.to_vec()).collect()
}

impl Ctx<'_> {
    fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, p) in self.pairs.iter().enumerate() {
            match self.folds.fold_of(&p.key) {
                Some(f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => {}
            }
        }
        // key order so the training stream does not depend on input order
        train.sort_by(|&a, &b| self.pairs[a].key.cmp(&self.pairs[b].key));
        test.sort_by(|&a, &b| self.pairs[a].key.cmp(&self.pairs[b].key));
        (train, test)
    }

    fn inner_split(&self, train: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
        let n_val = (self.cfg.validation_fraction * train.len() as f64).round() as usize;
        if n_val == 0 || n_val >= train.len() {
            return (train.to_vec(), Vec::new());
        }
        let mut r = train.to_vec();
        r.shuffle(&mut ChaCha8Rng::seed_from_u64(fold_seed(self.cfg.seed, fold, TAG_SPLIT)));
        let mut val = r[..n_val].to_vec();
        let mut fit = r[n_val..].to_vec();
        let key = |&a: &usize, &b: &usize| self.pairs[a].key.cmp(&self.pairs[b].key);
        val.sort_by(key);
        fit.sort_by(key);
        (fit, val)
    }

    fn prepare(&mut self, fold: usize, kind: RepresentationKind, need: [bool; 2]) -> Result<FoldRepresentation, Error> {
        if fold >= self.folds.k {
            return Err(Error::Config(format!("fold {fold} out of range for k = {}", self.folds.k)));
        }
        let (train, test) = self.split(fold);
        if train.is_empty() {
            return Err(Error::Data(format!("fold {fold} has no training windows")));
        }
        let mut rep = FoldRepresentation {
            fold,
            kind,
            train_rows: train,
            val_rows: Vec::new(),
            test_rows: test,
            ecg: None,
            eda: None,
            fused: None,
            networks: Vec::new(),
            selections: Vec::new(),
            cnn: None,
        };
        match kind {
            RepresentationKind::Latent => self.prepare_latent(&mut rep, need)?,
            RepresentationKind::Cnn => self.prepare_cnn(&mut rep, need)?,
            RepresentationKind::Handcrafted => self.prepare_handcrafted(&mut rep, need)?,
        }
        Ok(rep)
    }

    fn prepare_latent(&self, rep: &mut FoldRepresentation, need: [bool; 2]) -> Result<(), Error> {
        let (fit, val) = self.inner_split(&rep.train_rows, rep.fold);
        rep.val_rows = val.clone();
        for (m, ecg) in [(0, true), (1, false)] {
            if !need[m] {
                continue;
            }
            let (name, widths, tag) = if ecg {
                ("ae_ecg", self.cfg.ecg_widths(), TAG_ECG)
            } else {
                ("ae_eda", self.cfg.eda_widths(), TAG_EDA)
            };
            let len = rows_of(self.pairs, &rep.train_rows[..1], ecg)[0].len();
            let spec = build_ae(len, &widths);
            let tx = owned(rows_of(self.pairs, &fit, ecg));
            let vx = owned(rows_of(self.pairs, &val, ecg));
            let t = nn::train(&spec, &tx, &tx, &vx, &vx, &self.cfg.ae_train(fold_seed(self.cfg.seed, rep.fold, tag)))?;
            let block = Block {
                train: t.encode(&owned(rows_of(self.pairs, &rep.train_rows, ecg)))?,
                test: t.encode(&owned(rows_of(self.pairs, &rep.test_rows, ecg)))?,
            };
            log::debug!("fold {} {name}: {} epochs, best {}", rep.fold, t.history.epochs.len(), t.history.best_epoch);
            rep.networks.push((name.into(), t));
            if ecg {
                rep.ecg = Some(block);
            } else {
                rep.eda = Some(block);
            }
        }
        Ok(())
    }

    fn prepare_cnn(&self, rep: &mut FoldRepresentation, need: [bool; 2]) -> Result<(), Error> {
        let (fit, val) = self.inner_split(&rep.train_rows, rep.fold);
        rep.val_rows = val.clone();
        let label = |rows: &[usize]| -> Vec<Vec<f64>> { rows.iter().map(|&i| vec![self.pairs[i].label.as_f64()]).collect() };
        let mut proba = CnnProba::default();
        for (m, ecg) in [(0, true), (1, false)] {
            if !need[m] {
                continue;
            }
            let (name, widths, tag, epochs) = if ecg {
                ("cnn_ecg", self.cfg.ecg_widths(), TAG_ECG, self.cfg.cnn_ecg_epochs)
            } else {
                ("cnn_eda", self.cfg.eda_widths(), TAG_EDA, self.cfg.cnn_eda_epochs)
            };
            let len = rows_of(self.pairs, &rep.train_rows[..1], ecg)[0].len();
            let spec = build_cnn(len, &widths, self.cfg.cnn_dropout);
            let tx = owned(rows_of(self.pairs, &fit, ecg));
            let vx = owned(rows_of(self.pairs, &val, ecg));
            let tc = TrainConfig::cnn(fold_seed(self.cfg.seed, rep.fold, tag), epochs);
            let t = nn::train(&spec, &tx, &label(&fit), &vx, &label(&val), &tc)?;
            let all_train = owned(rows_of(self.pairs, &rep.train_rows, ecg));
            let test = owned(rows_of(self.pairs, &rep.test_rows, ecg));
            let p = |x: &[Vec<f64>]| -> Result<Vec<f64>, Error> {
                Ok(t.predict_rows(x)?.into_iter().map(|r| r[0]).collect())
            };
            let block = Block { train: t.encode(&all_train)?, test: t.encode(&test)? };
            if ecg {
                proba.val_ecg = p(&vx)?;
                proba.test_ecg = p(&test)?;
                rep.ecg = Some(block);
            } else {
                proba.val_eda = p(&vx)?;
                proba.test_eda = p(&test)?;
                rep.eda = Some(block);
            }
            rep.networks.push((name.into(), t));
        }
        rep.cnn = Some(proba);
        Ok(())
    }

    fn prepare_handcrafted(&mut self, rep: &mut FoldRepresentation, need: [bool; 2]) -> Result<(), Error> {
        if self.hand.is_none() {
            self.hand = Some(handcrafted_table(self.pairs, self.cfg));
        }
        let hand = self.hand.as_ref().expect("table");
        let dropped = rep.train_rows.iter().filter(|&&i| hand[i].is_none()).count();
        if dropped > 0 {
            log::warn!("fold {}: {dropped} training windows without usable ECG features dropped", rep.fold);
        }
        rep.train_rows.retain(|&i| hand[i].is_some());
        let y: Vec<f64> = rep.train_rows.iter().map(|&i| self.pairs[i].label.as_f64()).collect();
        let pick = |i: usize, b: usize| -> Option<Vec<f64>> {
            hand[i].as_ref().map(|(e, d)| match b {
                0 => e.clone(),
                1 => d.clone(),
                _ => feature_fusion(e, d),
            })
        };
        let blocks: Vec<(usize, &str)> = [(0, "ecg"), (1, "eda"), (2, "fused")]
            .into_iter()
            .filter(|&(b, _)| match b {
                0 => need[0],
                1 => need[1],
                _ => need[0] && need[1],
            })
            .collect();
        for (b, name) in blocks {
            let train: Vec<Vec<f64>> = rep.train_rows.iter().map(|&i| pick(i, b).expect("kept")).collect();
            if train.is_empty() {
                return Err(Error::Data(format!("fold {}: no windows with usable ECG features", rep.fold)));
            }
            let standardizer = Standardizer::fit(&train);
            // windows without features sit at the training mean
            let test_raw: Vec<Vec<f64>> =
                rep.test_rows.iter().map(|&i| pick(i, b).unwrap_or_else(|| standardizer.mean.clone())).collect();
            let zt = standardizer.transform(&train);
            let sel = lasso_select(&zt, &y, &self.cfg.lasso)?;
            let mut selected = sel.selected();
            if selected.is_empty() {
                log::warn!("fold {}: LASSO kept no {name} feature; using all", rep.fold);
                selected = (0..zt[0].len()).collect();
            }
            let keep = |m: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                m.into_iter().map(|r| selected.iter().map(|&j| r[j]).collect()).collect()
            };
            let block = Block { train: keep(zt), test: keep(standardizer.transform(&test_raw)) };
            match b {
                0 => rep.ecg = Some(block),
                1 => rep.eda = Some(block),
                _ => rep.fused = Some(block),
            }
            rep.selections.push((name.into(), BlockSelection { standardizer, selected, lambda: sel.lambda }));
        }
        Ok(())
    }
}

/// HIGH probabilities for `test_x` from a classifier fit on the training
/// block. A single-class training block predicts its class prior.
pub fn classifier_proba(
    kind: &ClassifierKind,
    train_x: &[Vec<f64>],
    train_y: &[ArousalLabel],
    test_x: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<f64>, Error> {
    if test_x.is_empty() {
        return Ok(Vec::new());
    }
    let prior = train_y.iter().filter(|l| l.is_high()).count() as f64 / train_y.len().max(1) as f64;
    if prior == 0.0 || prior == 1.0 {
        return Ok(vec![prior; test_x.len()]);
    }
    let p = match kind {
        ClassifierKind::RandomForest(c) => {
            let f = train_random_forest(train_x, train_y, &ForestConfig { seed: c.seed ^ seed, ..c.clone() })?;
            f.predict_proba(test_x)?
        }
        ClassifierKind::DecisionTree(c) => {
            let t = train_decision_tree(train_x, train_y, &DecisionTreeConfig { seed: c.seed ^ seed, ..c.clone() })?;
            if let Some(r) = test_x.iter().find(|r| r.len() != train_x[0].len()) {
                return Err(ModelError::Invalid(format!("{} features, tree expects {}", r.len(), train_x[0].len())).into());
            }
            test_x.iter().map(|r| t.leaf_probability(r)).collect()
        }
        ClassifierKind::Knn { k } => knn_proba(train_x, train_y, test_x, *k)?,
        ClassifierKind::Mlp { hidden, dropout, epochs } => {
            let s = Standardizer::fit(train_x);
            let tx = s.transform(train_x);
            let ty: Vec<Vec<f64>> = train_y.iter().map(|l| vec![l.as_f64()]).collect();
            let tc = TrainConfig { max_epochs: *epochs, patience: *epochs, ..TrainConfig::mlp(seed) };
            let t = nn::train(&build_mlp(tx[0].len(), hidden, *dropout), &tx, &ty, &[], &[], &tc)?;
            t.predict_rows(&s.transform(test_x))?.into_iter().map(|r| r[0]).collect()
        }
    };
    Ok(p)
}

/// Out-of-fold probabilities over the training block.
fn inner_oof(kind: &ClassifierKind, x: &[Vec<f64>], y: &[ArousalLabel], folds: usize, seed: u64) -> Result<Vec<f64>, Error> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; x.len()];
    for (j, &i) in order.iter().enumerate() {
        fold_of[i] = j % folds;
    }
    let mut out = vec![0.0; x.len()];
    for f in 0..folds.min(x.len()) {
        let (tr, te): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|&i| fold_of[i] != f);
        let pick = |rows: &[usize]| -> Vec<Vec<f64>> { rows.iter().map(|&i| x[i].clone()).collect() };
        let ty: Vec<ArousalLabel> = tr.iter().map(|&i| y[i]).collect();
        let p = classifier_proba(kind, &pick(&tr), &ty, &pick(&te), splitmix(seed ^ f as u64))?;
        for (&i, v) in te.iter().zip(p) {
            out[i] = v;
        }
    }
    Ok(out)
}

fn block<'r>(b: &'r Option<Block>, what: &str) -> Result<&'r Block, Error> {
    b.as_ref().ok_or_else(|| Error::Config(format!("representation lacks the {what} block")))
}

/// Fits the final classifier of one fold with the given labels and scores
/// the held-out windows.
pub fn classify_fold(
    pairs: &[WindowPair],
    labels: &[ArousalLabel],
    rep: &FoldRepresentation,
    mode: Mode,
    cfg: &ProtocolConfig,
) -> Result<(FoldOutcome, Vec<Prediction>), Error> {
    if mode.representation != rep.kind {
        return Err(Error::Config(format!("mode {mode} does not match a {:?} representation", rep.kind)));
    }
    if labels.len() != pairs.len() {
        return Err(Error::Data("one label per window required".into()));
    }
    let ytr: Vec<ArousalLabel> = rep.train_rows.iter().map(|&i| labels[i]).collect();
    let seed = fold_seed(cfg.seed, rep.fold, TAG_CLF);
    let clf = &cfg.classifier;
    use FeatureMode::*;
    let probs: Vec<f64> = match (mode.representation, mode.features) {
        (RepresentationKind::Cnn, Ecg | Eda | DecFusion) => {
            let c = rep.cnn.as_ref().ok_or_else(|| Error::Config("CNN representation without probabilities".into()))?;
            match mode.features {
                Ecg if !c.test_ecg.is_empty() || rep.test_rows.is_empty() => c.test_ecg.clone(),
                Eda if !c.test_eda.is_empty() || rep.test_rows.is_empty() => c.test_eda.clone(),
                DecFusion if c.val_ecg.len() == c.val_eda.len() && !rep.val_rows.is_empty() => {
                    let yv: Vec<ArousalLabel> = rep.val_rows.iter().map(|&i| labels[i]).collect();
                    let m = decision_fusion_train(&c.val_ecg, &c.val_eda, &yv)?;
                    c.test_ecg.iter().zip(&c.test_eda).map(|(&a, &b)| m.output(a, b)).collect()
                }
                _ => return Err(Error::Config(format!("{mode} needs CNN outputs that were not prepared"))),
            }
        }
        (RepresentationKind::Cnn, FeatFusion) => {
            let (e, d) = (block(&rep.ecg, "ECG")?, block(&rep.eda, "EDA")?);
            let fuse = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
                a.iter().zip(b).map(|(x, y)| feature_fusion(x, y)).collect()
            };
            let head = ClassifierKind::Mlp { hidden: vec![40], dropout: cfg.cnn_dropout, epochs: cfg.cnn_fusion_epochs };
            classifier_proba(&head, &fuse(&e.train, &d.train), &ytr, &fuse(&e.test, &d.test), seed)?
        }
        (_, Ecg) => {
            let b = block(&rep.ecg, "ECG")?;
            classifier_proba(clf, &b.train, &ytr, &b.test, seed)?
        }
        (_, Eda) => {
            let b = block(&rep.eda, "EDA")?;
            classifier_proba(clf, &b.train, &ytr, &b.test, seed)?
        }
        (RepresentationKind::Handcrafted, FeatFusion) => {
            let b = block(&rep.fused, "fused")?;
            classifier_proba(clf, &b.train, &ytr, &b.test, seed)?
        }
        (_, FeatFusion) => {
            let (e, d) = (block(&rep.ecg, "ECG")?, block(&rep.eda, "EDA")?);
            let tr: Vec<Vec<f64>> = e.train.iter().zip(&d.train).map(|(a, b)| feature_fusion(a, b)).collect();
            let te: Vec<Vec<f64>> = e.test.iter().zip(&d.test).map(|(a, b)| feature_fusion(a, b)).collect();
            classifier_proba(clf, &tr, &ytr, &te, seed)?
        }
        (_, DecFusion) => {
            let (e, d) = (block(&rep.ecg, "ECG")?, block(&rep.eda, "EDA")?);
            let inner = fold_seed(cfg.seed, rep.fold, TAG_INNER);
            let oe = inner_oof(clf, &e.train, &ytr, cfg.decision_inner_folds, inner)?;
            let od = inner_oof(clf, &d.train, &ytr, cfg.decision_inner_folds, inner)?;
            let m = decision_fusion_train(&oe, &od, &ytr)?;
            let pe = classifier_proba(clf, &e.train, &ytr, &e.test, seed)?;
            let pd = classifier_proba(clf, &d.train, &ytr, &d.test, seed)?;
            pe.iter().zip(&pd).map(|(&a, &b)| m.output(a, b)).collect()
        }
    };
    if probs.len() != rep.test_rows.len() {
        return Err(Error::Data(format!("fold {}: {} scores for {} windows", rep.fold, probs.len(), rep.test_rows.len())));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite()) {
        return Err(Error::Numeric(format!("fold {}: non-finite score {p}", rep.fold)));
    }
    let mut confusion = Confusion::default();
    let preds: Vec<Prediction> = rep
        .test_rows
        .iter()
        .zip(&probs)
        .map(|(&i, &p)| {
            let y_pred = ArousalLabel::from_bool(p >= 0.5);
            confusion.add(labels[i], y_pred);
            Prediction { key: pairs[i].key.clone(), fold: rep.fold, y_true: labels[i], y_pred, probability: p.clamp(0.0, 1.0) }
        })
        .collect();
    let outcome = FoldOutcome {
        fold: rep.fold,
        n_train: rep.train_rows.len(),
        n_test: rep.test_rows.len(),
        confusion,
        accuracy: confusion.accuracy(),
        f1: confusion.f1(),
    };
    Ok((outcome, preds))
}

fn assemble(
    mode: Mode,
    cfg: &ProtocolConfig,
    parts: Vec<(FoldOutcome, Vec<Prediction>)>,
    reps: &[&FoldRepresentation],
) -> ProtocolRun {
    let mut per: BTreeMap<String, Confusion> = BTreeMap::new();
    let mut folds = Vec::new();
    let mut predictions = Vec::new();
    for (o, p) in parts {
        for pr in &p {
            per.entry(pr.key.dataset_id.clone()).or_default().add(pr.y_true, pr.y_pred);
        }
        folds.push(o);
        predictions.extend(p);
    }
    let histories = reps
        .iter()
        .flat_map(|r| {
            r.networks.iter().filter(|(name, _)| mode_uses(mode, name)).map(|(name, t)| FoldHistory {
                fold: r.fold,
                model: name.clone(),
                history: t.history.clone(),
            })
        })
        .collect();
    ProtocolRun {
        mode,
        classifier: cfg.classifier.name().into(),
        k: cfg.k,
        seed: cfg.seed,
        report: MetricsReport::from_confusions(&per),
        folds,
        predictions,
        histories,
    }
}

fn mode_uses(mode: Mode, network: &str) -> bool {
    let [e, d] = mode.needs();
    (e && network.ends_with("ecg")) || (d && network.ends_with("eda"))
}

/// Runs several modes over one fold split, fitting each representation
/// kind once per fold and sharing it between the modes that use it.
/// `labels` replaces the window labels for the final classifiers only.
pub fn run_protocols_with(
    pairs: &[WindowPair],
    labels: Option<&[ArousalLabel]>,
    modes: &[Mode],
    cfg: &ProtocolConfig,
) -> Result<(Vec<ProtocolRun>, Vec<FoldRepresentation>), Error> {
    cfg.validate()?;
    if modes.is_empty() {
        return Err(Error::Config("no modes requested".into()));
    }
    let own: Vec<ArousalLabel> = pairs.iter().map(|p| p.label).collect();
    let labels = labels.unwrap_or(&own);
    let folds = fold_assignment(pairs, cfg)?;
    let mut ctx = Ctx { pairs, folds: &folds, cfg, hand: None };
    let kinds: BTreeSet<RepresentationKind> = modes.iter().map(|m| m.representation).collect();
    let mut parts: BTreeMap<Mode, Vec<(FoldOutcome, Vec<Prediction>)>> = BTreeMap::new();
    let mut reps = Vec::new();
    for kind in kinds {
        let need = modes.iter().filter(|m| m.representation == kind).fold([false; 2], |acc, m| {
            let n = m.needs();
            [acc[0] || n[0], acc[1] || n[1]]
        });
        for fold in 0..cfg.k {
            let rep = ctx.prepare(fold, kind, need)?;
            for &m in modes.iter().filter(|m| m.representation == kind) {
                parts.entry(m).or_default().push(classify_fold(pairs, labels, &rep, m, cfg)?);
            }
            log::info!("{kind:?} fold {}/{} done", fold + 1, cfg.k);
            reps.push(rep);
        }
    }
    let runs = modes
        .iter()
        .map(|&m| {
            let r: Vec<&FoldRepresentation> = reps.iter().filter(|r| r.kind == m.representation).collect();
            assemble(m, cfg, parts.get(&m).cloned().unwrap_or_default(), &r)
        })
        .collect();
    Ok((runs, reps))
}

pub fn run_protocols(pairs: &[WindowPair], modes: &[Mode], cfg: &ProtocolConfig) -> Result<Vec<ProtocolRun>, Error> {
    Ok(run_protocols_with(pairs, None, modes, cfg)?.0)
}

pub fn run_protocol(pairs: &[WindowPair], mode: Mode, cfg: &ProtocolConfig) -> Result<ProtocolRun, Error> {
    Ok(run_protocols(pairs, &[mode], cfg)?.remove(0))
}

/// Re-scores already fitted representations with other labels. Only
/// meaningful for representations fitted without labels (latent).
pub fn classify_prepared(
    pairs: &[WindowPair],
    labels: &[ArousalLabel],
    reps: &[FoldRepresentation],
    mode: Mode,
    cfg: &ProtocolConfig,
) -> Result<ProtocolRun, Error> {
    let mine: Vec<&FoldRepresentation> = reps.iter().filter(|r| r.kind == mode.representation).collect();
    if mine.is_empty() {
        return Err(Error::Config(format!("no prepared representation for {mode}")));
    }
    let parts = mine.iter().map(|r| classify_fold(pairs, labels, r, mode, cfg)).collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(mode, cfg, parts, &mine))
}

/// Labels shuffled across windows with a seeded permutation.
pub fn permuted_labels(pairs: &[WindowPair], seed: u64) -> Vec<ArousalLabel> {
    let mut l: Vec<ArousalLabel> = pairs.iter().map(|p| p.label).collect();
    l.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    l
}

/// Fits `fold` twice, once on all windows and once with the held-out
/// windows deleted, and reports whether every fitted model is
/// bit-identical.
pub fn leakage_check(
    pairs: &[WindowPair],
    kind: RepresentationKind,
    fold: usize,
    cfg: &ProtocolConfig,
) -> Result<bool, Error> {
    let folds = fold_assignment(pairs, cfg)?;
    let full = prepare_fold_representation(pairs, &folds, fold, kind, [true, true], cfg)?;
    let kept: Vec<WindowPair> = pairs.iter().filter(|p| folds.fold_of(&p.key) != Some(fold)).cloned().collect();
    let reduced = prepare_fold_representation(&kept, &folds, fold, kind, [true, true], cfg)?;
    Ok(full.same_models(&reduced) && reduced.test_rows.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, SynthConfig};
    use crate::preprocess::{build_windows, PreprocessConfig};

    fn small_pairs() -> Vec<WindowPair> {
        let (c, _) = synth_corpus(&SynthConfig::new(4, 4, 20.0, 3)).unwrap();
        build_windows(&c, &PreprocessConfig::default()).unwrap()
    }

    fn fast_cfg() -> ProtocolConfig {
        ProtocolConfig {
            k: 4,
            seed: 5,
            width_divisor: 32,
            ae_max_epochs: 2,
            cnn_ecg_epochs: 2,
            cnn_eda_epochs: 2,
            cnn_fusion_epochs: 5,
            classifier: ClassifierKind::RandomForest(ForestConfig { n_trees: 15, ..Default::default() }),
            ..Default::default()
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::all() {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert_eq!(Mode::all().len(), 12);
        assert!("latent_both".parse::<Mode>().is_err());
        let j = serde_json::to_string(&Mode::new(RepresentationKind::Latent, FeatureMode::FeatFusion)).unwrap();
        assert_eq!(j, "\"latent_featfusion\"");
    }

    #[test]
    fn classifier_config_parses_from_toml() {
        let c: ProtocolConfig = toml::from_str("k = 5\n[classifier]\nkind = \"knn\"\nk = 3\n").unwrap();
        assert_eq!(c.classifier, ClassifierKind::Knn { k: 3 });
        let c: ProtocolConfig = toml::from_str("[classifier]\nkind = \"random_forest\"\nn_trees = 7\n").unwrap();
        assert!(matches!(c.classifier, ClassifierKind::RandomForest(ForestConfig { n_trees: 7, .. })));
        assert!(toml::from_str::<ProtocolConfig>("kk = 5\n").is_err());
    }

    #[test]
    fn every_mode_runs_and_counts_add_up() {
        let pairs = small_pairs();
        let runs = run_protocols(&pairs, &Mode::all(), &fast_cfg()).unwrap();
        assert_eq!(runs.len(), 12);
        for r in &runs {
            let mut sum = Confusion::default();
            r.folds.iter().for_each(|f| sum.merge(&f.confusion));
            assert_eq!(sum, r.report.confusion(), "{}", r.mode);
            assert_eq!(sum.total(), pairs.len(), "{}", r.mode);
            assert!((0.0..=1.0).contains(&r.report.accuracy));
        }
    }

    #[test]
    fn handcrafted_leakage_check_is_exact() {
        let pairs = small_pairs();
        assert!(leakage_check(&pairs, RepresentationKind::Handcrafted, 1, &fast_cfg()).unwrap());
    }

    #[test]
    fn inner_split_is_disjoint_and_covers() {
        let pairs = small_pairs();
        let cfg = fast_cfg();
        let folds = fold_assignment(&pairs, &cfg).unwrap();
        let ctx = Ctx { pairs: &pairs, folds: &folds, cfg: &cfg, hand: None };
        let (train, test) = ctx.split(0);
        let (fit, val) = ctx.inner_split(&train, 0);
        assert_eq!(val.len(), (0.1 * train.len() as f64).round() as usize);
        let mut all: Vec<usize> = fit.iter().chain(&val).copied().collect();
        all.sort();
        let mut t = train.clone();
        t.sort();
        assert_eq!(all, t);
        assert!(test.iter().all(|i| !train.contains(i)));
    }
}

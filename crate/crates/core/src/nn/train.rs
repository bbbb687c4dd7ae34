use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, Cache, Mode, BN_MOMENTUM};
use super::{Network, NetworkSpec, NnError, TensorBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    RmsProp,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
    BinaryCrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl TrainConfig {
    /// RMSProp, MSE, batch 32, 20 epochs, patience 4.
    pub fn autoencoder(seed: u64) -> Self {
        Self {
            optimizer: Optimizer::RmsProp,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 20,
            patience: 4,
            loss: Loss::Mse,
            seed,
        }
    }

    /// Adam 1e-4, binary cross-entropy, batch 64, patience 50.
    pub fn cnn(seed: u64, max_epochs: usize) -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: 1e-4,
            batch_size: 64,
            max_epochs,
            patience: 50,
            loss: Loss::BinaryCrossEntropy,
            seed,
        }
    }

    /// RMSProp 1e-3, binary cross-entropy, 200 epochs, no early stop.
    pub fn mlp(seed: u64) -> Self {
        Self {
            optimizer: Optimizer::RmsProp,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: 200,
            loss: Loss::BinaryCrossEntropy,
            seed,
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::Config(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(NnError::Config("batch size and max epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<Epoch>,
    /// Index into `epochs` whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    /// Validation loss when available, else training loss.
    pub fn monitored(&self, epoch: usize) -> f64 {
        let e = &self.epochs[epoch];
        e.val_loss.unwrap_or(e.train_loss)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedNetwork {
    pub network: Network,
    pub history: History,
}

impl TrainedNetwork {
    pub fn spec(&self) -> &NetworkSpec {
        self.network.spec()
    }

    pub fn encode(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NnError> {
        self.network.encode(rows)
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NnError> {
        self.network.predict_rows(rows)
    }
}

const BCE_CLIP: f64 = 1e-7;
const OPT_EPS: f64 = 1e-7;

/// Mean loss over the batch and its gradient with respect to `pred`.
fn loss_and_grad(loss: Loss, pred: &[f64], target: &[f64], batch: usize) -> (f64, Vec<f64>) {
    match loss {
        Loss::Mse => {
            let n = pred.len() as f64;
            let mut g = Vec::with_capacity(pred.len());
            let mut l = 0.0;
            for (p, t) in pred.iter().zip(target) {
                let d = p - t;
                l += d * d;
                g.push(2.0 * d / n);
            }
            (l / n, g)
        }
        Loss::BinaryCrossEntropy => {
            let b = batch as f64;
            let mut g = Vec::with_capacity(pred.len());
            let mut l = 0.0;
            for (&p, &t) in pred.iter().zip(target) {
                let pc = p.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
                l -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
                g.push((pc - t) / (pc * (1.0 - pc)) / b);
            }
            (l / b, g)
        }
    }
}

fn loss_only(loss: Loss, pred: &[f64], target: &[f64], batch: usize) -> f64 {
    loss_and_grad(loss, pred, target, batch).0
}

struct OptState {
    m: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<Vec<f64>>>,
    t: i32,
}

impl OptState {
    fn new(net: &Network) -> Self {
        let z: Vec<Vec<Vec<f64>>> = net.params.iter().map(|l| l.iter().map(|b| vec![0.0; b.len()]).collect()).collect();
        Self { m: z.clone(), v: z, t: 0 }
    }

    fn step(&mut self, cfg: &TrainConfig, net: &mut Network, grads: &[Vec<Vec<f64>>]) {
        self.t += 1;
        let lr = cfg.learning_rate;
        for li in 0..net.params.len() {
            for bi in 0..net.params[li].len() {
                let p = &mut net.params[li][bi];
                let g = &grads[li][bi];
                let v = &mut self.v[li][bi];
                match cfg.optimizer {
                    Optimizer::RmsProp => {
                        const RHO: f64 = 0.9;
                        for k in 0..p.len() {
                            v[k] = RHO * v[k] + (1.0 - RHO) * g[k] * g[k];
                            p[k] -= lr * g[k] / (v[k].sqrt() + OPT_EPS);
                        }
                    }
                    Optimizer::Adam => {
                        const B1: f64 = 0.9;
                        const B2: f64 = 0.999;
                        let m = &mut self.m[li][bi];
                        let c1 = 1.0 - B1.powi(self.t);
                        let c2 = 1.0 - B2.powi(self.t);
                        for k in 0..p.len() {
                            m[k] = B1 * m[k] + (1.0 - B1) * g[k];
                            v[k] = B2 * v[k] + (1.0 - B2) * g[k] * g[k];
                            p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + OPT_EPS);
                        }
                    }
                }
            }
        }
    }
}

fn check_rows(net: &Network, x: &[Vec<f64>], y: &[Vec<f64>], what: &str) -> Result<(), NnError> {
    let in_size = net.spec().input_shape.size();
    let out_size = net.spec().output_shape()?.size();
    if x.len() != y.len() {
        return Err(NnError::Shape(format!("{what}: {} inputs but {} targets", x.len(), y.len())));
    }
    if let Some(i) = x.iter().position(|r| r.len() != in_size) {
        return Err(NnError::Shape(format!("{what} input {i} has {} values, expected {in_size}", x[i].len())));
    }
    if let Some(i) = y.iter().position(|r| r.len() != out_size) {
        return Err(NnError::Shape(format!("{what} target {i} has {} values, expected {out_size}", y[i].len())));
    }
    Ok(())
}

/// Inference-mode loss (plus L1 penalties) over `x`, in chunks.
fn evaluate(net: &Network, loss: Loss, x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64, NnError> {
    const CHUNK: usize = 64;
    let mut total = 0.0;
    for (xc, yc) in x.chunks(CHUNK).zip(y.chunks(CHUNK)) {
        let t = TensorBuf::from_rows(net.spec().input_shape, xc)?;
        let mut cur = t.data;
        let mut pen = 0.0;
        for li in 0..net.spec().layers.len() {
            let f = layers::forward(net, li, &cur, xc.len(), &mut Mode::Infer);
            pen += f.penalty;
            cur = f.y;
        }
        let target: Vec<f64> = yc.iter().flatten().copied().collect();
        total += (loss_only(loss, &cur, &target, xc.len()) + pen) * xc.len() as f64;
    }
    Ok(total / x.len() as f64)
}

/// Mini-batch training with seeded shuffling and early stopping on the
/// validation loss (training loss when `val_x` is empty). Parameters from
/// the best epoch are returned.
pub fn train(
    spec: &NetworkSpec,
    train_x: &[Vec<f64>],
    train_y: &[Vec<f64>],
    val_x: &[Vec<f64>],
    val_y: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainedNetwork, NnError> {
    cfg.validate()?;
    let mut net = Network::new(spec.clone(), cfg.seed)?;
    check_rows(&net, train_x, train_y, "training")?;
    check_rows(&net, val_x, val_y, "validation")?;
    if train_x.is_empty() {
        return Err(NnError::Shape("no training samples".into()));
    }
    let in_size = spec.input_shape.size();
    let n_layers = spec.layers.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let mut opt = OptState::new(&net);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, Network)> = None;
    let mut wait = 0;
    let mut batch_counter = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let b = idx.len();
            let mut x = Vec::with_capacity(b * in_size);
            let mut target = Vec::new();
            for &i in idx {
                x.extend_from_slice(&train_x[i]);
                target.extend_from_slice(&train_y[i]);
            }
            let mut caches: Vec<Cache> = Vec::with_capacity(n_layers);
            let mut cur = x;
            let mut pen = 0.0;
            for li in 0..n_layers {
                let f = layers::forward(&net, li, &cur, b, &mut Mode::Train { rng: &mut rng, probe: None });
                if f.y.iter().any(|v| !v.is_finite()) || !f.penalty.is_finite() {
                    return Err(NnError::NonFinite {
                        layer: li,
                        kind: spec.layers[li].name().into(),
                        batch: batch_counter,
                    });
                }
                pen += f.penalty;
                caches.push(f.cache);
                cur = f.y;
            }
            let (l, mut d) = loss_and_grad(cfg.loss, &cur, &target, b);
            if !l.is_finite() {
                return Err(NnError::NonFinite { layer: n_layers, kind: "loss".into(), batch: batch_counter });
            }
            epoch_loss += (l + pen) * b as f64;

            let mut grads: Vec<Vec<Vec<f64>>> =
                net.params.iter().map(|l| l.iter().map(|p| vec![0.0; p.len()]).collect()).collect();
            for li in (0..n_layers).rev() {
                match layers::backward(&net, li, &caches[li], d, b, &mut grads[li], li > 0) {
                    Some(dx) => d = dx,
                    None => break,
                }
            }
            for (li, c) in caches.iter().enumerate() {
                if let Cache::Norm { mean, var, .. } = c {
                    let r = &mut net.running[li];
                    for ch in 0..mean.len() {
                        r[0][ch] = BN_MOMENTUM * r[0][ch] + (1.0 - BN_MOMENTUM) * mean[ch];
                        r[1][ch] = BN_MOMENTUM * r[1][ch] + (1.0 - BN_MOMENTUM) * var[ch];
                    }
                }
            }
            opt.step(cfg, &mut net, &grads);
            if let Some((li, _)) = net
                .params
                .iter()
                .enumerate()
                .find(|(_, l)| l.iter().flatten().any(|v| !v.is_finite()))
            {
                return Err(NnError::NonFinite { layer: li, kind: spec.layers[li].name().into(), batch: batch_counter });
            }
            batch_counter += 1;
        }
        let train_loss = epoch_loss / train_x.len() as f64;
        let val_loss = if val_x.is_empty() { None } else { Some(evaluate(&net, cfg.loss, val_x, val_y)?) };
        history.epochs.push(Epoch { train_loss, val_loss });
        let monitored = history.monitored(epoch);
        if !monitored.is_finite() {
            return Err(NnError::NonFinite { layer: n_layers, kind: "validation loss".into(), batch: batch_counter });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:?}");
        match &best {
            Some((b, _)) if monitored >= *b => {
                wait += 1;
                if wait >= cfg.patience.max(1) && epoch + 1 < cfg.max_epochs {
                    history.stopped_early = true;
                    break;
                }
            }
            _ => {
                best = Some((monitored, net.clone()));
                history.best_epoch = epoch;
                wait = 0;
            }
        }
    }
    let network = best.map(|(_, n)| n).expect("at least one epoch ran");
    Ok(TrainedNetwork { network, history })
}

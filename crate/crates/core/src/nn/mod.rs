//! A small layer-sequential network engine with reverse-mode gradients,
//! sized for 1-D convolutional autoencoders and their classifier heads.
//!
//! Signals are laid out `(length, channels)` row-major per sample, samples
//! contiguous in a batch. Dense layers flatten their input and emit
//! `(units, 1)`, so a decoder can upsample straight from a latent vector.

mod arch;
mod layers;
mod linalg;
mod persist;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arch::{
    build_ae, build_ae_ecg, build_ae_eda, build_cnn, build_mlp, AeWidths, ECG_AE_WIDTHS, EDA_AE_WIDTHS, LATENT_DIM,
    LATENT_L1,
};
pub use layers::{check_gradients, GradCheck};
pub use persist::{
    from_json as network_from_json, load_network, save_network, to_json as network_to_json, FORMAT_NAME, FORMAT_VERSION,
};
pub use train::{train, Epoch, History, Loss, Optimizer, TrainConfig, TrainedNetwork};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value at layer {layer} ({kind}), batch {batch}")]
    NonFinite { layer: usize, kind: String, batch: usize },
    #[error("model file: {0}")]
    Persist(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-sample shape. Dense activations are `(units, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub len: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(len: usize, channels: usize) -> Self {
        Self { len, channels }
    }

    pub const fn units(units: usize) -> Self {
        Self { len: units, channels: 1 }
    }

    pub const fn size(&self) -> usize {
        self.len * self.channels
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.len, self.channels)
    }
}

/// A batch of equally shaped samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorBuf {
    pub shape: Shape,
    pub batch: usize,
    pub data: Vec<f64>,
}

impl TensorBuf {
    pub fn new(shape: Shape, batch: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != shape.size() * batch {
            return Err(NnError::Shape(format!(
                "{} values for {batch} samples of {shape}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Shape("non-finite input".into()));
        }
        Ok(Self { shape, batch, data })
    }

    pub fn from_rows(shape: Shape, rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let mut data = Vec::with_capacity(rows.len() * shape.size());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != shape.size() {
                return Err(NnError::Shape(format!("sample {i} has {} values, expected {shape}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(shape, rows.len(), data)
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let s = self.shape.size();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.batch).map(|i| self.sample(i).to_vec()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

/// What a dense layer's L1 coefficient penalizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum L1Target {
    /// Mean over the batch of `Σ|a|` on the layer output.
    #[default]
    Activity,
    /// `Σ|W|` on the kernel.
    Weights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride 1, same padding (left pad `kernel / 2`).
    Conv1D { filters: usize, kernel: usize, activation: Activation },
    MaxPool1D { size: usize },
    Upsample1D { factor: usize },
    Dense {
        units: usize,
        activation: Activation,
        #[serde(default)]
        l1: f64,
        #[serde(default)]
        l1_target: L1Target,
    },
    BatchNorm1D,
    Dropout { rate: f64 },
    Activation { activation: Activation },
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv1D { filters, kernel, activation: Activation::Relu }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation, l1: 0.0, l1_target: L1Target::Activity }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1D { .. } => "conv1d",
            LayerSpec::MaxPool1D { .. } => "maxpool1d",
            LayerSpec::Upsample1D { .. } => "upsample1d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::BatchNorm1D => "batchnorm1d",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Activation { .. } => "activation",
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape, NnError> {
        let bad = |msg: String| Err(NnError::Shape(format!("{}: {msg}", self.name())));
        match *self {
            LayerSpec::Conv1D { filters, kernel, .. } => {
                if kernel == 0 || filters == 0 {
                    return bad("kernel and filters must be >= 1".into());
                }
                Ok(Shape::new(input.len, filters))
            }
            LayerSpec::MaxPool1D { size } => {
                if size < 2 {
                    return bad(format!("pool size {size} < 2"));
                }
                if input.len % size != 0 {
                    return bad(format!("length {} not divisible by {size}", input.len));
                }
                Ok(Shape::new(input.len / size, input.channels))
            }
            LayerSpec::Upsample1D { factor } => {
                if factor < 2 {
                    return bad(format!("factor {factor} < 2"));
                }
                Ok(Shape::new(input.len * factor, input.channels))
            }
            LayerSpec::Dense { units, l1, .. } => {
                if units == 0 {
                    return bad("units must be >= 1".into());
                }
                if !(l1 >= 0.0 && l1.is_finite()) {
                    return bad(format!("L1 coefficient {l1} must be >= 0"));
                }
                Ok(Shape::units(units))
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("rate {rate} outside [0, 1)"));
                }
                Ok(input)
            }
            LayerSpec::BatchNorm1D | LayerSpec::Activation { .. } => Ok(input),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
    /// Index of the layer whose output is the latent representation.
    #[serde(default)]
    pub latent_tap: Option<usize>,
}

impl NetworkSpec {
    /// Input shape followed by every layer's output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>, NnError> {
        let mut out = vec![self.input_shape];
        for l in &self.layers {
            let next = l.output_shape(*out.last().expect("nonempty"))?;
            out.push(next);
        }
        if let Some(t) = self.latent_tap {
            if t >= self.layers.len() {
                return Err(NnError::Shape(format!("latent tap {t} beyond {} layers", self.layers.len())));
            }
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Shape, NnError> {
        Ok(*self.shapes()?.last().expect("nonempty"))
    }

    pub fn latent_shape(&self) -> Result<Option<Shape>, NnError> {
        let shapes = self.shapes()?;
        Ok(self.latent_tap.map(|t| shapes[t + 1]))
    }

    /// The layers up to and including the latent tap, as a standalone spec.
    pub fn encoder(&self) -> Option<NetworkSpec> {
        self.latent_tap.map(|t| NetworkSpec {
            input_shape: self.input_shape,
            layers: self.layers[..=t].to_vec(),
            latent_tap: Some(t),
        })
    }
}

/// Trainable parameters and running statistics of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<Shape>,
    /// Per layer: conv/dense `[w, b]`, batch norm `[gamma, beta]`.
    pub(crate) params: Vec<Vec<Vec<f64>>>,
    /// Per layer: batch norm `[mean, var]`.
    pub(crate) running: Vec<Vec<Vec<f64>>>,
}

impl Network {
    /// Seeded initialization: He normal before ReLU, Glorot uniform
    /// otherwise, zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self, NnError> {
        let shapes = spec.shapes()?;
        let (params, running) = layers::init_params(&spec, &shapes, seed);
        Ok(Self { spec, shapes, params, running })
    }

    pub(crate) fn from_parts(
        spec: NetworkSpec,
        params: Vec<Vec<Vec<f64>>>,
        running: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, NnError> {
        let shapes = spec.shapes()?;
        let (want_p, want_r) = layers::init_params(&spec, &shapes, 0);
        let same = |a: &Vec<Vec<Vec<f64>>>, b: &Vec<Vec<Vec<f64>>>| {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(u, v)| u.len() == v.len()))
        };
        if !same(&params, &want_p) || !same(&running, &want_r) {
            return Err(NnError::Persist("parameter shapes do not match the network spec".into()));
        }
        Ok(Self { spec, shapes, params, running })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().flatten().map(Vec::len).sum()
    }

    /// Layer parameters, `[w, b]` or `[gamma, beta]`; empty for
    /// parameter-free layers.
    pub fn layer_params(&self, layer: usize) -> &[Vec<f64>] {
        &self.params[layer]
    }

    /// Inference-mode forward pass through layers `0..=upto`.
    pub fn forward_to(&self, x: &TensorBuf, upto: usize) -> Result<TensorBuf, NnError> {
        if x.shape != self.spec.input_shape {
            return Err(NnError::Shape(format!("input {} but network expects {}", x.shape, self.spec.input_shape)));
        }
        let mut cur = x.data.clone();
        for li in 0..=upto.min(self.spec.layers.len() - 1) {
            cur = layers::forward(self, li, &cur, x.batch, &mut layers::Mode::Infer).y;
        }
        let shape = self.shapes[upto.min(self.spec.layers.len() - 1) + 1];
        Ok(TensorBuf { shape, batch: x.batch, data: cur })
    }

    /// Inference-mode forward pass (dropout off, running batch-norm stats).
    pub fn predict(&self, x: &TensorBuf) -> Result<TensorBuf, NnError> {
        self.forward_to(x, self.spec.layers.len() - 1)
    }

    /// Runs `rows` through the network in chunks, returning one output row per input.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NnError> {
        let last = self.spec.layers.len() - 1;
        self.rows_to(rows, last)
    }

    /// Latent vectors from the configured tap.
    pub fn encode(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NnError> {
        let tap = self
            .spec
            .latent_tap
            .ok_or_else(|| NnError::Config("network has no latent tap".into()))?;
        self.rows_to(rows, tap)
    }

    fn rows_to(&self, rows: &[Vec<f64>], upto: usize) -> Result<Vec<Vec<f64>>, NnError> {
        const CHUNK: usize = 64;
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(CHUNK) {
            let t = TensorBuf::from_rows(self.spec.input_shape, chunk)?;
            out.extend(self.forward_to(&t, upto)?.rows());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_errors() {
        assert!(LayerSpec::MaxPool1D { size: 2 }.output_shape(Shape::new(5, 1)).is_err());
        assert!(LayerSpec::MaxPool1D { size: 1 }.output_shape(Shape::new(4, 1)).is_err());
        assert!(LayerSpec::conv(1, 0).output_shape(Shape::new(4, 1)).is_err());
        assert!(LayerSpec::Dropout { rate: 1.0 }.output_shape(Shape::new(4, 1)).is_err());
        let d = LayerSpec::Dense { units: 3, activation: Activation::Linear, l1: -1.0, l1_target: L1Target::Activity };
        assert!(d.output_shape(Shape::new(4, 1)).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = build_ae_eda();
        let s = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}

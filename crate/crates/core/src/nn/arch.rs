//! Autoencoder, CNN and MLP layouts.

use serde::{Deserialize, Serialize};

use super::{Activation, L1Target, LayerSpec, NetworkSpec, Shape};
use crate::corpus::{ECG_WINDOW_LEN, EDA_WINDOW_LEN};

pub const LATENT_DIM: usize = 80;
pub const LATENT_L1: f64 = 1e-9;

/// Filter counts and kernels of a stacked convolutional autoencoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeWidths {
    pub first_filters: usize,
    pub first_kernel: usize,
    /// One entry per convolutional block; both convolutions in a block use it.
    pub block_filters: Vec<usize>,
    pub block_kernels: (usize, usize),
    pub bottleneck_kernel: usize,
    pub latent_activation: Activation,
    pub latent_l1: f64,
}

pub const ECG_AE_WIDTHS: AeWidths = AeWidths {
    first_filters: 128,
    first_kernel: 200,
    block_filters: Vec::new(),
    block_kernels: (50, 10),
    bottleneck_kernel: 10,
    latent_activation: Activation::Relu,
    latent_l1: LATENT_L1,
};

pub const EDA_AE_WIDTHS: AeWidths = AeWidths {
    first_filters: 32,
    first_kernel: 100,
    block_filters: Vec::new(),
    block_kernels: (50, 10),
    bottleneck_kernel: 10,
    latent_activation: Activation::Relu,
    latent_l1: LATENT_L1,
};

impl AeWidths {
    pub fn ecg() -> Self {
        Self { block_filters: vec![64, 32, 16], ..ECG_AE_WIDTHS }
    }

    pub fn eda() -> Self {
        Self { block_filters: vec![32, 16], ..EDA_AE_WIDTHS }
    }

    /// Same layer sequence and kernels with every filter count divided by
    /// `div` (at least one filter each).
    pub fn narrowed(&self, div: usize) -> Self {
        let d = |f: usize| (f / div.max(1)).max(1);
        Self {
            first_filters: d(self.first_filters),
            block_filters: self.block_filters.iter().map(|&f| d(f)).collect(),
            ..self.clone()
        }
    }
}

fn encoder_convs(w: &AeWidths) -> Vec<LayerSpec> {
    let mut l = vec![LayerSpec::conv(w.first_filters, w.first_kernel), LayerSpec::MaxPool1D { size: 2 }];
    for &f in &w.block_filters {
        l.push(LayerSpec::conv(f, w.block_kernels.0));
        l.push(LayerSpec::conv(f, w.block_kernels.1));
        l.push(LayerSpec::BatchNorm1D);
        l.push(LayerSpec::MaxPool1D { size: 2 });
    }
    l.push(LayerSpec::conv(1, w.bottleneck_kernel));
    l.push(LayerSpec::MaxPool1D { size: 2 });
    l
}

/// Encoder convolutions, an 80-unit L1-regularized dense latent, then the
/// mirrored decoder (upsampling and convolutions in reverse, no batch
/// norm) and a single-filter ReLU output convolution.
pub fn build_ae(input_len: usize, w: &AeWidths) -> NetworkSpec {
    let mut layers = encoder_convs(w);
    layers.push(LayerSpec::Dense {
        units: LATENT_DIM,
        activation: w.latent_activation,
        l1: w.latent_l1,
        l1_target: L1Target::Activity,
    });
    let tap = layers.len() - 1;
    layers.push(LayerSpec::Upsample1D { factor: 2 });
    layers.push(LayerSpec::conv(1, w.bottleneck_kernel));
    for &f in w.block_filters.iter().rev() {
        layers.push(LayerSpec::Upsample1D { factor: 2 });
        layers.push(LayerSpec::conv(f, w.block_kernels.1));
        layers.push(LayerSpec::conv(f, w.block_kernels.0));
    }
    layers.push(LayerSpec::Upsample1D { factor: 2 });
    layers.push(LayerSpec::conv(1, w.first_kernel));
    NetworkSpec { input_shape: Shape::new(input_len, 1), layers, latent_tap: Some(tap) }
}

pub fn build_ae_ecg() -> NetworkSpec {
    build_ae(ECG_WINDOW_LEN, &AeWidths::ecg())
}

pub fn build_ae_eda() -> NetworkSpec {
    build_ae(EDA_WINDOW_LEN, &AeWidths::eda())
}

/// Supervised CNN: the autoencoder's encoder convolutions, then dense
/// 80 (L1) / 40 / 20 with dropout between dense layers and a sigmoid unit.
pub fn build_cnn(input_len: usize, w: &AeWidths, dropout: f64) -> NetworkSpec {
    let mut layers = encoder_convs(w);
    layers.push(LayerSpec::Dense {
        units: LATENT_DIM,
        activation: Activation::Relu,
        l1: w.latent_l1,
        l1_target: L1Target::Activity,
    });
    for units in [40, 20] {
        layers.push(LayerSpec::Dropout { rate: dropout });
        layers.push(LayerSpec::dense(units, Activation::Relu));
    }
    layers.push(LayerSpec::Dropout { rate: dropout });
    // the last dropout's output is the representation used for fusion
    let tap = layers.len() - 1;
    layers.push(LayerSpec::dense(1, Activation::Sigmoid));
    NetworkSpec { input_shape: Shape::new(input_len, 1), layers, latent_tap: Some(tap) }
}

/// ReLU dense layers each followed by dropout, then one sigmoid unit.
pub fn build_mlp(input_dim: usize, hidden: &[usize], dropout: f64) -> NetworkSpec {
    let mut layers = Vec::new();
    for &h in hidden {
        layers.push(LayerSpec::dense(h, Activation::Relu));
        layers.push(LayerSpec::Dropout { rate: dropout });
    }
    layers.push(LayerSpec::dense(1, Activation::Sigmoid));
    NetworkSpec { input_shape: Shape::units(input_dim), layers, latent_tap: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Network, TensorBuf};

    fn lens(spec: &NetworkSpec) -> Vec<usize> {
        spec.shapes().unwrap().iter().map(|s| s.len).collect()
    }

    #[test]
    fn ecg_chain() {
        let s = build_ae_ecg();
        let shapes = s.shapes().unwrap();
        let tap = s.latent_tap.unwrap();
        assert_eq!(tap, 16);
        assert_eq!(shapes[tap + 1], Shape::units(80));
        assert_eq!(shapes[tap], Shape::new(80, 1));
        assert_eq!(*shapes.last().unwrap(), Shape::new(2560, 1));
        assert_eq!(s.layers.len() - tap - 1, 13);
        let l = lens(&s);
        for want in [2560, 1280, 640, 320, 160, 80] {
            assert!(l.contains(&want));
        }
    }

    #[test]
    fn eda_chain_and_forward() {
        let s = build_ae_eda();
        assert_eq!(s.latent_tap, Some(12));
        assert_eq!(s.output_shape().unwrap(), Shape::new(1280, 1));
        let net = Network::new(build_ae(1280, &AeWidths::eda().narrowed(8)), 1).unwrap();
        let x = TensorBuf::new(Shape::new(1280, 1), 2, (0..2560).map(|i| (i as f64 * 0.01).sin() * 0.5 + 0.5).collect()).unwrap();
        let y = net.predict(&x).unwrap();
        assert_eq!(y.shape, Shape::new(1280, 1));
        assert!(y.data.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_eq!(net.encode(&x.rows()).unwrap()[0].len(), 80);
    }

    #[test]
    fn cnn_conv_stack_reaches_80() {
        for (len, w) in [(2560, AeWidths::ecg()), (1280, AeWidths::eda())] {
            let s = build_cnn(len, &w, 0.5);
            let shapes = s.shapes().unwrap();
            let first_dense = s.layers.iter().position(|l| matches!(l, LayerSpec::Dense { .. })).unwrap();
            assert_eq!(shapes[first_dense].size(), 80);
            assert_eq!(s.output_shape().unwrap(), Shape::units(1));
        }
    }

    #[test]
    fn mlp_output_is_a_probability() {
        let net = Network::new(build_mlp(160, &[160, 80, 40, 40], 0.5), 2).unwrap();
        let x = TensorBuf::new(Shape::units(160), 1, (0..160).map(|i| i as f64 / 160.0).collect()).unwrap();
        let y = net.predict(&x).unwrap().data;
        assert_eq!(y.len(), 1);
        assert!(y[0] > 0.0 && y[0] < 1.0);
    }
}

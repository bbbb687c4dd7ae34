//! Decision-level fusion: a 2-input linear unit fitted in closed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::ArousalLabel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionFusionModel {
    pub weights: [f64; 2],
    pub bias: f64,
}

impl DecisionFusionModel {
    pub fn output(&self, p_ecg: f64, p_eda: f64) -> f64 {
        self.weights[0] * p_ecg + self.weights[1] * p_eda + self.bias
    }

    pub fn predict(&self, p_ecg: &[f64], p_eda: &[f64]) -> Vec<ArousalLabel> {
        p_ecg.iter().zip(p_eda).map(|(&a, &b)| ArousalLabel::from_bool(self.output(a, b) >= 0.5)).collect()
    }
}

/// Minimum-norm least squares of `y` on `[p_ecg, p_eda, 1]`.
pub fn decision_fusion_train(
    p_ecg: &[f64],
    p_eda: &[f64],
    y: &[ArousalLabel],
) -> Result<DecisionFusionModel, ModelError> {
    let n = y.len();
    if n == 0 || p_ecg.len() != n || p_eda.len() != n {
        return Err(ModelError::Invalid("probability and label lengths differ".into()));
    }
    if p_ecg.iter().chain(p_eda).any(|v| !v.is_finite()) {
        return Err(ModelError::Invalid("non-finite probability".into()));
    }
    let yv: Vec<f64> = y.iter().map(|l| l.as_f64()).collect();
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(p_ecg) && constant(p_eda) {
        log::warn!("decision fusion inputs are constant; using a bias-only model");
        return Ok(DecisionFusionModel { weights: [0.0, 0.0], bias: yv.iter().sum::<f64>() / n as f64 });
    }
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => p_ecg[i],
        1 => p_eda[i],
        _ => 1.0,
    });
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&DVector::from_vec(yv), 1e-12)
        .map_err(|e| ModelError::Invalid(format!("least squares failed: {e}")))?;
    Ok(DecisionFusionModel { weights: [sol[0], sol[1]], bias: sol[2] })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn acc(p: &[ArousalLabel], y: &[ArousalLabel]) -> f64 {
        p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn informative_stream_dominates_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<ArousalLabel> = (0..300).map(|i| ArousalLabel::from_bool(i % 2 == 0)).collect();
        let pe: Vec<f64> = y.iter().map(|l| if l.is_high() { 0.8 } else { 0.2 }).collect();
        let pd: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let m = decision_fusion_train(&pe, &pd, &y).unwrap();
        assert!(m.weights[0].abs() > 10.0 * m.weights[1].abs());
        let ecg_only: Vec<ArousalLabel> = pe.iter().map(|&p| ArousalLabel::from_bool(p >= 0.5)).collect();
        assert!(acc(&m.predict(&pe, &pd), &y) >= acc(&ecg_only, &y) - 0.01);
    }

    #[test]
    fn equal_streams_give_symmetric_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let y: Vec<ArousalLabel> = p.iter().map(|&v| ArousalLabel::from_bool(v + 0.2 * (rng.random::<f64>() - 0.5) > 0.5)).collect();
        let m = decision_fusion_train(&p, &p, &y).unwrap();
        assert!((m.weights[0] - m.weights[1]).abs() < 1e-9);
        // fused output is one affine map of p, so thresholding it is thresholding p
        let w = m.weights[0] + m.weights[1];
        assert!(w > 0.0);
        let cut = (0.5 - m.bias) / w;
        let single: Vec<ArousalLabel> = p.iter().map(|&v| ArousalLabel::from_bool(v >= cut)).collect();
        assert_eq!(m.predict(&p, &p), single);
    }

    #[test]
    fn rounded_ecg_stream_is_learned_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pe: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let pd: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let y: Vec<ArousalLabel> = pe.iter().map(|&v| ArousalLabel::from_bool(v.round() == 1.0)).collect();
        let pe_hard: Vec<f64> = y.iter().map(|l| l.as_f64()).collect();
        let m = decision_fusion_train(&pe_hard, &pd, &y).unwrap();
        assert_eq!(acc(&m.predict(&pe_hard, &pd), &y), 1.0);
    }

    #[test]
    fn constant_inputs_fall_back_to_bias() {
        let y = vec![ArousalLabel::High, ArousalLabel::Low, ArousalLabel::High, ArousalLabel::High];
        let m = decision_fusion_train(&[0.5; 4], &[0.5; 4], &y).unwrap();
        assert_eq!(m.weights, [0.0, 0.0]);
        assert_eq!(m.bias, 0.75);
    }
}

//! Modality fusion, classifiers, metrics and the cross-validation protocol.

mod fusion;
mod knn;
mod metrics;
mod protocol;
mod trees;

use thiserror::Error;

pub use fusion::{decision_fusion_train, DecisionFusionModel};
pub use knn::{knn_predict, knn_proba, KNN_K};
pub use metrics::{evaluate, write_predictions_csv, Confusion, DatasetMetrics, MetricsReport, Prediction};
pub use protocol::{
    classifier_proba, classify_fold, classify_prepared, fold_assignment, handcrafted_table, leakage_check, permuted_labels,
    prepare_fold_representation, run_protocol, run_protocols, run_protocols_with, Block, BlockSelection,
    ClassifierKind, CnnProba, FeatureMode, FoldHistory, FoldOutcome, FoldRepresentation, HandcraftedTable, Mode,
    ProtocolConfig, ProtocolRun, RepresentationKind,
};
pub use trees::{
    train_decision_tree, train_random_forest, ClassWeight, Criterion, DecisionTreeConfig, Forest, ForestConfig,
    MaxFeatures, MinSplit, NodeSubsample, Tree,
};

use crate::corpus::ArousalLabel;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{0}")]
    Invalid(String),
    #[error("training labels contain a single class")]
    SingleClass,
}

/// ECG block first, then EDA.
pub fn feature_fusion(ecg_latent: &[f64], eda_latent: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(ecg_latent.len() + eda_latent.len());
    v.extend_from_slice(ecg_latent);
    v.extend_from_slice(eda_latent);
    v
}

/// Shape and class checks shared by the classifiers.
pub(crate) fn check_xy(x: &[Vec<f64>], y: &[ArousalLabel]) -> Result<Vec<bool>, ModelError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(ModelError::Invalid(format!("{} rows vs {} labels", x.len(), y.len())));
    }
    let p = x[0].len();
    if p == 0 || x.iter().any(|r| r.len() != p) {
        return Err(ModelError::Invalid("feature rows must share a nonzero length".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::Invalid("non-finite feature value".into()));
    }
    let yb: Vec<bool> = y.iter().map(|l| l.is_high()).collect();
    if yb.iter().all(|&b| b) || yb.iter().all(|&b| !b) {
        return Err(ModelError::SingleClass);
    }
    Ok(yb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fusion_puts_ecg_first() {
        let f = feature_fusion(&[0.0; 80], &[1.0; 80]);
        assert_eq!(f.len(), 160);
        assert!(f[..80].iter().all(|&v| v == 0.0) && f[80..].iter().all(|&v| v == 1.0));
        let (a, b) = (vec![1.0, 2.0], vec![3.0]);
        assert_ne!(feature_fusion(&a, &b), feature_fusion(&b, &a));
    }
}

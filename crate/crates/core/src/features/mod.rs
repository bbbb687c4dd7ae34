//! Hand-crafted ECG (HRV) and EDA (SCR/SCL) features and LASSO selection.

mod ecg;
mod eda;
mod lasso;

use std::io::Write;

use thiserror::Error;

pub use ecg::{
    ecg_features, ecg_freq_features, ecg_time_features, rr_from_peaks, EcgFeatureVector, EcgFreqFeatures,
    EcgTimeFeatures, RrSeries, HF_BAND, LF_BAND, TOTAL_BAND, ULF_BAND, VLF_BAND,
};
pub use eda::{eda_features, eda_scr_events, ComponentStats, EdaFeatureVector, ScrConfig, ScrEvent};
pub use lasso::{
    default_lambda_grid, lasso_fit, lasso_select, LambdaRule, LassoConfig, LassoFit, SelectionResult, Standardizer,
    SELECTION_EPS,
};

use crate::corpus::WindowKey;
use crate::dsp::DspError;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("insufficient beats: {0} detected")]
    InsufficientBeats(usize),
    #[error("target holds a single class")]
    SingleClass,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Writes a feature matrix with a `key` column followed by `names`.
pub fn write_feature_csv<W: Write>(
    w: W,
    names: &[&str],
    rows: &[(WindowKey, Vec<f64>)],
) -> Result<(), FeatureError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["key"];
    header.extend_from_slice(names);
    wtr.write_record(&header)?;
    for (key, values) in rows {
        if values.len() != names.len() {
            return Err(FeatureError::Invalid(format!(
                "{key}: {} values for {} columns",
                values.len(),
                names.len()
            )));
        }
        let mut rec = vec![key.to_string()];
        rec.extend(values.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| FeatureError::Csv(e.into()))?;
    Ok(())
}

//! Inverse-distance weighted k-nearest neighbours, Euclidean metric.

use super::{check_xy, ModelError};
use crate::corpus::ArousalLabel;

pub const KNN_K: usize = 7;

/// Weighted HIGH fraction among the `k` nearest training rows. Any
/// zero-distance neighbour decides alone (several exact matches vote
/// evenly among themselves). Distance ties keep training order.
pub fn knn_proba(
    train_x: &[Vec<f64>],
    train_y: &[ArousalLabel],
    query: &[Vec<f64>],
    k: usize,
) -> Result<Vec<f64>, ModelError> {
    check_xy(train_x, train_y)?;
    if k == 0 {
        return Err(ModelError::Invalid("k must be >= 1".into()));
    }
    let p = train_x[0].len();
    let k = k.min(train_x.len());
    query
        .iter()
        .map(|q| {
            if q.len() != p {
                return Err(ModelError::Invalid(format!("query has {} features, expected {p}", q.len())));
            }
            let mut d: Vec<(f64, usize)> = train_x
                .iter()
                .enumerate()
                .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let near = &d[..k];
            let exact: Vec<usize> = near.iter().filter(|(dist, _)| *dist == 0.0).map(|&(_, i)| i).collect();
            if !exact.is_empty() {
                let hi = exact.iter().filter(|&&i| train_y[i].is_high()).count();
                return Ok(hi as f64 / exact.len() as f64);
            }
            let (mut wh, mut wt) = (0.0, 0.0);
            for &(dist, i) in near {
                let w = 1.0 / dist;
                wt += w;
                if train_y[i].is_high() {
                    wh += w;
                }
            }
            Ok(wh / wt)
        })
        .collect()
}

/// Labels from [`knn_proba`], ties to HIGH.
pub fn knn_predict(
    train_x: &[Vec<f64>],
    train_y: &[ArousalLabel],
    query: &[Vec<f64>],
    k: usize,
) -> Result<Vec<ArousalLabel>, ModelError> {
    Ok(knn_proba(train_x, train_y, query, k)?.into_iter().map(|p| ArousalLabel::from_bool(p >= 0.5)).collect())
}

//! L1-penalized least squares by cyclic coordinate descent, with
//! cross-validated penalty selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FeatureError;

/// Coefficients with magnitude above this count as selected.
pub const SELECTION_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// Grid value with the lowest mean validation MSE.
    MinMse,
    /// Largest grid value whose mean validation MSE is within one standard
    /// error of the minimum.
    OneStdErr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoConfig {
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub rule: LambdaRule,
    /// Score each grid value by an unpenalized least-squares refit on its
    /// support instead of the shrunken coefficients.
    pub relaxed: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            cv_folds: 5,
            tol: 1e-7,
            max_sweeps: 10_000,
            rule: LambdaRule::OneStdErr,
            relaxed: true,
        }
    }
}

/// 30 log-spaced values from 1e-4 to 1.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..30)
        .map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 29.0))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub coefficients: Vec<f64>,
    pub selected_mask: Vec<bool>,
    pub lambda: f64,
    pub intercept: f64,
    /// Mean validation MSE per grid value (grid order).
    pub cv_mse: Vec<f64>,
}

impl SelectionResult {
    pub fn selected(&self) -> Vec<usize> {
        self.selected_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
            .collect()
    }
}

/// Column-major design matrix with per-column centering applied.
struct Design {
    cols: Vec<Vec<f64>>,
    col_mean: Vec<f64>,
    sq_norm: Vec<f64>,
    active: Vec<bool>,
}

impl Design {
    fn new(rows: &[Vec<f64>], idx: &[usize]) -> Self {
        let p = rows.first().map_or(0, |r| r.len());
        let n = idx.len() as f64;
        let mut cols = vec![Vec::with_capacity(idx.len()); p];
        for &i in idx {
            for (j, c) in cols.iter_mut().enumerate() {
                c.push(rows[i][j]);
            }
        }
        let mut col_mean = vec![0.0; p];
        let mut sq_norm = vec![0.0; p];
        let mut active = vec![true; p];
        for (j, c) in cols.iter_mut().enumerate() {
            let m = c.iter().sum::<f64>() / n;
            c.iter_mut().for_each(|v| *v -= m);
            col_mean[j] = m;
            sq_norm[j] = c.iter().map(|v| v * v).sum::<f64>() / n;
            let spread = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if spread <= 1e-12 * m.abs().max(1.0) {
                active[j] = false;
            }
        }
        Self { cols, col_mean, sq_norm, active }
    }
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

fn check_shapes(x: &[Vec<f64>], y: &[f64]) -> Result<usize, FeatureError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(FeatureError::Invalid(format!(
            "design has {} rows but target has {}",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(FeatureError::Invalid("ragged design matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(FeatureError::Invalid("non-finite value in design or target".into()));
    }
    Ok(p)
}

/// Minimizes `(1/2n)·||y − b − Xw||² + λ·||w||₁` (unpenalized intercept).
fn coordinate_descent(
    d: &Design,
    y: &[f64],
    lambda: f64,
    warm: Option<&[f64]>,
    tol: f64,
    max_sweeps: usize,
) -> LassoFit {
    let p = d.cols.len();
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut w: Vec<f64> = warm.map_or_else(|| vec![0.0; p], |w| w.to_vec());
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    for (j, c) in d.cols.iter().enumerate() {
        if w[j] != 0.0 {
            for (r, x) in resid.iter_mut().zip(c) {
                *r -= w[j] * x;
            }
        }
    }
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            if !d.active[j] {
                w[j] = 0.0;
                continue;
            }
            let c = &d.cols[j];
            let rho = c.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n + d.sq_norm[j] * w[j];
            let new = soft_threshold(rho, lambda) / d.sq_norm[j];
            let delta = new - w[j];
            if delta != 0.0 {
                for (r, x) in resid.iter_mut().zip(c) {
                    *r -= delta * x;
                }
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol {
            break;
        }
    }
    let intercept = y_mean - w.iter().zip(&d.col_mean).map(|(a, m)| a * m).sum::<f64>();
    LassoFit { coefficients: w, intercept, sweeps }
}

/// Ordinary least squares restricted to the nonzero columns of `coef`
/// (minimum-norm solution if rank deficient).
fn refit_on_support(d: &Design, y: &[f64], coef: &[f64]) -> LassoFit {
    let support: Vec<usize> = (0..coef.len()).filter(|&j| coef[j] != 0.0).collect();
    let n = y.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut w = vec![0.0; coef.len()];
    if !support.is_empty() {
        let a = DMatrix::from_fn(n, support.len(), |i, j| d.cols[support[j]][i]);
        let b = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        if let Ok(sol) = a.svd(true, true).solve(&b, 1e-12) {
            for (j, &col) in support.iter().enumerate() {
                w[col] = sol[j];
            }
        }
    }
    let intercept = y_mean - w.iter().zip(&d.col_mean).map(|(a, m)| a * m).sum::<f64>();
    LassoFit { coefficients: w, intercept, sweeps: 0 }
}

/// Fits at a single penalty. Constant columns get a zero coefficient.
pub fn lasso_fit(x: &[Vec<f64>], y: &[f64], lambda: f64, tol: f64, max_sweeps: usize) -> Result<LassoFit, FeatureError> {
    check_shapes(x, y)?;
    if !(lambda >= 0.0) {
        return Err(FeatureError::Invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let idx: Vec<usize> = (0..x.len()).collect();
    let d = Design::new(x, &idx);
    Ok(coordinate_descent(&d, y, lambda, None, tol, max_sweeps))
}

/// Chooses the penalty by `cv_folds`-fold cross-validation (rows dealt
/// round-robin), then refits on all rows.
pub fn lasso_select(x: &[Vec<f64>], y: &[f64], cfg: &LassoConfig) -> Result<SelectionResult, FeatureError> {
    let p = check_shapes(x, y)?;
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        return Err(FeatureError::SingleClass);
    }
    if cfg.lambda_grid.is_empty() || cfg.lambda_grid.iter().any(|l| !(*l > 0.0)) {
        return Err(FeatureError::Invalid("lambda grid must hold positive values".into()));
    }
    let k = cfg.cv_folds.clamp(2, x.len());
    let n = x.len();

    let full = Design::new(x, &(0..n).collect::<Vec<_>>());
    for (j, a) in full.active.iter().enumerate() {
        if !a {
            log::warn!("dropping constant feature column {j}");
        }
    }

    // evaluate the grid from the largest penalty down, warm-starting
    let mut order: Vec<usize> = (0..cfg.lambda_grid.len()).collect();
    order.sort_by(|&a, &b| cfg.lambda_grid[b].total_cmp(&cfg.lambda_grid[a]));

    let mut fold_mse = vec![vec![0.0; k]; cfg.lambda_grid.len()];
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|i| i % k != f).collect();
        let val: Vec<usize> = (0..n).filter(|i| i % k == f).collect();
        let d = Design::new(x, &train);
        let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let mut warm: Option<Vec<f64>> = None;
        for &li in &order {
            let fit = coordinate_descent(&d, &ytr, cfg.lambda_grid[li], warm.as_deref(), cfg.tol, cfg.max_sweeps);
            let scored = if cfg.relaxed { refit_on_support(&d, &ytr, &fit.coefficients) } else { fit.clone() };
            let mse = val
                .iter()
                .map(|&i| {
                    let pred =
                        scored.intercept + x[i].iter().zip(&scored.coefficients).map(|(a, b)| a * b).sum::<f64>();
                    (y[i] - pred).powi(2)
                })
                .sum::<f64>()
                / val.len() as f64;
            fold_mse[li][f] = mse;
            warm = Some(fit.coefficients);
        }
    }
    let cv_mse: Vec<f64> = fold_mse.iter().map(|m| m.iter().sum::<f64>() / k as f64).collect();

    // ties resolve toward the larger penalty
    let best = order
        .iter()
        .copied()
        .min_by(|&a, &b| cv_mse[a].total_cmp(&cv_mse[b]))
        .expect("grid is nonempty");
    let chosen = match cfg.rule {
        LambdaRule::MinMse => best,
        LambdaRule::OneStdErr => {
            let m = &fold_mse[best];
            let mean = cv_mse[best];
            let sd = (m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt();
            let limit = mean + sd / (k as f64).sqrt();
            order
                .iter()
                .copied()
                .find(|&li| cv_mse[li] <= limit)
                .unwrap_or(best)
        }
    };
    let lambda = cfg.lambda_grid[chosen];
    let fit = coordinate_descent(&full, y, lambda, None, cfg.tol, cfg.max_sweeps);
    let selected_mask = fit.coefficients.iter().map(|c| c.abs() > SELECTION_EPS).collect();
    debug_assert_eq!(fit.coefficients.len(), p);
    Ok(SelectionResult { coefficients: fit.coefficients, selected_mask, lambda, intercept: fit.intercept, cv_mse })
}

/// Per-column mean and population SD, for z-scoring with training-set
/// statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let p = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; p];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut sd = vec![0.0; p];
        for r in rows {
            for ((s, v), m) in sd.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        sd.iter_mut().for_each(|s| *s = s.sqrt());
        Self { mean, sd }
    }

    /// Columns with zero spread map to 0.
    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                r.iter()
                    .zip(self.mean.iter().zip(&self.sd))
                    .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
                    .collect()
            })
            .collect()
    }
}

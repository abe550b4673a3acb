//! Predictor normalization, response scaling and the lasso noise estimate.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::FitConfig;
use crate::data::{ResponseTransform, TrainingData};
use crate::error::{Result, SbartError};

/// Per-column map from raw predictor values to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    /// Sorted distinct training values.
    pub values: Vec<f64>,
    /// Normalized average rank of each distinct value.
    pub ranks: Vec<f64>,
}

impl ColumnMap {
    pub fn is_constant(&self) -> bool {
        self.values.len() < 2
    }

    /// Interpolated empirical CDF, clamped to `[0, 1]` outside the training range.
    pub fn apply(&self, v: f64) -> f64 {
        if self.is_constant() {
            return 0.5;
        }
        let vals = &self.values;
        let k = vals.partition_point(|&u| u < v);
        if k == 0 {
            return 0.0;
        }
        if k == vals.len() {
            return 1.0;
        }
        if vals[k] == v {
            return self.ranks[k];
        }
        let (x0, x1) = (vals[k - 1], vals[k]);
        let (q0, q1) = (self.ranks[k - 1], self.ranks[k]);
        q0 + (q1 - q0) * (v - x0) / (x1 - x0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileMap {
    pub columns: Vec<ColumnMap>,
}

impl QuantileMap {
    pub fn num_predictors(&self) -> usize {
        self.columns.len()
    }

    /// Indices of columns that were constant in training.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&j| self.columns[j].is_constant()).collect()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.columns.len() {
            return Err(SbartError::data(format!(
                "expected {} predictors, got {}",
                self.columns.len(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SbartError::data("non-finite predictor value"));
        }
        Ok(Array2::from_shape_fn(x.dim(), |(i, j)| self.columns[j].apply(x[[i, j]])))
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.columns.len() {
            return Err(SbartError::data(format!(
                "expected {} predictors, got {}",
                self.columns.len(),
                row.len()
            )));
        }
        Ok(row.iter().zip(&self.columns).map(|(&v, c)| c.apply(v)).collect())
    }
}

/// Maps each column to `(rank - 1) / (n - 1)` with average ranks for ties.
/// Constant columns become 0.5 and are reported by
/// [`QuantileMap::constant_columns`].
pub fn quantile_normalize(x_raw: ArrayView2<'_, f64>) -> Result<(Array2<f64>, QuantileMap)> {
    let (n, p) = x_raw.dim();
    if n < 2 {
        return Err(SbartError::data(format!("need at least 2 rows, got {n}")));
    }
    if x_raw.iter().any(|v| !v.is_finite()) {
        return Err(SbartError::data("non-finite predictor value"));
    }
    let mut out = Array2::zeros((n, p));
    let mut columns = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = x_raw.column(j).to_vec();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let mut values = Vec::new();
        let mut ranks = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start;
            while end + 1 < n && col[order[end + 1]] == col[order[start]] {
                end += 1;
            }
            // 1-based ranks start+1 ..= end+1
            let avg = (start + end) as f64 / 2.0 + 1.0;
            let q = (avg - 1.0) / (n - 1) as f64;
            for &i in &order[start..=end] {
                out[[i, j]] = q;
            }
            values.push(col[order[start]]);
            ranks.push(q);
            start = end + 1;
        }
        if values.len() < 2 {
            log::warn!("predictor {j} is constant; mapped to 0.5");
            out.column_mut(j).fill(0.5);
        }
        columns.push(ColumnMap { values, ranks });
    }
    Ok((out, QuantileMap { columns }))
}

/// Affine map sending `(min, max)` of `y_raw` to `(-0.5, 0.5)`.
pub fn scale_response(y_raw: &[f64]) -> Result<(Vec<f64>, ResponseTransform)> {
    if y_raw.len() < 2 {
        return Err(SbartError::data("need at least 2 responses"));
    }
    if y_raw.iter().any(|v| !v.is_finite()) {
        return Err(SbartError::data("response has non-finite entries"));
    }
    let min = y_raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = y_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(SbartError::data("response is constant"));
    }
    let transform = ResponseTransform {
        scale: max - min,
        offset: 0.5 * (min + max),
    };
    Ok((y_raw.iter().map(|&y| transform.to_internal(y)).collect(), transform))
}

/// Normalizes predictors and scales the response in one step.
pub fn prepare(x_raw: ArrayView2<'_, f64>, y_raw: &[f64]) -> Result<(TrainingData, QuantileMap)> {
    if x_raw.nrows() != y_raw.len() {
        return Err(SbartError::data(format!(
            "x has {} rows but y has {} entries",
            x_raw.nrows(),
            y_raw.len()
        )));
    }
    let (x, map) = quantile_normalize(x_raw)?;
    let (y, transform) = scale_response(y_raw)?;
    Ok((TrainingData::new(x, y, transform)?, map))
}

const LASSO_PATH_LEN: usize = 50;
const LASSO_MIN_RATIO: f64 = 1e-3;
const LASSO_FOLDS: usize = 5;
const LASSO_TOL: f64 = 1e-7;
const LASSO_MAX_SWEEPS: usize = 100_000;

/// Predictors standardized to mean zero and unit (population) variance, and
/// the centred response.
#[derive(Clone, Debug)]
pub struct StandardizedDesign {
    /// Column-major, `n` rows per column; constant columns are dropped.
    columns: Vec<Vec<f64>>,
    /// Original index of each retained column.
    pub kept: Vec<usize>,
    pub y: Vec<f64>,
    pub y_mean: f64,
}

impl StandardizedDesign {
    pub fn new(x: ArrayView2<'_, f64>, y: &[f64]) -> Self {
        let n = x.nrows() as f64;
        let mut columns = Vec::new();
        let mut kept = Vec::new();
        for j in 0..x.ncols() {
            let col = x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var > 1e-14 {
                let sd = var.sqrt();
                columns.push(col.iter().map(|v| (v - mean) / sd).collect());
                kept.push(j);
            }
        }
        let y_mean = y.iter().sum::<f64>() / n;
        StandardizedDesign {
            columns,
            kept,
            y: y.iter().map(|v| v - y_mean).collect(),
            y_mean,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    /// Rows restricted to `rows`, without re-standardizing.
    fn subset(&self, rows: &[usize]) -> StandardizedDesign {
        StandardizedDesign {
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            kept: self.kept.clone(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            y_mean: self.y_mean,
        }
    }

    /// Smallest penalty with an all-zero solution: `max_j |x_j' y| / n`.
    pub fn lambda_max(&self) -> f64 {
        let n = self.n() as f64;
        self.columns
            .iter()
            .map(|c| dot(c, &self.y).abs() / n)
            .fold(0.0, f64::max)
    }

    /// `x_j' (y - X beta) / n` for every column.
    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let r = self.residuals(beta);
        let n = self.n() as f64;
        self.columns.iter().map(|c| dot(c, &r) / n).collect()
    }

    pub fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.y.clone();
        for (c, &b) in self.columns.iter().zip(beta) {
            if b != 0.0 {
                for (ri, ci) in r.iter_mut().zip(c) {
                    *ri -= b * ci;
                }
            }
        }
        r
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `(1/2n)||y - X beta||^2 + lambda ||beta||_1`
/// starting from `beta`. The loop stops once no coefficient moves by more than
/// `1e-7` in a sweep.
pub fn lasso_coordinate_descent(design: &StandardizedDesign, lambda: f64, beta: &mut [f64]) {
    let n = design.n() as f64;
    // column norms are n on the full data but not on CV subsets
    let norms: Vec<f64> = design.columns.iter().map(|c| dot(c, c) / n).collect();
    let mut r = design.residuals(beta);
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for (j, c) in design.columns.iter().enumerate() {
            if norms[j] <= 0.0 {
                continue;
            }
            let old = beta[j];
            let z = dot(c, &r) / n + norms[j] * old;
            let new = soft_threshold(z, lambda) / norms[j];
            if new != old {
                let d = new - old;
                for (ri, ci) in r.iter_mut().zip(c) {
                    *ri -= d * ci;
                }
                beta[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        if max_change < LASSO_TOL {
            return;
        }
    }
    log::warn!("lasso coordinate descent hit the sweep limit at lambda {lambda}");
}

/// Geometric path of `len` penalties from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_path(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|k| lambda_max * (step * k as f64).exp()).collect()
}

/// Result of the cross-validated lasso.
#[derive(Clone, Debug)]
pub struct LassoFit {
    pub lambda: f64,
    /// Coefficients on the standardized retained columns.
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub df: usize,
}

/// Lasso on standardized predictors with `lambda` chosen by 5-fold CV
/// (observation `i` in fold `i % 5`). Returns `None` for degenerate designs.
pub fn lasso_cv(x: ArrayView2<'_, f64>, y: &[f64]) -> Option<LassoFit> {
    let n = y.len();
    if n < 2 * LASSO_FOLDS || x.nrows() != n {
        return None;
    }
    let design = StandardizedDesign::new(x, y);
    let lambda_max = design.lambda_max();
    if design.p() == 0 || !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return None;
    }
    let path = lambda_path(lambda_max, LASSO_PATH_LEN, LASSO_MIN_RATIO);

    let mut cv_error = vec![0.0; path.len()];
    for fold in 0..LASSO_FOLDS {
        let train: Vec<usize> = (0..n).filter(|i| i % LASSO_FOLDS != fold).collect();
        let test: Vec<usize> = (0..n).filter(|i| i % LASSO_FOLDS == fold).collect();
        let sub = design.subset(&train);
        let train_mean = sub.y.iter().sum::<f64>() / sub.n() as f64;
        let centred = StandardizedDesign {
            y: sub.y.iter().map(|v| v - train_mean).collect(),
            ..sub
        };
        let mut beta = vec![0.0; design.p()];
        for (k, &lambda) in path.iter().enumerate() {
            lasso_coordinate_descent(&centred, lambda, &mut beta);
            for &i in &test {
                let pred: f64 = train_mean
                    + (0..design.p()).map(|j| design.column(j)[i] * beta[j]).sum::<f64>();
                cv_error[k] += (design.y[i] - pred).powi(2);
            }
        }
    }
    let best = (0..path.len()).min_by(|&a, &b| cv_error[a].total_cmp(&cv_error[b]))?;

    let mut beta = vec![0.0; design.p()];
    for &lambda in &path[..=best] {
        lasso_coordinate_descent(&design, lambda, &mut beta);
    }
    let rss: f64 = design.residuals(&beta).iter().map(|r| r * r).sum();
    let df = beta.iter().filter(|&&b| b != 0.0).count() + 1;
    let denom = n.saturating_sub(df).max(1) as f64;
    let sigma = (rss / denom).sqrt();
    sigma.is_finite().then_some(LassoFit {
        lambda: path[best],
        beta,
        sigma,
        df,
    })
}

/// Residual standard deviation of a cross-validated lasso fit, falling back
/// to the standard deviation of `y` when the lasso cannot be fitted.
pub fn estimate_sigma_lasso(x: ArrayView2<'_, f64>, y: &[f64]) -> f64 {
    match lasso_cv(x, y) {
        Some(fit) if fit.sigma > 0.0 => fit.sigma,
        _ => {
            let sd = sample_sd(y);
            log::warn!("lasso noise estimate unavailable; using sd(y) = {sd}");
            sd
        }
    }
}

fn sample_sd(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Half-Cauchy scale for `sigma` on the internal scale: the configured
/// override if any, otherwise the lasso estimate.
pub fn sigma_hat_for(data: &TrainingData, config: &FitConfig) -> f64 {
    match config.sigma_hat_override {
        Some(s) => s / data.transform.scale,
        None => estimate_sigma_lasso(data.x().view(), data.y()),
    }
}

//! Posterior summaries and cross-validation over the number of trees.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::FitConfig;
use crate::data::ResponseTransform;
use crate::error::{Result, SbartError};
use crate::gating::predict_tree_columns;
use crate::preprocess::{prepare, QuantileMap};
use crate::priors::GroupStructure;
use crate::sampler::run_chains;
use crate::trace::Trace;

/// A fitted model: the trace plus everything needed to predict on raw inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub config: FitConfig,
    pub quantile_map: QuantileMap,
    pub transform: ResponseTransform,
    pub groups: Option<GroupStructure>,
    /// Column names of the training predictors, `x1..xp` unless set.
    pub feature_names: Vec<String>,
    pub trace: Trace,
}

impl FittedModel {
    /// Preprocesses raw data and runs `chains` chains.
    pub fn fit(
        x_raw: ArrayView2<'_, f64>,
        y_raw: &[f64],
        config: &FitConfig,
        groups: Option<GroupStructure>,
        chains: usize,
    ) -> Result<FittedModel> {
        config.validate()?;
        let (mut data, quantile_map) = prepare(x_raw, y_raw)?;
        if let Some(g) = &groups {
            data = data.with_groups(g.clone())?;
        }
        let trace = run_chains(&data, config, chains)?;
        Ok(FittedModel {
            config: config.clone(),
            quantile_map,
            transform: data.transform,
            groups,
            feature_names: (1..=x_raw.ncols()).map(|j| format!("x{j}")).collect(),
            trace,
        })
    }

    pub fn num_predictors(&self) -> usize {
        self.quantile_map.num_predictors()
    }

    pub fn posterior_mean(&self, x_raw: ArrayView2<'_, f64>, threads: usize) -> Result<Vec<f64>> {
        posterior_mean(&self.trace, x_raw, &self.quantile_map, &self.transform, threads)
    }

    pub fn credible_interval(&self, x_raw: ArrayView2<'_, f64>, level: f64, threads: usize) -> Result<Vec<(f64, f64)>> {
        credible_interval(&self.trace, x_raw, &self.quantile_map, &self.transform, level, threads)
    }
}

fn column_vectors(x: &Array2<f64>) -> Vec<Vec<f64>> {
    (0..x.ncols()).map(|j| x.column(j).to_vec()).collect()
}

/// Internal-scale predictions of every draw at normalized inputs, as a
/// `draws x m` matrix. Work is split over at most `threads` threads.
pub fn draw_predictions(trace: &Trace, x: ArrayView2<'_, f64>, threads: usize) -> Result<Array2<f64>> {
    if trace.is_empty() {
        return Err(SbartError::data("trace is empty"));
    }
    let p = trace.draws[0].ensemble.num_predictors();
    if x.ncols() != p {
        return Err(SbartError::data(format!("model has {p} predictors, input has {}", x.ncols())));
    }
    let m = x.nrows();
    if m == 0 {
        return Ok(Array2::zeros((trace.len(), 0)));
    }
    let cols = column_vectors(&x.to_owned());
    let columns: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    let d = trace.len();
    let mut out = vec![0.0; d * m];
    let threads = threads.clamp(1, d);
    let per = d.div_ceil(threads);
    std::thread::scope(|scope| {
        for (chunk, rows) in out.chunks_mut(per * m).enumerate() {
            let columns = &columns;
            let draws = &trace.draws[chunk * per..];
            scope.spawn(move || {
                for (row, draw) in rows.chunks_mut(m).zip(draws) {
                    for tree in &draw.ensemble.trees {
                        for (o, v) in row.iter_mut().zip(predict_tree_columns(tree, columns, m)) {
                            *o += v;
                        }
                    }
                }
            });
        }
    });
    Ok(Array2::from_shape_vec((d, m), out).expect("shape"))
}

/// Pointwise posterior mean on the original response scale.
pub fn posterior_mean(
    trace: &Trace,
    x_raw: ArrayView2<'_, f64>,
    map: &QuantileMap,
    transform: &ResponseTransform,
    threads: usize,
) -> Result<Vec<f64>> {
    let x = map.transform(x_raw)?;
    let preds = draw_predictions(trace, x.view(), threads)?;
    let d = preds.nrows() as f64;
    Ok(preds
        .columns()
        .into_iter()
        .map(|c| transform.to_original(c.sum() / d))
        .collect())
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed pointwise credible interval on the original scale.
pub fn credible_interval(
    trace: &Trace,
    x_raw: ArrayView2<'_, f64>,
    map: &QuantileMap,
    transform: &ResponseTransform,
    level: f64,
    threads: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(SbartError::domain(format!("level must lie in (0, 1), got {level}")));
    }
    let x = map.transform(x_raw)?;
    let preds = draw_predictions(trace, x.view(), threads)?;
    Ok(interval_from_draws(&preds, level, transform))
}

pub(crate) fn interval_from_draws(preds: &Array2<f64>, level: f64, transform: &ResponseTransform) -> Vec<(f64, f64)> {
    let alpha = 1.0 - level;
    preds
        .columns()
        .into_iter()
        .map(|c| {
            let mut v = c.to_vec();
            v.sort_by(f64::total_cmp);
            let lo = transform.to_original(quantile_sorted(&v, alpha / 2.0));
            let hi = transform.to_original(quantile_sorted(&v, 1.0 - alpha / 2.0));
            (lo.min(hi), lo.max(hi))
        })
        .collect()
}

/// Fraction of draws in which each predictor is used by at least one split.
pub fn inclusion_probabilities(trace: &Trace) -> Vec<f64> {
    let p = trace.num_predictors();
    let mut hits = vec![0usize; p];
    for draw in &trace.draws {
        for (h, &c) in hits.iter_mut().zip(&draw.split_counts) {
            if c >= 1 {
                *h += 1;
            }
        }
    }
    let d = trace.len().max(1) as f64;
    hits.into_iter().map(|h| h as f64 / d).collect()
}

/// Predictors whose inclusion probability strictly exceeds `threshold`.
pub fn select_variables(trace: &Trace, threshold: f64) -> Vec<usize> {
    inclusion_probabilities(trace)
        .into_iter()
        .enumerate()
        .filter(|&(_, q)| q > threshold)
        .map(|(j, _)| j)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub num_trees: usize,
    pub fold: usize,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub chosen: usize,
    pub records: Vec<CvRecord>,
}

impl CvResult {
    /// Mean held-out RMSE for `num_trees`.
    pub fn mean_rmse(&self, num_trees: usize) -> f64 {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.num_trees == num_trees)
            .map(|r| r.rmse)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Writes `T,fold,rmse` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "T,fold,rmse")?;
        for r in &self.records {
            writeln!(out, "{},{},{}", r.num_trees, r.fold, r.rmse)?;
        }
        Ok(())
    }
}

/// Random fold labels for `n` rows: a seeded shuffle, then position modulo `k`.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// K-fold cross-validation of the number of trees. Preprocessing is refitted
/// on each training fold; ties in mean RMSE go to the smaller `T`.
pub fn cross_validate_trees(
    x_raw: ArrayView2<'_, f64>,
    y_raw: &[f64],
    config: &FitConfig,
    t_grid: &[usize],
    k: usize,
    groups: Option<&GroupStructure>,
) -> Result<CvResult> {
    let n = y_raw.len();
    if t_grid.is_empty() || t_grid.contains(&0) {
        return Err(SbartError::config("T grid must be nonempty and positive"));
    }
    if k < 2 || n < 2 * k {
        return Err(SbartError::data(format!("{n} rows are too few for {k} folds")));
    }
    if x_raw.nrows() != n {
        return Err(SbartError::data("x and y have different lengths"));
    }
    let fold = fold_assignment(n, k, config.seed);
    let mut records = Vec::new();
    for &t in t_grid {
        let cfg = FitConfig {
            num_trees: t,
            ..config.clone()
        };
        for f in 0..k {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            let x_train = x_raw.select(ndarray::Axis(0), &train);
            let y_train: Vec<f64> = train.iter().map(|&i| y_raw[i]).collect();
            let model = FittedModel::fit(x_train.view(), &y_train, &cfg, groups.cloned(), 1)?;
            let x_test = x_raw.select(ndarray::Axis(0), &test);
            let pred = model.posterior_mean(x_test.view(), 1)?;
            let mse = test
                .iter()
                .zip(&pred)
                .map(|(&i, p)| (y_raw[i] - p).powi(2))
                .sum::<f64>()
                / test.len() as f64;
            records.push(CvRecord {
                num_trees: t,
                fold: f,
                rmse: mse.sqrt(),
            });
            log::info!("cv T={t} fold={f} rmse={:.5}", mse.sqrt());
        }
    }
    let mut result = CvResult { chosen: 0, records };
    let mut sorted = t_grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best = f64::INFINITY;
    for &t in &sorted {
        let e = result.mean_rmse(t);
        if e < best {
            best = e;
            result.chosen = t;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Ensemble;
    use crate::trace::PosteriorDraw;
    use crate::tree::SoftTree;
    use ndarray::array;

    fn constant_draw(value: f64, p: usize) -> PosteriorDraw {
        let mut e = Ensemble::initial(1, p, 0.1, 1.0, 0.25, 1.0);
        e.trees[0].set_leaf_values(&[value]).unwrap();
        PosteriorDraw::new(e, 0.0)
    }

    fn trace_of(draws: Vec<PosteriorDraw>) -> Trace {
        Trace {
            draws,
            ..Trace::default()
        }
    }

    fn identity_map(p: usize) -> QuantileMap {
        let (_, map) = crate::preprocess::quantile_normalize(Array2::from_shape_fn((2, p), |(i, _)| i as f64).view()).unwrap();
        map
    }

    #[test]
    fn mean_of_two_draws() {
        let trace = trace_of(vec![constant_draw(0.0, 1), constant_draw(1.0, 1)]);
        let m = posterior_mean(&trace, array![[0.3]].view(), &identity_map(1), &ResponseTransform::identity(), 1).unwrap();
        assert_eq!(m, vec![0.5]);
    }

    #[test]
    fn mean_is_order_invariant_and_threading_agnostic() {
        let draws: Vec<_> = (0..7).map(|k| constant_draw(k as f64 * 0.1, 2)).collect();
        let mut rev = draws.clone();
        rev.reverse();
        let x = array![[0.1, 0.2], [0.9, 0.4]];
        let map = identity_map(2);
        let t = ResponseTransform::identity();
        let a = posterior_mean(&trace_of(draws), x.view(), &map, &t, 1).unwrap();
        let b = posterior_mean(&trace_of(rev), x.view(), &map, &t, 3).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolated_interval() {
        let draws: Vec<_> = (1..=100).map(|k| constant_draw(k as f64, 1)).collect();
        let trace = trace_of(draws);
        let ci = credible_interval(&trace, array![[0.5]].view(), &identity_map(1), &ResponseTransform::identity(), 0.9, 2).unwrap();
        assert!((ci[0].0 - 5.95).abs() < 1e-9);
        assert!((ci[0].1 - 95.05).abs() < 1e-9);
        assert!(credible_interval(&trace, array![[0.5]].view(), &identity_map(1), &ResponseTransform::identity(), 1.0, 1).is_err());
    }

    #[test]
    fn inclusion_counting() {
        let mut draws = Vec::new();
        for k in 0..4 {
            let mut e = Ensemble::initial(1, 3, 0.1, 1.0, 0.25, 1.0);
            if k < 3 {
                e.trees[0] = SoftTree::stump(2, 0.5, 0.0, 0.0, 0.1);
            }
            draws.push(PosteriorDraw::new(e, 0.0));
        }
        let trace = trace_of(draws);
        assert_eq!(inclusion_probabilities(&trace), vec![0.0, 0.0, 0.75]);
        assert_eq!(select_variables(&trace, 0.5), vec![2]);
        assert_eq!(select_variables(&trace, 0.75), Vec::<usize>::new());
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let a = fold_assignment(23, 5, 9);
        assert_eq!(a, fold_assignment(23, 5, 9));
        for f in 0..5 {
            let c = a.iter().filter(|&&x| x == f).count();
            assert!(c == 4 || c == 5);
        }
    }

    #[test]
    fn cv_rejects_tiny_folds() {
        let x = Array2::from_shape_fn((6, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..6).map(|i| i as f64).collect();
        assert!(cross_validate_trees(x.view(), &y, &FitConfig::default(), &[5], 5, None).is_err());
    }
}

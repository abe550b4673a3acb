//! Gaussian likelihood for one tree with its leaf values integrated out.
//!
//! With weights `Phi` (n x L), leaf prior `mu ~ N(0, v I)` where
//! `v = sigma_mu^2 / T`, and the likelihood raised to the power `eta`, the
//! leaf precision is `Lambda = (eta / sigma^2) Phi'Phi + I / v` and all the
//! work happens in the L-dimensional leaf space.

use ndarray::ArrayView2;
use rand::Rng;

use crate::data::TrainingData;
use crate::ensemble::Ensemble;
use crate::error::{Result, SbartError};
use crate::gating::{predict_ensemble, weight_matrix};
use crate::random::standard_normal;
use crate::tree::SoftTree;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Scale parameters entering the marginal likelihood of a tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub sigma_mu: f64,
    pub num_trees: usize,
    pub eta: f64,
}

impl NoiseModel {
    pub fn leaf_variance(&self) -> f64 {
        self.sigma_mu * self.sigma_mu / self.num_trees as f64
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma_mu > 0.0 && self.num_trees > 0) {
            return Err(SbartError::domain("sigma, sigma_mu and T must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(SbartError::domain(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        Ok(())
    }
}

/// Sufficient statistics of the residuals with respect to a weight matrix.
#[derive(Clone, Debug)]
pub(crate) struct LeafStats {
    /// `Phi'Phi`, row-major L x L.
    gram: Vec<f64>,
    /// `Phi'r`.
    proj: Vec<f64>,
    rtr: f64,
    n: usize,
    leaves: usize,
}

impl LeafStats {
    /// `weights` is column-major (leaf by leaf) as produced by the gating module.
    pub(crate) fn new(weights: &[f64], residuals: &[f64], leaves: usize) -> Self {
        let n = residuals.len();
        let mut gram = vec![0.0; leaves * leaves];
        let mut proj = vec![0.0; leaves];
        for a in 0..leaves {
            let ca = &weights[a * n..(a + 1) * n];
            proj[a] = dot(ca, residuals);
            for b in 0..=a {
                let cb = &weights[b * n..(b + 1) * n];
                let v = dot(ca, cb);
                gram[a * leaves + b] = v;
                gram[b * leaves + a] = v;
            }
        }
        LeafStats {
            gram,
            proj,
            rtr: dot(residuals, residuals),
            n,
            leaves,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conditional posterior of a tree's leaf values.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafPosterior {
    mean: Vec<f64>,
    /// Lower-triangular Cholesky factor of the precision, row-major.
    factor: Vec<f64>,
    dim: usize,
}

impl LeafPosterior {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Factor entry `(i, k)`, zero above the diagonal.
    pub fn factor(&self, i: usize, k: usize) -> f64 {
        self.factor[i * self.dim + k]
    }

    /// Precision matrix rebuilt from the factor.
    pub fn precision(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                out[i * d + k] = (0..=i.min(k)).map(|m| self.factor(i, m) * self.factor(k, m)).sum();
            }
        }
        out
    }

    /// Log density of `mu` under this Gaussian.
    pub fn log_density(&self, mu: &[f64]) -> f64 {
        let d = self.dim;
        // ||L' (mu - mean)||^2
        let mut quad = 0.0;
        for k in 0..d {
            let v: f64 = (k..d).map(|i| self.factor(i, k) * (mu[i] - self.mean[i])).sum();
            quad += v * v;
        }
        let log_det: f64 = (0..d).map(|i| self.factor(i, i).ln()).sum();
        -0.5 * d as f64 * LN_2PI + log_det - 0.5 * quad
    }
}

/// Result of the leaf-space computation: marginal and the posterior pieces.
pub(crate) struct Marginal {
    pub log_marginal: f64,
    factor: Vec<f64>,
    /// `L^{-1} b`, the whitened projection.
    whitened: Vec<f64>,
    leaves: usize,
}

impl Marginal {
    pub(crate) fn posterior(&self) -> LeafPosterior {
        let mean = back_substitute(&self.factor, &self.whitened, self.leaves);
        LeafPosterior {
            mean,
            factor: self.factor.clone(),
            dim: self.leaves,
        }
    }
}

pub(crate) fn marginal_from_stats(stats: &LeafStats, noise: &NoiseModel) -> Result<Marginal> {
    let l = stats.leaves;
    let s2 = noise.sigma * noise.sigma;
    let v = noise.leaf_variance();
    let w = noise.eta / s2;
    let mut precision: Vec<f64> = stats.gram.iter().map(|g| g * w).collect();
    for i in 0..l {
        precision[i * l + i] += 1.0 / v;
    }
    let factor = cholesky_with_jitter(&precision, l)?;
    let b: Vec<f64> = stats.proj.iter().map(|p| p * w).collect();
    let whitened = forward_substitute(&factor, &b, l);
    let log_det_lambda: f64 = 2.0 * (0..l).map(|i| factor[i * l + i].ln()).sum::<f64>();
    let log_marginal = -0.5 * noise.eta * stats.n as f64 * (LN_2PI + s2.ln()) - 0.5 * w * stats.rtr
        - 0.5 * (l as f64 * v.ln() + log_det_lambda)
        + 0.5 * dot(&whitened, &whitened);
    Ok(Marginal {
        log_marginal,
        factor,
        whitened,
        leaves: l,
    })
}

/// Cholesky of a small SPD matrix; retries once with `1e-12 * trace` jitter.
fn cholesky_with_jitter(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if let Some(f) = cholesky(a, n) {
        return Ok(f);
    }
    let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
    let mut jittered = a.to_vec();
    for i in 0..n {
        jittered[i * n + i] += 1e-12 * trace;
    }
    cholesky(&jittered, n).ok_or_else(|| {
        SbartError::Factorization(format!("leaf precision ({n} x {n}) is not positive definite"))
    })
}

fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..=i {
            let mut sum = a[i * n + k];
            for m in 0..k {
                sum -= l[i * n + m] * l[k * n + m];
            }
            if i == k {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + k] = sum / l[k * n + k];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b`.
fn forward_substitute(l: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

/// Solves `L' x = b`.
fn back_substitute(l: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

fn stats_for(tree: &SoftTree, residuals: &[f64], x: ArrayView2<'_, f64>) -> Result<LeafStats> {
    if residuals.len() != x.nrows() {
        return Err(SbartError::data(format!(
            "{} residuals for {} rows",
            residuals.len(),
            x.nrows()
        )));
    }
    let w = weight_matrix(tree, x)?;
    let values = w.values();
    let flat = values.as_slice_memory_order().expect("contiguous weights");
    Ok(LeafStats::new(flat, residuals, w.num_leaves()))
}

/// Log of the tempered likelihood of `residuals` with the tree's leaf values
/// integrated over their Gaussian prior.
pub fn log_marginal(tree: &SoftTree, residuals: &[f64], x: ArrayView2<'_, f64>, noise: &NoiseModel) -> Result<f64> {
    noise.check()?;
    let stats = stats_for(tree, residuals, x)?;
    Ok(marginal_from_stats(&stats, noise)?.log_marginal)
}

/// Conditional posterior of the leaf values given the residuals.
pub fn leaf_posterior(
    tree: &SoftTree,
    residuals: &[f64],
    x: ArrayView2<'_, f64>,
    noise: &NoiseModel,
) -> Result<LeafPosterior> {
    noise.check()?;
    let stats = stats_for(tree, residuals, x)?;
    Ok(marginal_from_stats(&stats, noise)?.posterior())
}

/// `mean + L'^{-1} z` with `z` standard normal.
pub fn sample_leaves<R: Rng + ?Sized>(posterior: &LeafPosterior, rng: &mut R) -> Vec<f64> {
    let d = posterior.dim;
    let z: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
    let noise = back_substitute(&posterior.factor, &z, d);
    posterior.mean.iter().zip(noise).map(|(m, e)| m + e).collect()
}

/// `eta * sum_i log N(y_i | f(x_i), sigma^2)` on the internal scale.
pub fn log_full_likelihood(ensemble: &Ensemble, data: &TrainingData, eta: f64) -> Result<f64> {
    let mut ssr = 0.0;
    for (i, &y) in data.y().iter().enumerate() {
        let row: Vec<f64> = data.x().row(i).to_vec();
        let f = predict_ensemble(ensemble, &row)?;
        ssr += (y - f) * (y - f);
    }
    Ok(gaussian_log_likelihood(ssr, data.n(), ensemble.sigma, eta))
}

pub(crate) fn gaussian_log_likelihood(ssr: f64, n: usize, sigma: f64, eta: f64) -> f64 {
    let s2 = sigma * sigma;
    eta * (-0.5 * n as f64 * (LN_2PI + s2.ln()) - 0.5 * ssr / s2)
}

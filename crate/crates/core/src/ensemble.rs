use serde::{Deserialize, Serialize};

use crate::error::{Result, SbartError};
use crate::priors::{grouped_log_s, GroupStructure};
use crate::random::log_sum_exp;
use crate::tree::SoftTree;

/// The sum-of-trees model together with its shared parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trees: Vec<SoftTree>,
    s: Vec<f64>,
    log_s: Vec<f64>,
    /// Noise standard deviation, internal response scale.
    pub sigma: f64,
    pub sigma_mu: f64,
    /// Dirichlet concentration mass.
    pub a: f64,
    /// Group-level splitting proportions when the grouping prior is active.
    pub group_u: Option<Vec<f64>>,
    group_log_u: Option<Vec<f64>>,
}

impl Ensemble {
    /// `num_trees` root-only trees, uniform splitting proportions.
    pub fn initial(num_trees: usize, p: usize, bandwidth: f64, sigma: f64, sigma_mu: f64, a: f64) -> Self {
        let log_s = vec![-(p as f64).ln(); p];
        Ensemble {
            trees: vec![SoftTree::root(bandwidth); num_trees],
            s: vec![1.0 / p as f64; p],
            log_s,
            sigma,
            sigma_mu,
            a,
            group_u: None,
            group_log_u: None,
        }
    }

    /// Reassembles a stored ensemble without renormalizing anything.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        trees: Vec<SoftTree>,
        s: Vec<f64>,
        log_s: Vec<f64>,
        sigma: f64,
        sigma_mu: f64,
        a: f64,
        group_u: Option<Vec<f64>>,
        group_log_u: Option<Vec<f64>>,
    ) -> Result<Self> {
        let e = Ensemble {
            trees,
            s,
            log_s,
            sigma,
            sigma_mu,
            a,
            group_u,
            group_log_u,
        };
        if e.log_s.len() != e.s.len() {
            return Err(SbartError::structure("s and log s differ in length"));
        }
        e.validate()?;
        Ok(e)
    }

    pub fn num_predictors(&self) -> usize {
        self.s.len()
    }

    /// Splitting proportions over predictors.
    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// Logs of the splitting proportions. Kept separately because Dirichlet
    /// draws with tiny concentrations underflow in linear scale.
    pub fn log_s(&self) -> &[f64] {
        &self.log_s
    }

    /// Sets the splitting proportions from unnormalized log weights.
    pub fn set_log_weights(&mut self, log_w: &[f64]) {
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + log_w.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        self.log_s = log_w.iter().map(|&l| l - lse).collect();
        self.s = self.log_s.iter().map(|&l| l.exp()).collect();
        let total: f64 = self.s.iter().sum();
        for v in &mut self.s {
            *v /= total;
        }
    }

    /// Sets group proportions from `log u` and the implied predictor-level `s`.
    pub fn set_group_log_weights(&mut self, log_u: &[f64], groups: &GroupStructure) {
        let lse = log_sum_exp(log_u);
        let log_u: Vec<f64> = log_u.iter().map(|&l| l - lse).collect();
        self.set_log_weights(&grouped_log_s(&log_u, groups));
        let u: Vec<f64> = log_u.iter().map(|&l| l.exp()).collect();
        let total: f64 = u.iter().sum();
        self.group_u = Some(u.into_iter().map(|v| v / total).collect());
        self.group_log_u = Some(log_u);
    }

    pub fn group_log_u(&self) -> Option<&[f64]> {
        self.group_log_u.as_deref()
    }

    pub fn set_s(&mut self, s: &[f64]) {
        let log_w: Vec<f64> = s.iter().map(|&v| v.ln()).collect();
        self.set_log_weights(&log_w);
    }

    pub fn total_branches(&self) -> usize {
        self.trees.iter().map(|t| t.branch_count()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.s.len();
        for t in &self.trees {
            t.validate(p)?;
        }
        check_simplex(&self.s, "s")?;
        if let Some(u) = &self.group_u {
            check_simplex(u, "group_u")?;
        }
        for (name, v) in [("sigma", self.sigma), ("sigma_mu", self.sigma_mu), ("a", self.a)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SbartError::domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn check_simplex(v: &[f64], name: &str) -> Result<()> {
    if v.iter().any(|&x| !(x >= 0.0)) {
        return Err(SbartError::domain(format!("{name} has a negative entry")));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(SbartError::domain(format!("{name} sums to {total}")));
    }
    Ok(())
}

/// Number of branches splitting on each predictor, over all trees.
pub fn total_split_counts(ensemble: &Ensemble) -> Vec<usize> {
    let mut counts = vec![0; ensemble.num_predictors()];
    for t in &ensemble.trees {
        t.accumulate_split_counts(&mut counts);
    }
    counts
}

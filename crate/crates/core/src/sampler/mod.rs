//! Bayesian backfitting: each sweep updates every tree against the partial
//! residuals of the others, then the shared parameters.

mod hyper;
mod moves;
mod slice;

pub use hyper::{gibbs_update_grouped, gibbs_update_s, update_a, update_sigma, update_sigma_mu};
pub use moves::{metropolis_accept, propose_tree_move, MoveKind, Proposal, TreeContext};
pub use slice::{slice_sample, SliceTuning};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::FitConfig;
use crate::data::TrainingData;
use crate::ensemble::Ensemble;
use crate::error::{Result, SbartError};
use crate::gating::{weights_from_columns, Logistic};
use crate::likelihood::{gaussian_log_likelihood, marginal_from_stats, sample_leaves, LeafStats, Marginal, NoiseModel};
use crate::preprocess::sigma_hat_for;
use crate::priors::{log_prior_bandwidth, CutpointRule, TreePrior};
use crate::random::standard_normal;
use crate::trace::{ChainDiagnostics, PosteriorDraw, Trace};
use crate::tree::SoftTree;

/// Residuals are recomputed from scratch this often to bound drift.
pub const RESIDUAL_REFRESH: u64 = 100;

/// Switches used mostly by tests: which blocks of the sweep run, and whether
/// the likelihood is replaced by a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerOptions {
    /// Replace the likelihood by a constant, so the chain targets the prior.
    pub prior_only: bool,
    pub cutpoints: CutpointRule,
    pub max_leaves: Option<usize>,
    pub update_trees: bool,
    pub update_bandwidth: bool,
    pub update_leaves: bool,
    pub update_s: bool,
    pub update_sigma: bool,
    pub update_sigma_mu: bool,
    pub update_a: bool,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            prior_only: false,
            cutpoints: CutpointRule::Continuous,
            max_leaves: None,
            update_trees: true,
            update_bandwidth: true,
            update_leaves: true,
            update_s: true,
            update_sigma: true,
            update_sigma_mu: true,
            update_a: true,
        }
    }
}

impl SamplerOptions {
    /// Trees only: bandwidth, `s`, `sigma`, `sigma_mu` and `a` held fixed.
    pub fn trees_only() -> Self {
        SamplerOptions {
            update_bandwidth: false,
            update_s: false,
            update_sigma: false,
            update_sigma_mu: false,
            update_a: false,
            ..SamplerOptions::default()
        }
    }
}

/// The state carried between sweeps.
#[derive(Clone, Debug)]
pub struct SamplerState {
    pub ensemble: Ensemble,
    /// `y - f(x)` for the full ensemble.
    residuals: Vec<f64>,
    /// Per-tree fitted values at the training rows.
    fits: Vec<Vec<f64>>,
    pub rng: ChaCha8Rng,
    pub iteration: u64,
    /// Scale of the half-Cauchy prior on `sigma`.
    pub sigma_hat: f64,
    pub diagnostics: ChainDiagnostics,
}

impl SamplerState {
    /// Builds a state around an arbitrary ensemble, computing fits and residuals.
    pub fn new(ensemble: Ensemble, data: &TrainingData, sigma_hat: f64, rng: ChaCha8Rng) -> Result<Self> {
        if ensemble.num_predictors() != data.p() {
            return Err(SbartError::data(format!(
                "ensemble has {} predictors, data has {}",
                ensemble.num_predictors(),
                data.p()
            )));
        }
        ensemble.validate()?;
        let mut state = SamplerState {
            ensemble,
            residuals: Vec::new(),
            fits: Vec::new(),
            rng,
            iteration: 0,
            sigma_hat,
            diagnostics: ChainDiagnostics::default(),
        };
        state.refresh(data);
        Ok(state)
    }

    /// Default starting point: root-only trees with zero leaves, uniform `s`,
    /// `sigma = sigma_hat`, `sigma_mu` at its prior scale, `a = p / 4`, and
    /// every bandwidth at the prior mean.
    pub fn initial(data: &TrainingData, config: &FitConfig, sigma_hat: f64, rng: ChaCha8Rng) -> Result<Self> {
        let p = data.p();
        let mut ensemble = Ensemble::initial(
            config.num_trees,
            p,
            config.bandwidth_rate,
            sigma_hat,
            config.sigma_mu_scale,
            p as f64 / 4.0,
        );
        if let Some(groups) = &data.groups {
            let m = groups.num_groups();
            ensemble.set_group_log_weights(&vec![0.0; m], groups);
        }
        SamplerState::new(ensemble, data, sigma_hat, rng)
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Recomputes every tree's fit and the residuals from scratch.
    pub fn refresh(&mut self, data: &TrainingData) {
        let columns = columns(data);
        let n = data.n();
        self.fits = self
            .ensemble
            .trees
            .iter()
            .map(|t| crate::gating::predict_tree_columns(t, &columns, n))
            .collect();
        self.residuals = data.y().to_vec();
        for fit in &self.fits {
            for (r, f) in self.residuals.iter_mut().zip(fit) {
                *r -= f;
            }
        }
    }

    fn ssr(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }

    /// Untempered Gaussian log likelihood of the current fit.
    pub fn log_likelihood(&self) -> f64 {
        gaussian_log_likelihood(self.ssr(), self.residuals.len(), self.ensemble.sigma, 1.0)
    }
}

fn columns(data: &TrainingData) -> Vec<&[f64]> {
    (0..data.p()).map(|j| data.column(j)).collect()
}

/// RNG for chain `chain` of a run seeded with `seed`: ChaCha8 seeded from the
/// 64-bit seed, with the chain index as its stream number.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Runs sweeps over a fixed data set and configuration.
pub struct Sampler<'a> {
    data: &'a TrainingData,
    config: &'a FitConfig,
    options: SamplerOptions,
    prior: TreePrior,
    columns: Vec<&'a [f64]>,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a TrainingData, config: &'a FitConfig, options: SamplerOptions) -> Result<Self> {
        config.validate()?;
        Ok(Sampler {
            data,
            config,
            options,
            prior: TreePrior {
                gamma: config.gamma,
                beta: config.beta,
            },
            columns: columns(data),
        })
    }

    pub fn options(&self) -> &SamplerOptions {
        &self.options
    }

    fn noise(&self, ensemble: &Ensemble) -> NoiseModel {
        NoiseModel {
            sigma: ensemble.sigma,
            sigma_mu: ensemble.sigma_mu,
            num_trees: ensemble.trees.len(),
            eta: self.config.eta,
        }
    }

    fn weights(&self, tree: &SoftTree) -> Vec<f64> {
        weights_from_columns(&Logistic, tree, &self.columns, self.data.n(), tree.bandwidth())
    }

    fn marginal(&self, weights: &[f64], residuals: &[f64], leaves: usize, noise: &NoiseModel) -> Result<Marginal> {
        marginal_from_stats(&LeafStats::new(weights, residuals, leaves), noise)
    }

    /// One full sweep: every tree in turn, then `s`, `sigma`, `sigma_mu`, `a`.
    pub fn sweep(&self, state: &mut SamplerState) -> Result<()> {
        for t in 0..state.ensemble.trees.len() {
            if self.options.prior_only {
                self.update_tree_prior_only(state, t);
            } else {
                self.update_tree(state, t)?;
            }
        }
        self.update_shared(state);
        state.iteration += 1;
        if !self.options.prior_only && state.iteration % RESIDUAL_REFRESH == 0 {
            state.refresh(self.data);
        }
        log::trace!(
            "sweep {} tree_acc {:.3} bw_acc {:.3} sigma {:.5} loglik {:.3}",
            state.iteration,
            state.diagnostics.tree_acceptance(),
            state.diagnostics.bandwidth_acceptance(),
            state.ensemble.sigma,
            state.log_likelihood()
        );
        Ok(())
    }

    fn update_shared(&self, state: &mut SamplerState) {
        let o = &self.options;
        let rng = &mut state.rng;
        let e = &mut state.ensemble;
        if o.update_s {
            match &self.data.groups {
                Some(groups) => gibbs_update_grouped(e, groups, rng),
                None => gibbs_update_s(e, self.config.xi, rng),
            }
        }
        if o.update_sigma {
            let likelihood = if o.prior_only {
                None
            } else {
                let ssr = state.residuals.iter().map(|r| r * r).sum();
                Some((ssr, self.data.n(), self.config.eta))
            };
            update_sigma(e, likelihood, state.sigma_hat, rng);
        }
        if o.update_sigma_mu {
            update_sigma_mu(e, self.config.sigma_mu_scale, rng);
        }
        if o.update_a {
            update_a(e, self.config.xi, rng);
        }
    }

    fn tree_context<'b>(&'b self, ensemble: &'b Ensemble) -> TreeContext<'b> {
        TreeContext {
            prior: &self.prior,
            s: ensemble.s(),
            log_s: ensemble.log_s(),
            cutpoints: &self.options.cutpoints,
            max_leaves: self.options.max_leaves,
            move_probs: &self.config.move_probs,
        }
    }

    /// Partial residuals, tree move, bandwidth move, and leaf draw for tree `t`.
    pub fn update_tree(&self, state: &mut SamplerState, t: usize) -> Result<()> {
        let n = self.data.n();
        let partial: Vec<f64> = state.residuals.iter().zip(&state.fits[t]).map(|(r, f)| r + f).collect();
        let noise = self.noise(&state.ensemble);
        let mut tree = state.ensemble.trees[t].clone();
        let mut weights = self.weights(&tree);
        let mut marginal = self.marginal(&weights, &partial, tree.leaf_count(), &noise)?;

        if self.options.update_trees {
            let kind = MoveKind::sample(&self.config.move_probs, &mut state.rng);
            let ctx = self.tree_context(&state.ensemble);
            let proposal = propose_tree_move(&tree, kind, &ctx, &mut state.rng);
            let mut accepted = false;
            if let Some(prop) = proposal {
                if prop.log_prior_ratio > f64::NEG_INFINITY {
                    let w_new = self.weights(&prop.tree);
                    let m_new = self.marginal(&w_new, &partial, prop.tree.leaf_count(), &noise)?;
                    let log_alpha = prop.log_acceptance(marginal.log_marginal, m_new.log_marginal);
                    if metropolis_accept(log_alpha, &mut state.rng) {
                        tree = prop.tree;
                        weights = w_new;
                        marginal = m_new;
                        accepted = true;
                    }
                }
            }
            record_tree_move(&mut state.diagnostics, kind, accepted);
        }

        if self.options.update_bandwidth {
            let tau = tree.bandwidth();
            let tau_new = tau * (self.config.bandwidth_step * standard_normal(&mut state.rng)).exp();
            let mut candidate = tree.clone();
            candidate.set_bandwidth(tau_new);
            let w_new = self.weights(&candidate);
            let m_new = self.marginal(&w_new, &partial, candidate.leaf_count(), &noise)?;
            let log_alpha = m_new.log_marginal - marginal.log_marginal
                + self.bandwidth_log_prior_ratio(tau, tau_new);
            state.diagnostics.bandwidth_proposals += 1;
            if metropolis_accept(log_alpha, &mut state.rng) {
                tree = candidate;
                weights = w_new;
                marginal = m_new;
                state.diagnostics.bandwidth_accepts += 1;
            }
        }

        if self.options.update_leaves {
            let mu = sample_leaves(&marginal.posterior(), &mut state.rng);
            tree.set_leaf_values(&mu)?;
        }

        let mu = tree.leaf_values();
        let fit = &mut state.fits[t];
        fit.iter_mut().for_each(|f| *f = 0.0);
        for (l, &m) in mu.iter().enumerate() {
            for (f, &w) in fit.iter_mut().zip(&weights[l * n..(l + 1) * n]) {
                *f += w * m;
            }
        }
        for ((r, p), f) in state.residuals.iter_mut().zip(&partial).zip(fit.iter()) {
            *r = p - f;
        }
        state.ensemble.trees[t] = tree;
        Ok(())
    }

    /// Prior plus log-scale Jacobian for the bandwidth random walk.
    fn bandwidth_log_prior_ratio(&self, tau: f64, tau_new: f64) -> f64 {
        let mean = self.config.bandwidth_rate;
        let lp = |x: f64| log_prior_bandwidth(x, mean).unwrap_or(f64::NEG_INFINITY);
        lp(tau_new) - lp(tau) + (tau_new / tau).ln()
    }

    /// Same moves with the marginal likelihood replaced by a constant and
    /// leaves drawn from their prior.
    fn update_tree_prior_only(&self, state: &mut SamplerState, t: usize) {
        let mut tree = state.ensemble.trees[t].clone();
        if self.options.update_trees {
            let kind = MoveKind::sample(&self.config.move_probs, &mut state.rng);
            let ctx = self.tree_context(&state.ensemble);
            let mut accepted = false;
            if let Some(prop) = propose_tree_move(&tree, kind, &ctx, &mut state.rng) {
                if metropolis_accept(prop.log_acceptance(0.0, 0.0), &mut state.rng) {
                    tree = prop.tree;
                    accepted = true;
                }
            }
            record_tree_move(&mut state.diagnostics, kind, accepted);
        }
        if self.options.update_bandwidth {
            let tau = tree.bandwidth();
            let tau_new = tau * (self.config.bandwidth_step * standard_normal(&mut state.rng)).exp();
            state.diagnostics.bandwidth_proposals += 1;
            if metropolis_accept(self.bandwidth_log_prior_ratio(tau, tau_new), &mut state.rng) {
                tree.set_bandwidth(tau_new);
                state.diagnostics.bandwidth_accepts += 1;
            }
        }
        if self.options.update_leaves {
            let sd = self.noise(&state.ensemble).leaf_variance().sqrt();
            let mu: Vec<f64> = (0..tree.leaf_count()).map(|_| sd * standard_normal(&mut state.rng)).collect();
            tree.set_leaf_values(&mu).expect("one value per leaf");
        }
        state.ensemble.trees[t] = tree;
    }

    /// Runs `warmup` sweeps, then `samples` sweeps keeping every `thin`-th.
    pub fn run(&self, state: &mut SamplerState, warmup: usize, samples: usize, thin: usize) -> Result<Trace> {
        let thin = thin.max(1);
        for _ in 0..warmup {
            self.sweep(state)?;
        }
        let mut trace = Trace::default();
        for i in 0..samples {
            self.sweep(state)?;
            if (i + 1) % thin == 0 {
                trace.draws.push(PosteriorDraw::new(state.ensemble.clone(), state.log_likelihood()));
            }
        }
        trace.diagnostics = state.diagnostics.clone();
        log::debug!(
            "chain done: {} draws, tree acceptance {:.3}, bandwidth acceptance {:.3}",
            trace.len(),
            trace.diagnostics.tree_acceptance(),
            trace.diagnostics.bandwidth_acceptance()
        );
        Ok(trace)
    }
}

fn record_tree_move(diag: &mut ChainDiagnostics, kind: MoveKind, accepted: bool) {
    diag.tree_proposals += 1;
    let slot = match kind {
        MoveKind::Birth => &mut diag.birth,
        MoveKind::Death => &mut diag.death,
        MoveKind::Change => &mut diag.change,
    };
    slot.0 += 1;
    if accepted {
        diag.tree_accepts += 1;
        slot.1 += 1;
    }
}

/// One sweep of the default sampler.
pub fn backfit_sweep(state: &mut SamplerState, data: &TrainingData, config: &FitConfig) -> Result<()> {
    Sampler::new(data, config, SamplerOptions::default())?.sweep(state)
}

/// Fits one chain with the default sampler, seeded from `config.seed`.
pub fn run_chain(data: &TrainingData, config: &FitConfig) -> Result<Trace> {
    run_chain_indexed(data, config, 0)
}

fn run_chain_indexed(data: &TrainingData, config: &FitConfig, chain: u64) -> Result<Trace> {
    let sigma_hat = sigma_hat_for(data, config);
    let sampler = Sampler::new(data, config, SamplerOptions::default())?;
    let mut state = SamplerState::initial(data, config, sigma_hat, chain_rng(config.seed, chain))?;
    sampler.run(&mut state, config.warmup_iters, config.sample_iters, config.thin)
}

/// Runs `chains` independent chains on scoped threads and pools their draws
/// in chain order.
pub fn run_chains(data: &TrainingData, config: &FitConfig, chains: usize) -> Result<Trace> {
    if chains == 0 {
        return Err(SbartError::config("at least one chain is required"));
    }
    if chains == 1 {
        return run_chain(data, config);
    }
    let results: Vec<Result<Trace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains as u64)
            .map(|c| scope.spawn(move || run_chain_indexed(data, config, c)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    Ok(Trace::pool(results.into_iter().collect::<Result<Vec<_>>>()?))
}

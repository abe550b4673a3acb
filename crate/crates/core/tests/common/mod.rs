#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sbart::priors::{sample_tree, TreePrior};
use sbart::SoftTree;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// A prior-drawn tree with random leaves and at most `max_leaves` leaves.
pub fn random_tree(rng: &mut ChaCha8Rng, p: usize, max_leaves: usize) -> SoftTree {
    let s = vec![1.0 / p as f64; p];
    let prior = TreePrior {
        gamma: 0.95,
        beta: 0.5,
    };
    loop {
        let bandwidth = 10f64.powf(rng.random_range(-2.5..0.5));
        let mut tree = sample_tree(&prior, &s, bandwidth, rng).unwrap();
        if tree.leaf_count() <= max_leaves {
            let mu: Vec<f64> = (0..tree.leaf_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            tree.set_leaf_values(&mu).unwrap();
            return tree;
        }
    }
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.random::<f64>())
}

/// Pearson chi-square homogeneity test between two histograms over the same
/// bins. Adjacent bins are merged from the right until every expected count
/// is at least 5. Returns the p-value.
pub fn chi_square_two_sample(a: &[usize], b: &[usize]) -> f64 {
    let k = a.len().max(b.len());
    let get = |v: &[usize], i: usize| v.get(i).copied().unwrap_or(0) as f64;
    let na: f64 = a.iter().sum::<usize>() as f64;
    let nb: f64 = b.iter().sum::<usize>() as f64;
    let total = na + nb;
    // merge bins
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for i in 0..k {
        acc.0 += get(a, i);
        acc.1 += get(b, i);
        let col = acc.0 + acc.1;
        if col * na.min(nb) / total >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 + acc.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let mut stat = 0.0;
    for &(x, y) in &bins {
        let col = x + y;
        let ea = col * na / total;
        let eb = col * nb / total;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let df = (bins.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Total variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Thinned output of a prior-mode chain.
pub struct PriorChain {
    /// Leaf count of tree 0 at each retained sweep.
    pub leaf_counts: Vec<usize>,
    /// Bandwidths of all trees at each retained sweep.
    pub bandwidths: Vec<f64>,
    pub sigma_mu: Vec<f64>,
    pub a: Vec<f64>,
}

/// Runs the full sampler with the likelihood switched off.
pub fn run_prior_chain(num_trees: usize, p: usize, sweeps: usize, thin: usize, seed: u64) -> PriorChain {
    use sbart::sampler::{chain_rng, Sampler, SamplerOptions, SamplerState};
    use sbart::{FitConfig, ResponseTransform, TrainingData};

    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let x = uniform_matrix(&mut rng, 10, p);
    let y: Vec<f64> = (0..10).map(|i| i as f64 / 10.0 - 0.5).collect();
    let data = TrainingData::new(x, y, ResponseTransform::identity()).unwrap();
    let config = FitConfig {
        num_trees,
        ..FitConfig::default()
    };
    let options = SamplerOptions {
        prior_only: true,
        ..SamplerOptions::default()
    };
    let sampler = Sampler::new(&data, &config, options).unwrap();
    let mut state = SamplerState::initial(&data, &config, 1.0, chain_rng(seed, 0)).unwrap();
    let mut out = PriorChain {
        leaf_counts: Vec::new(),
        bandwidths: Vec::new(),
        sigma_mu: Vec::new(),
        a: Vec::new(),
    };
    for it in 1..=sweeps {
        sampler.sweep(&mut state).unwrap();
        if it % thin == 0 {
            let e = &state.ensemble;
            out.leaf_counts.push(e.trees[0].leaf_count());
            out.bandwidths.extend(e.trees.iter().map(|t| t.bandwidth()));
            out.sigma_mu.push(e.sigma_mu);
            out.a.push(e.a);
        }
    }
    out
}

pub fn histogram(values: &[usize]) -> Vec<usize> {
    let max = values.iter().copied().max().unwrap_or(0);
    let mut h = vec![0; max + 1];
    for &v in values {
        h[v] += 1;
    }
    h
}

pub mod toy {
    //! A one-predictor, single-tree problem small enough to enumerate.

    use std::collections::HashMap;

    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use sbart::oracle::{enumerate_toy_posterior, toy_state_key, ToyPosterior};
    use sbart::priors::{CutpointRule, TreePrior};
    use sbart::random::standard_normal;
    use sbart::sampler::{chain_rng, Sampler, SamplerOptions, SamplerState};
    use sbart::{Ensemble, FitConfig, ResponseTransform, TrainingData};

    pub const GRID: [f64; 5] = [0.2, 0.35, 0.5, 0.65, 0.8];
    pub const TAU: f64 = 0.05;
    pub const SIGMA: f64 = 0.3;
    pub const SIGMA_MU: f64 = 0.5;

    pub fn toy_data() -> TrainingData {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 12;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| if v < 0.5 { -0.4 } else { 0.4 } + SIGMA * standard_normal(&mut rng))
            .collect();
        TrainingData::new(Array2::from_shape_vec((n, 1), x).unwrap(), y, ResponseTransform::identity()).unwrap()
    }

    pub fn toy_posterior(data: &TrainingData) -> ToyPosterior {
        enumerate_toy_posterior(
            data.column(0),
            data.y(),
            &GRID,
            4,
            TAU,
            &TreePrior::default(),
            SIGMA,
            SIGMA_MU,
        )
        .unwrap()
    }

    pub fn toy_config() -> FitConfig {
        FitConfig {
            num_trees: 1,
            ..FitConfig::default()
        }
    }

    pub fn toy_options() -> SamplerOptions {
        SamplerOptions {
            cutpoints: CutpointRule::Grid(GRID.to_vec()),
            max_leaves: Some(4),
            ..SamplerOptions::trees_only()
        }
    }

    pub fn toy_state(data: &TrainingData, tree: sbart::SoftTree, seed: u64) -> SamplerState {
        let mut e = Ensemble::initial(1, 1, TAU, SIGMA, SIGMA_MU, 1.0);
        e.trees[0] = tree;
        SamplerState::new(e, data, SIGMA, chain_rng(seed, 0)).unwrap()
    }

    /// Runs the tree chain for `steps` sweeps from a root-only tree. Returns the
    /// total variation distance to the exact table and the number of visits to
    /// states missing from it.
    pub fn toy_chain_distance(data: &TrainingData, exact: &ToyPosterior, steps: usize, seed: u64) -> (f64, usize) {
        let config = toy_config();
        let sampler = Sampler::new(data, &config, toy_options()).unwrap();
        let mut state = toy_state(data, sbart::SoftTree::root(TAU), seed);
        let mut visits: HashMap<String, usize> = HashMap::new();
        for _ in 0..steps {
            sampler.sweep(&mut state).unwrap();
            *visits.entry(toy_state_key(&state.ensemble.trees[0])).or_default() += 1;
        }
        let keys: Vec<String> = exact.states.iter().map(|(t, _)| toy_state_key(t)).collect();
        let outside = visits
            .iter()
            .filter(|(k, _)| !keys.contains(k))
            .map(|(_, v)| *v)
            .sum();
        let p: Vec<f64> = exact.states.iter().map(|(_, w)| *w).collect();
        let q: Vec<f64> = keys
            .iter()
            .map(|k| visits.get(k).copied().unwrap_or(0) as f64 / steps as f64)
            .collect();
        (super::total_variation(&p, &q), outside)
    }
}

//! Updates of the parameters shared by all trees: `s` (or grouped `u`),
//! `sigma`, `sigma_mu` and `a`.

use rand::Rng;

use super::slice::{slice_sample, SliceTuning};
use crate::ensemble::{total_split_counts, Ensemble};
use crate::priors::{log_default_prior_a, log_half_cauchy, log_symmetric_dirichlet, GroupStructure};
use crate::random::sample_dirichlet_log;

/// Draws `s ~ Dirichlet(a / p^xi + c_1, ..., a / p^xi + c_p)`.
pub fn gibbs_update_s<R: Rng + ?Sized>(ensemble: &mut Ensemble, xi: f64, rng: &mut R) {
    let counts = total_split_counts(ensemble);
    let base = ensemble.a / (counts.len() as f64).powf(xi);
    let alpha: Vec<f64> = counts.iter().map(|&c| base + c as f64).collect();
    let log_s = sample_dirichlet_log(&alpha, rng);
    ensemble.set_log_weights(&log_s);
}

/// Draws `u ~ Dirichlet(a / M + z_1, ..., a / M + z_M)` and rebuilds `s`.
pub fn gibbs_update_grouped<R: Rng + ?Sized>(ensemble: &mut Ensemble, groups: &GroupStructure, rng: &mut R) {
    let z = groups.group_counts(&total_split_counts(ensemble));
    let base = ensemble.a / groups.num_groups() as f64;
    let alpha: Vec<f64> = z.iter().map(|&c| base + c as f64).collect();
    let log_u = sample_dirichlet_log(&alpha, rng);
    ensemble.set_group_log_weights(&log_u, groups);
}

/// Slice update of `log sigma`. `likelihood` is `Some((ssr, n, eta))` for the
/// tempered Gaussian likelihood of the full residuals, `None` in prior mode.
pub fn update_sigma<R: Rng + ?Sized>(
    ensemble: &mut Ensemble,
    likelihood: Option<(f64, usize, f64)>,
    sigma_hat: f64,
    rng: &mut R,
) {
    let target = |l: f64| {
        let sigma = l.exp();
        let prior = log_half_cauchy(sigma, sigma_hat).unwrap_or(f64::NEG_INFINITY) + l;
        match likelihood {
            Some((ssr, n, eta)) => prior + eta * (-(n as f64) * l - 0.5 * ssr * (-2.0 * l).exp()),
            None => prior,
        }
    };
    ensemble.sigma = slice_sample(ensemble.sigma.ln(), target, SliceTuning::default(), rng).exp();
}

/// Slice update of `log sigma_mu` given all leaf values, each `N(0, sigma_mu^2 / T)`.
pub fn update_sigma_mu<R: Rng + ?Sized>(ensemble: &mut Ensemble, scale: f64, rng: &mut R) {
    let t = ensemble.trees.len() as f64;
    let (m, ss) = ensemble
        .trees
        .iter()
        .flat_map(|tree| tree.leaf_values())
        .fold((0usize, 0.0), |(m, ss), mu| (m + 1, ss + mu * mu));
    let target = |l: f64| {
        -(m as f64) * l - 0.5 * t * ss * (-2.0 * l).exp()
            + log_half_cauchy(l.exp(), scale).unwrap_or(f64::NEG_INFINITY)
            + l
    };
    ensemble.sigma_mu = slice_sample(ensemble.sigma_mu.ln(), target, SliceTuning::default(), rng).exp();
}

/// Slice update of `log a` given the current splitting proportions. With
/// groups the Dirichlet is over `u` with concentration `a / M`, otherwise over
/// `s` with concentration `a / p^xi`; the prior scale is `M` or `p`.
pub fn update_a<R: Rng + ?Sized>(ensemble: &mut Ensemble, xi: f64, rng: &mut R) {
    let (log_w, divisor, scale) = match ensemble.group_log_u() {
        Some(log_u) => {
            let m = log_u.len() as f64;
            (log_u.to_vec(), m, m)
        }
        None => {
            let p = ensemble.num_predictors() as f64;
            (ensemble.log_s().to_vec(), p.powf(xi), p)
        }
    };
    if log_w.len() < 2 {
        // the Dirichlet is degenerate, only the prior remains
        let target = |l: f64| log_default_prior_a(l.exp(), scale).unwrap_or(f64::NEG_INFINITY) + l;
        ensemble.a = slice_sample(ensemble.a.ln(), target, SliceTuning::default(), rng).exp();
        return;
    }
    let target = |l: f64| {
        let a = l.exp();
        log_symmetric_dirichlet(&log_w, a / divisor) + log_default_prior_a(a, scale).unwrap_or(f64::NEG_INFINITY) + l
    };
    ensemble.a = slice_sample(ensemble.a.ln(), target, SliceTuning::default(), rng).exp();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::SoftTree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ensemble_with_splits(p: usize, splits_on: &[usize]) -> Ensemble {
        let mut e = Ensemble::initial(splits_on.len().max(1), p, 0.1, 1.0, 0.25, 1.0);
        for (t, &j) in splits_on.iter().enumerate() {
            e.trees[t] = SoftTree::stump(j, 0.5, 0.0, 0.0, 0.1);
        }
        e
    }

    #[test]
    fn s_concentrates_with_vanishing_a() {
        let mut e = ensemble_with_splits(3, &[0, 0, 0, 0, 0]);
        e.a = 1e-8;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        for _ in 0..1000 {
            gibbs_update_s(&mut e, 1.0, &mut rng);
            if e.s()[0] > 0.999 {
                hits += 1;
            }
        }
        assert!(hits > 990, "{hits}");
    }

    #[test]
    fn s_posterior_mean_matches_dirichlet_mean() {
        let mut e = ensemble_with_splits(4, &[0, 0, 1, 3]);
        e.a = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws = 20_000;
        let mut mean = [0.0; 4];
        for _ in 0..draws {
            gibbs_update_s(&mut e, 1.0, &mut rng);
            for (m, v) in mean.iter_mut().zip(e.s()) {
                *m += v / draws as f64;
            }
        }
        // concentration 0.5 + c_j, total 6
        let expected = [2.5 / 6.0, 1.5 / 6.0, 0.5 / 6.0, 1.5 / 6.0];
        for (m, x) in mean.iter().zip(expected) {
            assert!((m - x).abs() < 0.01, "{m} vs {x}");
        }
    }

    #[test]
    fn grouped_posterior_mean() {
        let groups = GroupStructure::new(vec![0, 0, 1]).unwrap();
        let mut e = ensemble_with_splits(3, &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        e.a = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let draws = 20_000;
        let mut mean = 0.0;
        for _ in 0..draws {
            gibbs_update_grouped(&mut e, &groups, &mut rng);
            mean += e.group_u.as_ref().unwrap()[0] / draws as f64;
        }
        assert!((mean - 10.5 / 11.0).abs() < 0.005, "{mean}");
        // s splits u_1 evenly over the two predictors of group 0
        assert!((e.s()[0] - e.s()[1]).abs() < 1e-12);
    }

    #[test]
    fn single_group_is_degenerate() {
        let groups = GroupStructure::new(vec![0, 0]).unwrap();
        let mut e = ensemble_with_splits(2, &[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        gibbs_update_grouped(&mut e, &groups, &mut rng);
        assert_eq!(e.group_u.as_deref(), Some(&[1.0][..]));
        assert_eq!(e.s(), &[0.5, 0.5]);
    }

    #[test]
    fn sigma_concentrates_under_large_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 10_000;
        let ssr: f64 = (0..n)
            .map(|_| {
                let z = 2.0 * crate::random::standard_normal(&mut rng);
                z * z
            })
            .sum();
        let mut e = Ensemble::initial(1, 1, 0.1, 1.0, 0.25, 1.0);
        let mut inside = 0;
        for it in 0..600 {
            update_sigma(&mut e, Some((ssr, n, 1.0)), 1.0, &mut rng);
            if it >= 100 && e.sigma > 1.9 && e.sigma < 2.1 {
                inside += 1;
            }
        }
        assert_eq!(inside, 500);
    }

    #[test]
    fn sigma_prior_mode_recovers_half_cauchy_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut e = Ensemble::initial(1, 1, 0.1, 1.0, 0.25, 1.0);
        let mut below = 0;
        let draws = 40_000;
        for _ in 0..draws {
            update_sigma(&mut e, None, 3.0, &mut rng);
            if e.sigma < 3.0 {
                below += 1;
            }
        }
        let frac = below as f64 / draws as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn sigma_mu_tracks_leaf_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t = 200;
        let m = 0.8;
        let mut e = Ensemble::initial(t, 1, 0.1, 1.0, 0.25, 1.0);
        let sd = m / (t as f64).sqrt();
        for tree in &mut e.trees {
            *tree = SoftTree::stump(0, 0.5, 0.0, 0.0, 0.1);
            let mu = [sd * crate::random::standard_normal(&mut rng), sd * crate::random::standard_normal(&mut rng)];
            tree.set_leaf_values(&mu).unwrap();
        }
        let mut mean = 0.0;
        for it in 0..2000 {
            update_sigma_mu(&mut e, 0.25, &mut rng);
            if it >= 1000 {
                mean += e.sigma_mu / 1000.0;
            }
        }
        assert!((mean - m).abs() < 0.1, "{mean}");
    }

    #[test]
    fn a_responds_to_sparsity() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let p = 50;
        let prior_median = p as f64 / 3.0;

        let mut uniform = Ensemble::initial(1, p, 0.1, 1.0, 0.25, 10.0);
        let mut dense = Vec::new();
        for it in 0..3000 {
            update_a(&mut uniform, 1.0, &mut rng);
            if it >= 500 {
                dense.push(uniform.a);
            }
        }
        dense.sort_by(f64::total_cmp);
        assert!(dense[dense.len() / 2] > prior_median);

        let mut sparse = Ensemble::initial(1, p, 0.1, 1.0, 0.25, 10.0);
        let eps: f64 = 1e-6;
        let mut s = vec![eps; p];
        s[0] = 1.0 - (p as f64 - 1.0) * eps;
        sparse.set_s(&s);
        let mut small = Vec::new();
        for it in 0..3000 {
            update_a(&mut sparse, 1.0, &mut rng);
            if it >= 500 {
                small.push(sparse.a);
            }
        }
        small.sort_by(f64::total_cmp);
        assert!(small[small.len() / 2] < prior_median);
    }

    #[test]
    fn updates_are_deterministic_given_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(19);
            let mut e = ensemble_with_splits(3, &[0, 2]);
            for _ in 0..10 {
                gibbs_update_s(&mut e, 1.0, &mut rng);
                update_sigma(&mut e, Some((5.0, 20, 1.0)), 1.0, &mut rng);
                update_sigma_mu(&mut e, 0.25, &mut rng);
                update_a(&mut e, 1.0, &mut rng);
            }
            e
        };
        assert_eq!(run(), run());
    }
}

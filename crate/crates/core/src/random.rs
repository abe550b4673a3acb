//! Small sampling helpers shared by the prior simulators and the sampler.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// `log G` for `G ~ Gamma(shape, 1)`. Shapes below one use the
/// `Gamma(shape + 1) * U^(1/shape)` identity so tiny shapes do not underflow.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("positive shape").sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        g.ln() + u.ln() / shape
    }
}

/// Draws `log s` for `s ~ Dirichlet(alpha)`.
pub fn sample_dirichlet_log<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = alpha.iter().map(|&a| sample_log_gamma(a, rng)).collect();
    let lse = log_sum_exp(&logs);
    logs.into_iter().map(|l| l - lse).collect()
}

pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    sample_dirichlet_log(alpha, rng).into_iter().map(f64::exp).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Index drawn with probability proportional to `weights`.
pub fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_gamma_small_shape_mean() {
        // E[G] = shape for both branches of the sampler
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for shape in [0.3, 2.5] {
            let n = 200_000;
            let mean: f64 = (0..n).map(|_| sample_log_gamma(shape, &mut rng).exp()).sum::<f64>() / n as f64;
            let se = (shape / n as f64).sqrt();
            assert!((mean - shape).abs() < 4.0 * se, "shape {shape}: {mean}");
        }
    }

    #[test]
    fn tiny_concentrations_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logs = sample_dirichlet_log(&[1e-6; 50], &mut rng);
        assert!(logs.iter().all(|l| l.is_finite()));
        assert!((log_sum_exp(&logs)).abs() < 1e-12);
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            assert_eq!(categorical(&[0.0, 0.0, 0.0, 1.0], &mut rng), 3);
        }
    }
}

//! Synthetic data generators and evaluation metrics.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Result, SbartError};
use crate::random::standard_normal;

/// A simulated data set with its noiseless regression function.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulated {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub f_true: Vec<f64>,
}

/// `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + lambda (10 x4 + 5 x5)`.
pub fn friedman_function(x: &[f64], lambda: f64) -> f64 {
    10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + lambda * (10.0 * x[3] + 5.0 * x[4])
}

/// `2 - 4 I(x1 < 0.5)`.
pub fn step_value(x: &[f64]) -> f64 {
    if x[0] < 0.5 {
        -2.0
    } else {
        2.0
    }
}

fn generate<R: Rng + ?Sized>(n: usize, p: usize, sigma: f64, rng: &mut R, f: impl Fn(&[f64]) -> f64) -> Simulated {
    let x = Array2::from_shape_fn((n, p), |_| rng.random::<f64>());
    let f_true: Vec<f64> = (0..n).map(|i| f(x.row(i).as_slice().expect("row-major"))).collect();
    let y = f_true.iter().map(|&v| v + sigma * standard_normal(rng)).collect();
    Simulated { x, y, f_true }
}

/// Friedman's test function with `p - 5` uniform nuisance predictors.
pub fn friedman<R: Rng + ?Sized>(n: usize, p: usize, sigma: f64, lambda: f64, rng: &mut R) -> Result<Simulated> {
    if p < 5 {
        return Err(SbartError::config(format!("friedman needs p >= 5, got {p}")));
    }
    if !(sigma >= 0.0) {
        return Err(SbartError::config("sigma must be nonnegative"));
    }
    Ok(generate(n, p, sigma, rng, |x| friedman_function(x, lambda)))
}

pub fn step_function<R: Rng + ?Sized>(n: usize, p: usize, sigma: f64, rng: &mut R) -> Result<Simulated> {
    if p < 1 {
        return Err(SbartError::config("step function needs p >= 1"));
    }
    if !(sigma >= 0.0) {
        return Err(SbartError::config("sigma must be nonnegative"));
    }
    Ok(generate(n, p, sigma, rng, step_value))
}

/// Monte Carlo estimate of `{ int (f - f_hat)^2 dx }^(1/2)` over `[0, 1]^p`.
/// `f_hat` is evaluated on the whole batch of points at once.
pub fn rmse_against_truth<R, F, G>(f_hat: F, f_true: G, p: usize, n_mc: usize, rng: &mut R) -> Result<f64>
where
    R: Rng + ?Sized,
    F: FnOnce(&Array2<f64>) -> Result<Vec<f64>>,
    G: Fn(&[f64]) -> f64,
{
    let x = Array2::from_shape_fn((n_mc, p), |_| rng.random::<f64>());
    let pred = f_hat(&x)?;
    if pred.len() != n_mc {
        return Err(SbartError::data(format!("{} predictions for {n_mc} points", pred.len())));
    }
    let mse = (0..n_mc)
        .map(|i| (f_true(x.row(i).as_slice().expect("row-major")) - pred[i]).powi(2))
        .sum::<f64>()
        / n_mc as f64;
    Ok(mse.sqrt())
}

/// Root mean squared difference of two equally long vectors.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(SbartError::data(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok((a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn selection_metrics(selected: &[usize], truth: &[usize]) -> SelectionMetrics {
    let tp = selected.iter().filter(|j| truth.contains(j)).count() as f64;
    let precision = if selected.is_empty() {
        if truth.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        tp / selected.len() as f64
    };
    let recall = if truth.is_empty() { 1.0 } else { tp / truth.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SelectionMetrics { precision, recall, f1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn friedman_values() {
        let x = [0.5; 6];
        assert!((friedman_function(&x, 1.0) - 14.571_067_811_865_476).abs() < 1e-9);
        assert_eq!(friedman_function(&[0.0, 0.7, 0.5, 0.0, 0.0], 1.0), 0.0);
        let a = friedman_function(&[0.3, 0.4, 0.2, 0.1, 0.9], 0.0);
        let b = friedman_function(&[0.3, 0.4, 0.2, 0.8, 0.2], 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn friedman_noiseless_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = friedman(50, 7, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(d.y, d.f_true);
        assert_eq!(d.x.dim(), (50, 7));
        let again = friedman(50, 7, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(d, again);
        assert!(friedman(10, 4, 1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn step_boundary() {
        assert_eq!(step_value(&[0.25]), -2.0);
        assert_eq!(step_value(&[0.75]), 2.0);
        assert_eq!(step_value(&[0.5]), 2.0);
    }

    #[test]
    fn rmse_of_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = |x: &[f64]| friedman_function(x, 1.0);
        let same = rmse_against_truth(|x| Ok((0..x.nrows()).map(|i| f(x.row(i).as_slice().unwrap())).collect()), f, 5, 1000, &mut rng).unwrap();
        assert_eq!(same, 0.0);
        let shifted = rmse_against_truth(
            |x| Ok((0..x.nrows()).map(|i| f(x.row(i).as_slice().unwrap()) + 0.3).collect()),
            f,
            5,
            1000,
            &mut rng,
        )
        .unwrap();
        assert!((shifted - 0.3).abs() < 1e-9);
        let zero = rmse_against_truth(|x| Ok(vec![0.0; x.nrows()]), step_value, 1, 10_000, &mut rng).unwrap();
        assert!((zero - 2.0).abs() < 0.05);
    }

    #[test]
    fn selection_examples() {
        let m = selection_metrics(&[1, 2], &[1, 2]);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = selection_metrics(&[1, 2, 3], &[1, 2, 4, 5]);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 0.5).abs() < 1e-15);
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-15);
        let m = selection_metrics(&[], &[0]);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }
}

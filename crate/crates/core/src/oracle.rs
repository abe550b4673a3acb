//! Brute-force references for the test suites.
//!
//! Nothing here shares marginal-likelihood code with [`crate::likelihood`]:
//! the dense evaluation works in the n x n observation space with a general
//! Cholesky from `nalgebra`, and the toy enumeration computes its own tree
//! prior. Only the gating weights are reused.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{Result, SbartError};
use crate::gating::weight_matrix;
use crate::priors::{sample_tree_topology, TreePrior};
use crate::tree::{NodeKind, SoftTree};

pub mod quadrature {
    /// Adaptive Simpson integration of `f` over `[a, b]`.
    pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        let fa = f(a);
        let fb = f(b);
        let m = 0.5 * (a + b);
        let fm = f(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        recurse(&f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }

    /// `int_0^inf f(x) dx` via `x = scale * (t / (1 - t))^2`, which absorbs
    /// `x^{-1/2}` singularities at zero and `x^{-2}` tails.
    pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, scale: f64, tol: f64) -> f64 {
        let g = |t: f64| {
            let t = t.clamp(1e-12, 1.0 - 1e-9);
            let ratio = t / (1.0 - t);
            let x = scale * ratio * ratio;
            let jac = scale * 2.0 * t / (1.0 - t).powi(3);
            let v = f(x) * jac;
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        adaptive_simpson(g, 0.0, 1.0, tol)
    }
}

/// Dense n x n evaluation of the tempered marginal likelihood of a tree.
///
/// `int prod_i N(r_i | (Phi mu)_i, sigma^2)^eta N(mu | 0, v I) dmu` equals
/// `(2 pi sigma^2)^{n(1 - eta)/2} eta^{-n/2} N(r | 0, sigma^2/eta I + v Phi Phi')`.
pub fn dense_log_marginal(
    tree: &SoftTree,
    residuals: &[f64],
    x: ArrayView2<'_, f64>,
    sigma: f64,
    sigma_mu: f64,
    num_trees: usize,
    eta: f64,
) -> Result<f64> {
    let n = residuals.len();
    if n > 64 {
        return Err(SbartError::data("dense oracle limited to n <= 64"));
    }
    let w = weight_matrix(tree, x)?;
    let phi = DMatrix::from_fn(n, w.num_leaves(), |i, l| w.values()[[i, l]]);
    let v = sigma_mu * sigma_mu / num_trees as f64;
    let s2 = sigma * sigma;
    let cov = DMatrix::<f64>::identity(n, n) * (s2 / eta) + &phi * phi.transpose() * v;
    let chol = cov
        .cholesky()
        .ok_or_else(|| SbartError::Factorization("dense covariance not SPD".into()))?;
    let r = DVector::from_column_slice(residuals);
    let solved = chol.solve(&r);
    let quad = r.dot(&solved);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let log_normal = -0.5 * (n as f64 * ln_2pi + log_det + quad);
    let nf = n as f64;
    Ok(log_normal + 0.5 * nf * (ln_2pi + (s2 / eta).ln()) - 0.5 * nf * eta * (ln_2pi + s2.ln()))
}

/// Forward-simulated histogram of leaf counts: `hist[k]` draws had `k` leaves.
pub fn prior_leafcount_distribution<R: Rng + ?Sized>(prior: &TreePrior, n_draws: usize, rng: &mut R) -> Result<Vec<usize>> {
    let mut hist = vec![0usize; 2];
    for _ in 0..n_draws {
        let k = sample_tree_topology(prior, rng)?.leaf_count();
        if k >= hist.len() {
            hist.resize(k + 1, 0);
        }
        hist[k] += 1;
    }
    Ok(hist)
}

/// Canonical text key for a single-predictor tree: preorder list of
/// cutpoints and leaves, e.g. `B0.5(L,L)`.
pub fn toy_state_key(tree: &SoftTree) -> String {
    fn walk(tree: &SoftTree, id: usize, out: &mut String) {
        match tree.node(id).kind {
            NodeKind::Leaf { .. } => out.push('L'),
            NodeKind::Branch {
                predictor,
                cutpoint,
                left,
                right,
            } => {
                out.push_str(&format!("B{predictor}:{cutpoint}("));
                walk(tree, left, out);
                out.push(',');
                walk(tree, right, out);
                out.push(')');
            }
        }
    }
    let mut s = String::new();
    walk(tree, 0, &mut s);
    s
}

#[derive(Clone, Debug)]
enum Shape {
    Leaf,
    Split(f64, Box<Shape>, Box<Shape>),
}

impl Shape {
    fn leaves(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Split(_, l, r) => l.leaves() + r.leaves(),
        }
    }
}

/// All shapes with at most `budget` leaves rooted at `depth` whose cutpoints
/// lie strictly inside `(lo, hi)`, with their log prior.
fn enumerate_shapes(depth: u32, lo: f64, hi: f64, budget: usize, grid: &[f64], prior: &TreePrior) -> Vec<(Shape, f64)> {
    let q = prior.gamma * (1.0 + depth as f64).powf(-prior.beta);
    let mut out = vec![(Shape::Leaf, (1.0 - q).ln())];
    if budget < 2 {
        return out;
    }
    let cands: Vec<f64> = grid.iter().copied().filter(|&g| g > lo && g < hi).collect();
    let rule = q.ln() - (cands.len() as f64).ln();
    for &c in &cands {
        let lefts = enumerate_shapes(depth + 1, lo, c, budget - 1, grid, prior);
        for (ls, lp) in &lefts {
            let rights = enumerate_shapes(depth + 1, c, hi, budget - ls.leaves(), grid, prior);
            for (rs, rp) in rights {
                out.push((
                    Shape::Split(c, Box::new(ls.clone()), Box::new(rs)),
                    rule + lp + rp,
                ));
            }
        }
    }
    out
}

fn build_into(tree: &mut SoftTree, id: usize, shape: &Shape) {
    if let Shape::Split(c, l, r) = shape {
        let (left, _) = tree.split_leaf(id, 0, *c).expect("leaf");
        build_into(tree, left, l);
        let right = tree.node(id).children().unwrap().1;
        build_into(tree, right, r);
    }
}

/// Exact posterior over single-predictor trees with grid cutpoints.
#[derive(Clone, Debug)]
pub struct ToyPosterior {
    pub states: Vec<(SoftTree, f64)>,
}

impl ToyPosterior {
    pub fn probability_of(&self, key: &str) -> Option<f64> {
        self.states
            .iter()
            .find(|(t, _)| toy_state_key(t) == key)
            .map(|(_, p)| *p)
    }
}

/// Enumerates every tree with at most `max_leaves` leaves, cutpoints from
/// `grid`, fixed bandwidth, and weights each by prior times the dense
/// marginal likelihood of `residuals`.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_toy_posterior(
    x: &[f64],
    residuals: &[f64],
    grid: &[f64],
    max_leaves: usize,
    bandwidth: f64,
    prior: &TreePrior,
    sigma: f64,
    sigma_mu: f64,
) -> Result<ToyPosterior> {
    if grid.len() > 9 || max_leaves > 6 {
        return Err(SbartError::data("toy state space too large"));
    }
    let xm = Array2::from_shape_vec((x.len(), 1), x.to_vec()).map_err(|e| SbartError::data(e.to_string()))?;
    let shapes = enumerate_shapes(0, 0.0, 1.0, max_leaves, grid, prior);
    let mut states = Vec::with_capacity(shapes.len());
    let mut logw = Vec::with_capacity(shapes.len());
    for (shape, lp) in shapes {
        let mut tree = SoftTree::root(bandwidth);
        build_into(&mut tree, 0, &shape);
        let ll = dense_log_marginal(&tree, residuals, xm.view(), sigma, sigma_mu, 1, 1.0)?;
        logw.push(lp + ll);
        states.push(tree);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(ToyPosterior {
        states: states.into_iter().zip(weights.into_iter().map(|w| w / total)).collect(),
    })
}

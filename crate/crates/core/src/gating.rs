//! Gating functions and soft leaf weights.
//!
//! At a branch with rule `x_j <= C` an observation goes right with probability
//! `psi((x_j - C) / tau)` and left with the complement, so the hard tree is
//! recovered as `tau -> 0`. The weight of a leaf is the product of these
//! probabilities along its ancestor path.

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::ensemble::Ensemble;
use crate::error::{Result, SbartError};
use crate::tree::{NodeKind, SoftTree};

/// A gating function: a CDF-like map from a scaled offset to `(0, 1)`.
pub trait Gate {
    /// Returns `(1 - psi(z), psi(z))`, computed without cancellation.
    fn split(&self, z: f64) -> (f64, f64);

    fn eval(&self, z: f64) -> f64 {
        self.split(z).1
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Logistic;

impl Gate for Logistic {
    #[inline]
    fn split(&self, z: f64) -> (f64, f64) {
        let e = (-z.abs()).exp();
        let big = 1.0 / (1.0 + e);
        let small = e * big;
        if z >= 0.0 {
            (small, big)
        } else {
            (big, small)
        }
    }
}

/// `psi((x_j - cutpoint) / bandwidth)` for the logistic gate.
pub fn gate(x_j: f64, cutpoint: f64, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(SbartError::domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(Logistic.eval((x_j - cutpoint) / bandwidth))
}

/// Soft leaf-membership weights for the rows of one tree, `n x L`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    values: Array2<f64>,
}

impl WeightMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_leaves(&self) -> usize {
        self.values.ncols()
    }

    /// Weights of leaf `l` for every row (contiguous).
    pub fn column(&self, l: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice_memory_order().expect("column-major storage")[l * n..(l + 1) * n]
    }

    /// `Phi * mu`.
    pub fn apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (l, &m) in mu.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.column(l)) {
                *o += w * m;
            }
        }
        out
    }
}

fn check_predictors(tree: &SoftTree, p: usize) -> Result<()> {
    for node in tree.nodes() {
        if let Some((j, _)) = node.rule() {
            if j >= p {
                return Err(SbartError::structure(format!(
                    "tree splits on predictor {j} but x has {p} columns"
                )));
            }
        }
    }
    Ok(())
}

pub fn weight_matrix(tree: &SoftTree, x: ArrayView2<'_, f64>) -> Result<WeightMatrix> {
    weight_matrix_with(&Logistic, tree, x)
}

pub fn weight_matrix_with<G: Gate>(gate: &G, tree: &SoftTree, x: ArrayView2<'_, f64>) -> Result<WeightMatrix> {
    check_predictors(tree, x.ncols())?;
    if !(tree.bandwidth() > 0.0) {
        return Err(SbartError::domain("bandwidth must be positive"));
    }
    let n = x.nrows();
    let columns: Vec<Vec<f64>>;
    let mut views: Vec<&[f64]> = Vec::with_capacity(x.ncols());
    if x.columns().into_iter().all(|c| c.as_slice().is_some()) {
        for c in x.columns() {
            views.push(c.to_slice().unwrap());
        }
    } else {
        columns = x.columns().into_iter().map(|c| c.to_vec()).collect();
        views.extend(columns.iter().map(|c| c.as_slice()));
    }
    let values = weights_from_columns(gate, tree, &views, n, tree.bandwidth());
    Ok(WeightMatrix {
        values: Array2::from_shape_vec((n, tree.leaf_count()).f(), values).expect("shape"),
    })
}

/// Hot path used by the sampler: `columns[j]` holds predictor `j` for all
/// rows. Returns the weights in column-major order (leaf by leaf).
pub(crate) fn weights_from_columns<G: Gate>(
    gate: &G,
    tree: &SoftTree,
    columns: &[&[f64]],
    n: usize,
    bandwidth: f64,
) -> Vec<f64> {
    let leaves = tree.leaf_count();
    let mut out = vec![0.0; n * leaves];
    if leaves == 1 {
        out.iter_mut().for_each(|v| *v = 1.0);
        return out;
    }
    let inv_tau = 1.0 / bandwidth;
    // leaf ids are increasing in preorder, so a leaf's column is its rank
    let mut leaf_rank = vec![usize::MAX; tree.nodes().len()];
    for (rank, id) in tree.leaf_ids().into_iter().enumerate() {
        leaf_rank[id] = rank;
    }
    let mut stack: Vec<(usize, Vec<f64>)> = vec![(0, vec![1.0; n])];
    while let Some((id, weight)) = stack.pop() {
        match tree.node(id).kind {
            NodeKind::Leaf { .. } => {
                let r = leaf_rank[id];
                out[r * n..(r + 1) * n].copy_from_slice(&weight);
            }
            NodeKind::Branch {
                predictor,
                cutpoint,
                left,
                right,
            } => {
                let col = columns[predictor];
                let mut lw = weight;
                let mut rw = vec![0.0; n];
                for i in 0..n {
                    let (gl, gr) = gate.split((col[i] - cutpoint) * inv_tau);
                    rw[i] = lw[i] * gr;
                    lw[i] *= gl;
                }
                stack.push((right, rw));
                stack.push((left, lw));
            }
        }
    }
    renormalize_rows(&mut out, n, leaves);
    out
}

fn renormalize_rows(values: &mut [f64], n: usize, leaves: usize) {
    for i in 0..n {
        let total: f64 = (0..leaves).map(|l| values[l * n + i]).sum();
        if (total - 1.0).abs() > 1e-12 && total > 0.0 {
            for l in 0..leaves {
                values[l * n + i] /= total;
            }
        }
    }
}

/// Weights of every leaf (left to right) for a single observation.
pub fn leaf_weights(tree: &SoftTree, x: &[f64]) -> Result<Vec<f64>> {
    check_predictors(tree, x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SbartError::domain("non-finite predictor value"));
    }
    let columns: Vec<&[f64]> = x.iter().map(std::slice::from_ref).collect();
    Ok(weights_from_columns(&Logistic, tree, &columns, 1, tree.bandwidth()))
}

/// `sum_l mu_l * phi(x; tree, l)`.
pub fn predict_tree(tree: &SoftTree, x: &[f64]) -> Result<f64> {
    let w = leaf_weights(tree, x)?;
    Ok(w.iter().zip(tree.leaf_values()).map(|(a, b)| a * b).sum())
}

pub fn predict_ensemble(ensemble: &Ensemble, x: &[f64]) -> Result<f64> {
    ensemble.trees.iter().map(|t| predict_tree(t, x)).sum()
}

/// Per-row predictions of one tree over a column-major predictor set.
pub(crate) fn predict_tree_columns(tree: &SoftTree, columns: &[&[f64]], n: usize) -> Vec<f64> {
    let mu = tree.leaf_values();
    if mu.len() == 1 {
        return vec![mu[0]; n];
    }
    let w = weights_from_columns(&Logistic, tree, columns, n, tree.bandwidth());
    let mut out = vec![0.0; n];
    for (l, &m) in mu.iter().enumerate() {
        for (o, &v) in out.iter_mut().zip(&w[l * n..(l + 1) * n]) {
            *o += v * m;
        }
    }
    out
}

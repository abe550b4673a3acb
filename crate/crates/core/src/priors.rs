//! Prior densities and prior simulation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SbartError};
use crate::random::{categorical, sample_log_gamma};
use crate::tree::{Node, NodeId, NodeKind, SoftTree};

/// Branching-process prior on tree shapes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreePrior {
    pub gamma: f64,
    pub beta: f64,
}

impl Default for TreePrior {
    fn default() -> Self {
        TreePrior {
            gamma: 0.95,
            beta: 2.0,
        }
    }
}

/// Probability that a node at `depth` is a branch: `gamma * (1 + depth)^-beta`.
pub fn branch_prob(depth: u32, prior: &TreePrior) -> f64 {
    prior.gamma * (1.0 + depth as f64).powf(-prior.beta)
}

/// Deepest tree the prior simulator will build before giving up.
pub const MAX_PRIOR_DEPTH: u32 = 64;

/// How cutpoints are drawn within the reachable interval of a node.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub enum CutpointRule {
    /// Uniform on the open reachable interval.
    #[default]
    Continuous,
    /// Uniform over the listed points that fall strictly inside the interval.
    Grid(Vec<f64>),
}

impl CutpointRule {
    fn candidates<'a>(grid: &'a [f64], lo: f64, hi: f64) -> impl Iterator<Item = f64> + 'a {
        grid.iter().copied().filter(move |&g| g > lo && g < hi)
    }

    /// Draws a cutpoint in `(lo, hi)`, or `None` when no grid point is available.
    pub fn draw<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> Option<f64> {
        match self {
            CutpointRule::Continuous => Some(lo + (hi - lo) * rng.random::<f64>()),
            CutpointRule::Grid(grid) => {
                let cands: Vec<f64> = Self::candidates(grid, lo, hi).collect();
                if cands.is_empty() {
                    None
                } else {
                    Some(cands[rng.random_range(0..cands.len())])
                }
            }
        }
    }

    /// Log density of `cutpoint` given the interval.
    pub fn log_density(&self, lo: f64, hi: f64, cutpoint: f64) -> f64 {
        match self {
            CutpointRule::Continuous => {
                if cutpoint >= lo && cutpoint <= hi && hi > lo {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            CutpointRule::Grid(grid) => {
                let count = Self::candidates(grid, lo, hi).count();
                if count > 0 && cutpoint > lo && cutpoint < hi && grid.contains(&cutpoint) {
                    -(count as f64).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Draws a decision rule for `node`: predictor from `s`, cutpoint uniform on
/// the interval that the ancestors leave open for that predictor.
pub fn sample_decision_rule<R: Rng + ?Sized>(tree: &SoftTree, node: NodeId, s: &[f64], rng: &mut R) -> (usize, f64) {
    draw_rule(tree, node, s, &CutpointRule::Continuous, rng).expect("continuous rule always exists")
}

pub(crate) fn draw_rule<R: Rng + ?Sized>(
    tree: &SoftTree,
    node: NodeId,
    s: &[f64],
    cutpoints: &CutpointRule,
    rng: &mut R,
) -> Option<(usize, f64)> {
    let j = categorical(s, rng);
    let (lo, hi) = tree.reachable_interval(node, j);
    cutpoints.draw(lo, hi, rng).map(|c| (j, c))
}

/// Log density of the rule `(j, c)` at `node` under the decision-rule prior.
pub(crate) fn log_rule_density(tree: &SoftTree, node: NodeId, j: usize, c: f64, log_s: &[f64], cutpoints: &CutpointRule) -> f64 {
    let (lo, hi) = tree.reachable_interval(node, j);
    log_s[j] + cutpoints.log_density(lo, hi, c)
}

/// Joint log prior of a tree's shape and decision rules (leaf values and
/// bandwidth excluded). Trees above `max_leaves` get `-inf`.
pub fn log_tree_prior(
    tree: &SoftTree,
    prior: &TreePrior,
    log_s: &[f64],
    cutpoints: &CutpointRule,
    max_leaves: Option<usize>,
) -> f64 {
    if let Some(cap) = max_leaves {
        if tree.leaf_count() > cap {
            return f64::NEG_INFINITY;
        }
    }
    let mut total = 0.0;
    for (id, node) in tree.nodes().iter().enumerate() {
        let q = branch_prob(node.depth, prior);
        match node.kind {
            NodeKind::Leaf { .. } => total += (1.0 - q).ln(),
            NodeKind::Branch {
                predictor,
                cutpoint,
                ..
            } => {
                total += q.ln() + log_rule_density(tree, id, predictor, cutpoint, log_s, cutpoints);
            }
        }
    }
    total
}

/// Forward simulation of the branching process. Branch rules are
/// placeholders (predictor 0, cutpoint 0.5).
pub fn sample_tree_topology<R: Rng + ?Sized>(prior: &TreePrior, rng: &mut R) -> Result<SoftTree> {
    sample_tree_inner(prior, None, 1.0, rng)
}

/// Forward simulation of shape and decision rules.
pub fn sample_tree<R: Rng + ?Sized>(prior: &TreePrior, s: &[f64], bandwidth: f64, rng: &mut R) -> Result<SoftTree> {
    sample_tree_inner(prior, Some(s), bandwidth, rng)
}

fn sample_tree_inner<R: Rng + ?Sized>(
    prior: &TreePrior,
    s: Option<&[f64]>,
    bandwidth: f64,
    rng: &mut R,
) -> Result<SoftTree> {
    let mut tree = SoftTree::root(bandwidth);
    // Expand in preorder: after splitting node k, its children are k+1 and
    // beyond, so scanning ids upward visits every node exactly once.
    let mut id = 0;
    while id < tree.nodes().len() {
        let node: &Node = tree.node(id);
        if node.is_leaf() {
            let depth = node.depth;
            if rng.random::<f64>() < branch_prob(depth, prior) {
                if depth + 1 > MAX_PRIOR_DEPTH {
                    return Err(SbartError::structure(format!(
                        "prior simulation exceeded depth {MAX_PRIOR_DEPTH}; check gamma/beta"
                    )));
                }
                let (j, c) = match s {
                    Some(s) => sample_decision_rule(&tree, id, s, rng),
                    None => (0, 0.5),
                };
                tree.split_leaf(id, j, c)?;
            }
        }
        id += 1;
    }
    Ok(tree)
}

/// Log density of a Dirichlet distribution at `s`.
pub fn log_dirichlet_density(s: &[f64], concentration: &[f64]) -> Result<f64> {
    if s.len() != concentration.len() {
        return Err(SbartError::domain("length mismatch"));
    }
    for (&v, &a) in s.iter().zip(concentration) {
        if v == 0.0 && a < 1.0 {
            return Err(SbartError::domain("density is infinite at a zero entry"));
        }
        if v < 0.0 {
            return Err(SbartError::domain("negative simplex entry"));
        }
    }
    let logs: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    Ok(log_dirichlet_density_from_logs(&logs, concentration))
}

/// Same as [`log_dirichlet_density`] but takes `log s`.
pub fn log_dirichlet_density_from_logs(log_s: &[f64], concentration: &[f64]) -> f64 {
    let total: f64 = concentration.iter().sum();
    let mut out = ln_gamma(total);
    for (&l, &a) in log_s.iter().zip(concentration) {
        out -= ln_gamma(a);
        if a != 1.0 {
            out += (a - 1.0) * l;
        }
    }
    out
}

/// Symmetric-concentration version used by the sampler: `Dirichlet(alpha, ..., alpha)`.
pub(crate) fn log_symmetric_dirichlet(log_s: &[f64], alpha: f64) -> f64 {
    let k = log_s.len() as f64;
    ln_gamma(alpha * k) - k * ln_gamma(alpha) + (alpha - 1.0) * log_s.iter().sum::<f64>()
}

/// Compound-Gamma prior on the Dirichlet mass: `a / (a + scale) ~ Beta(shape1, shape2)`.
pub fn log_prior_a(a: f64, shape1: f64, shape2: f64, scale: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(SbartError::domain(format!("a must be positive, got {a}")));
    }
    let ln_beta = ln_gamma(shape1) + ln_gamma(shape2) - ln_gamma(shape1 + shape2);
    let ln_sum = (a + scale).ln();
    let ln_u = a.ln() - ln_sum;
    let ln_1mu = scale.ln() - ln_sum;
    Ok((shape1 - 1.0) * ln_u + (shape2 - 1.0) * ln_1mu - ln_beta + scale.ln() - 2.0 * ln_sum)
}

/// Default compound-Gamma prior: shapes (0.5, 1), scale = number of predictors (or groups).
pub fn log_default_prior_a(a: f64, scale: f64) -> Result<f64> {
    log_prior_a(a, 0.5, 1.0, scale)
}

/// Exponential bandwidth prior with mean `mean`.
pub fn log_prior_bandwidth(tau: f64, mean: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(SbartError::domain(format!("bandwidth must be positive, got {tau}")));
    }
    Ok(-mean.ln() - tau / mean)
}

pub fn log_half_cauchy(x: f64, scale: f64) -> Result<f64> {
    if !(x > 0.0) || !(scale > 0.0) {
        return Err(SbartError::domain(format!("half-Cauchy needs x, scale > 0 (got {x}, {scale})")));
    }
    let z = x / scale;
    Ok(std::f64::consts::LN_2 - std::f64::consts::PI.ln() - scale.ln() - z.mul_add(z, 1.0).ln())
}

pub fn sample_half_cauchy<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    scale * (std::f64::consts::FRAC_PI_2 * u).tan()
}

pub fn sample_bandwidth_prior<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    -mean * u.ln()
}

/// Draws `a` from the compound-Gamma prior.
pub fn sample_prior_a<R: Rng + ?Sized>(shape1: f64, shape2: f64, scale: f64, rng: &mut R) -> f64 {
    let lx = sample_log_gamma(shape1, rng);
    let ly = sample_log_gamma(shape2, rng);
    // a = scale * U / (1 - U) with U = X / (X + Y)
    scale * (lx - ly).exp()
}

/// Assignment of predictors to groups for the grouping prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStructure {
    assignment: Vec<usize>,
    group_sizes: Vec<usize>,
}

impl GroupStructure {
    /// `assignment[j]` is the group of predictor `j`; groups are `0..M`.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let m = assignment.iter().copied().max().map_or(0, |g| g + 1);
        let mut group_sizes = vec![0; m];
        for &g in &assignment {
            group_sizes[g] += 1;
        }
        if let Some(empty) = group_sizes.iter().position(|&s| s == 0) {
            return Err(SbartError::structure(format!("group {empty} has no predictors")));
        }
        Ok(GroupStructure {
            assignment,
            group_sizes,
        })
    }

    /// Every predictor in its own group.
    pub fn singletons(p: usize) -> Self {
        GroupStructure::new((0..p).collect()).expect("nonempty groups")
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn num_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn num_predictors(&self) -> usize {
        self.assignment.len()
    }

    /// Branch counts per group from per-predictor counts.
    pub fn group_counts(&self, split_counts: &[usize]) -> Vec<usize> {
        let mut z = vec![0; self.num_groups()];
        for (j, &c) in split_counts.iter().enumerate() {
            z[self.assignment[j]] += c;
        }
        z
    }
}

/// Predictor-level splitting proportions `u_m / P_m` from group proportions.
pub fn grouped_s(u: &[f64], groups: &GroupStructure) -> Result<Vec<f64>> {
    if u.len() != groups.num_groups() {
        return Err(SbartError::structure(format!(
            "{} group weights for {} groups",
            u.len(),
            groups.num_groups()
        )));
    }
    Ok(groups
        .assignment
        .iter()
        .map(|&g| u[g] / groups.group_sizes[g] as f64)
        .collect())
}

/// Same as [`grouped_s`] in log space.
pub(crate) fn grouped_log_s(log_u: &[f64], groups: &GroupStructure) -> Vec<f64> {
    groups
        .assignment
        .iter()
        .map(|&g| log_u[g] - (groups.group_sizes[g] as f64).ln())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::quadrature::integrate_half_line;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn branch_probabilities() {
        let prior = TreePrior::default();
        assert_eq!(branch_prob(0, &prior), 0.95);
        assert!((branch_prob(1, &prior) - 0.2375).abs() < 1e-15);
        assert!((branch_prob(3, &prior) - 0.059375).abs() < 1e-15);
    }

    #[test]
    fn zero_gamma_gives_root_only() {
        let prior = TreePrior { gamma: 0.0, beta: 2.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert_eq!(sample_tree_topology(&prior, &mut rng).unwrap().leaf_count(), 1);
        }
    }

    /// E_k = q(k) * 2 E_{k+1} + (1 - q(k)), truncated deep enough to be exact.
    fn expected_leaves(prior: &TreePrior) -> f64 {
        let mut e = 1.0;
        for k in (0..200).rev() {
            let q = branch_prob(k, prior);
            e = q * 2.0 * e + (1.0 - q);
        }
        e
    }

    #[test]
    fn topology_simulation_matches_branching_process() {
        let prior = TreePrior::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut root_leaf = 0usize;
        let mut leaves = 0usize;
        for _ in 0..n {
            let t = sample_tree_topology(&prior, &mut rng).unwrap();
            t.validate(1).unwrap();
            if t.leaf_count() == 1 {
                root_leaf += 1;
            }
            leaves += t.leaf_count();
        }
        let frac = root_leaf as f64 / n as f64;
        assert!((frac - 0.05).abs() < 0.003, "P(root leaf) = {frac}");
        let mean = leaves as f64 / n as f64;
        let expected = expected_leaves(&prior);
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn degenerate_s_always_picks_that_predictor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = SoftTree::root(0.1);
        let s = [0.0, 0.0, 0.0, 1.0];
        for _ in 0..1000 {
            assert_eq!(sample_decision_rule(&t, 0, &s, &mut rng).0, 3);
        }
    }

    #[test]
    fn root_cutpoints_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = SoftTree::root(0.1);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_decision_rule(&t, 0, &[1.0], &mut rng).1).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005);
    }

    #[test]
    fn cutpoint_respects_ancestor_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = SoftTree::stump(0, 0.4, 0.0, 0.0, 0.1);
        let right = t.node(0).children().unwrap().1;
        for _ in 0..10_000 {
            let (_, c) = sample_decision_rule(&t, right, &[1.0], &mut rng);
            assert!((0.4..=1.0).contains(&c));
        }
    }

    #[test]
    fn grid_rule_uses_interior_points() {
        let rule = CutpointRule::Grid(vec![0.25, 0.5, 0.75]);
        assert_eq!(rule.log_density(0.0, 0.5, 0.25), 0.0);
        assert_eq!(rule.log_density(0.0, 0.5, 0.5), f64::NEG_INFINITY);
        assert!((rule.log_density(0.0, 1.0, 0.5) + 3f64.ln()).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert_eq!(rule.draw(0.25, 0.5, &mut rng), None);
    }

    #[test]
    fn dirichlet_density_values() {
        assert!(log_dirichlet_density(&[0.3, 0.7], &[1.0, 1.0]).unwrap().abs() < 1e-14);
        let v = log_dirichlet_density(&[0.5, 0.5], &[2.0, 2.0]).unwrap();
        assert!((v - 1.5f64.ln()).abs() < 1e-12);
        let a = log_dirichlet_density(&[0.2, 0.3, 0.5], &[0.7, 0.7, 0.7]).unwrap();
        let b = log_dirichlet_density(&[0.5, 0.2, 0.3], &[0.7, 0.7, 0.7]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(log_dirichlet_density(&[0.0, 1.0], &[0.5, 0.5]).is_err());
        let sym = log_symmetric_dirichlet(&[0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()], 0.7);
        assert!((sym - a).abs() < 1e-12);
    }

    #[test]
    fn a_prior_integrates_to_one() {
        for scale in [1.0, 5.0, 100.0] {
            let total = integrate_half_line(|a| log_default_prior_a(a, scale).unwrap().exp(), scale, 1e-10);
            assert!((total - 1.0).abs() < 1e-6, "scale {scale}: {total}");
        }
    }

    #[test]
    fn a_prior_cdf_and_median() {
        // The Beta(0.5, 1) CDF is sqrt(u), so P(a <= x) = sqrt(x / (x + p)).
        // Its median is p / 3; at p / 4 the CDF is sqrt(1/5).
        let p: f64 = 20.0;
        let cdf = |x: f64| {
            crate::oracle::quadrature::adaptive_simpson(
                |v| {
                    // substitute a = v^2 to tame the integrable singularity at 0
                    if v == 0.0 {
                        return 1.0 / p.sqrt();
                    }
                    2.0 * v * log_default_prior_a(v * v, p).unwrap().exp()
                },
                0.0,
                x.sqrt(),
                1e-12,
            )
        };
        assert!((cdf(p / 3.0) - 0.5).abs() < 1e-6);
        assert!((cdf(p / 4.0) - 0.2f64.sqrt()).abs() < 1e-6);
        let near = log_default_prior_a(1e-4, p).unwrap();
        let far = log_default_prior_a(1e-2, p).unwrap();
        assert!(near > far);
        assert!(log_default_prior_a(0.0, p).is_err());
    }

    #[test]
    fn bandwidth_prior() {
        let v = log_prior_bandwidth(0.1, 0.1).unwrap();
        assert!((v - (10f64.ln() - 1.0)).abs() < 1e-12);
        assert!((log_prior_bandwidth(1e-12, 0.1).unwrap() - 10f64.ln()).abs() < 1e-9);
        assert!(log_prior_bandwidth(0.0, 0.1).is_err());
        let total = integrate_half_line(|t| log_prior_bandwidth(t, 0.1).unwrap().exp(), 0.1, 1e-10);
        assert!((total - 1.0).abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_bandwidth_prior(0.1, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.1).abs() < 0.002);
    }

    #[test]
    fn half_cauchy_density() {
        let scale = 0.25;
        let at_scale = log_half_cauchy(scale, scale).unwrap();
        assert!((at_scale - (1.0 / (std::f64::consts::PI * scale)).ln()).abs() < 1e-12);
        assert!((at_scale - 0.241_564_475_270_490_4).abs() < 1e-9);
        let cdf = crate::oracle::quadrature::adaptive_simpson(
            |x| log_half_cauchy(x.max(1e-300), scale).unwrap().exp(),
            0.0,
            scale,
            1e-13,
        );
        assert!((cdf - 0.5).abs() < 1e-9);
        let total = integrate_half_line(|x| log_half_cauchy(x, 1.3).unwrap().exp(), 1.3, 1e-10);
        assert!((total - 1.0).abs() < 1e-6);
        assert!(log_half_cauchy(0.0, 1.0).is_err());
        assert!(log_half_cauchy(1.0, -1.0).is_err());
    }

    #[test]
    fn grouped_splitting_proportions() {
        let one = GroupStructure::new(vec![0, 0, 0, 0]).unwrap();
        assert_eq!(grouped_s(&[1.0], &one).unwrap(), vec![0.25; 4]);
        let g = GroupStructure::new(vec![0, 1, 1]).unwrap();
        assert_eq!(grouped_s(&[0.5, 0.5], &g).unwrap(), vec![0.5, 0.25, 0.25]);
        let g = GroupStructure::new(vec![1, 0, 1, 1]).unwrap();
        let s = grouped_s(&[0.4, 0.6], &g).unwrap();
        assert_eq!(s[0], s[2]);
        assert_eq!(s[2], s[3]);
        assert!(GroupStructure::new(vec![0, 2]).is_err());
    }

    #[test]
    fn distinct_predictor_count_matches_limit_law() {
        // With B branches and s ~ Dirichlet(a/p), the number of distinct
        // predictors has mean close to 1 + a * sum_{i<B} 1/(a+i) for large p.
        let (p, a, b) = (1000usize, 1.0, 50usize);
        let theta: f64 = (1..b).map(|i| a / (a + i as f64)).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let reps = 4000;
        let mut counts = Vec::with_capacity(reps);
        for _ in 0..reps {
            let s = crate::random::sample_dirichlet(&vec![a / p as f64; p], &mut rng);
            let mut used = vec![false; p];
            for _ in 0..b {
                used[categorical(&s, &mut rng)] = true;
            }
            counts.push(used.iter().filter(|&&u| u).count() as f64);
        }
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - (1.0 + theta)).abs() < 5.0 * se, "{mean} vs {}", 1.0 + theta);
    }

    #[test]
    fn prior_a_sampler_matches_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = 10.0;
        let n = 100_000;
        let below = (0..n).filter(|_| sample_prior_a(0.5, 1.0, p, &mut rng) <= p / 3.0).count();
        assert!((below as f64 / n as f64 - 0.5).abs() < 0.006);
    }

    #[test]
    fn tree_prior_density_of_stump() {
        let prior = TreePrior::default();
        let t = SoftTree::stump(1, 0.3, 0.0, 0.0, 0.1);
        let log_s = [0.25f64.ln(), 0.75f64.ln()];
        let lp = log_tree_prior(&t, &prior, &log_s, &CutpointRule::Continuous, None);
        let q1 = branch_prob(1, &prior);
        let expected = 0.95f64.ln() + 0.75f64.ln() + 2.0 * (1.0 - q1).ln();
        assert!((lp - expected).abs() < 1e-12);
        assert_eq!(
            log_tree_prior(&t, &prior, &log_s, &CutpointRule::Continuous, Some(1)),
            f64::NEG_INFINITY
        );
    }
}

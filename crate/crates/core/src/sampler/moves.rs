//! Birth, Death and Change proposals for a single tree.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::MoveProbs;
use crate::priors::{draw_rule, log_rule_density, log_tree_prior, CutpointRule, TreePrior};
use crate::tree::SoftTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveKind {
    Birth,
    Death,
    Change,
}

impl MoveKind {
    pub fn sample<R: Rng + ?Sized>(probs: &MoveProbs, rng: &mut R) -> MoveKind {
        let u: f64 = rng.random();
        if u < probs.birth {
            MoveKind::Birth
        } else if u < probs.birth + probs.death {
            MoveKind::Death
        } else {
            MoveKind::Change
        }
    }
}

/// Everything the tree prior depends on besides the tree itself.
#[derive(Clone, Debug)]
pub struct TreeContext<'a> {
    pub prior: &'a TreePrior,
    pub s: &'a [f64],
    pub log_s: &'a [f64],
    pub cutpoints: &'a CutpointRule,
    pub max_leaves: Option<usize>,
    pub move_probs: &'a MoveProbs,
}

impl TreeContext<'_> {
    pub fn log_prior(&self, tree: &SoftTree) -> f64 {
        log_tree_prior(tree, self.prior, self.log_s, self.cutpoints, self.max_leaves)
    }
}

#[derive(Clone, Debug)]
pub struct Proposal {
    pub kind: MoveKind,
    pub tree: SoftTree,
    /// `log q(old | new) - log q(new | old)`.
    pub log_proposal_ratio: f64,
    /// `log pi(new) - log pi(old)` under the tree prior.
    pub log_prior_ratio: f64,
}

impl Proposal {
    /// Log acceptance ratio given the marginal log likelihoods of both trees.
    pub fn log_acceptance(&self, log_marginal_old: f64, log_marginal_new: f64) -> f64 {
        log_marginal_new - log_marginal_old + self.log_prior_ratio + self.log_proposal_ratio
    }
}

/// Draws a proposal of the requested kind. Returns `None` when the move is
/// impossible from this tree (no branch to prune or change, or no admissible
/// grid cutpoint); callers count that as a rejection.
pub fn propose_tree_move<R: Rng + ?Sized>(
    tree: &SoftTree,
    kind: MoveKind,
    ctx: &TreeContext<'_>,
    rng: &mut R,
) -> Option<Proposal> {
    let probs = ctx.move_probs;
    let (new_tree, log_fwd, log_rev) = match kind {
        MoveKind::Birth => {
            let leaves = tree.leaf_ids();
            let leaf = leaves[rng.random_range(0..leaves.len())];
            let (j, c) = draw_rule(tree, leaf, ctx.s, ctx.cutpoints, rng)?;
            let log_fwd = probs.birth.ln() - (leaves.len() as f64).ln()
                + log_rule_density(tree, leaf, j, c, ctx.log_s, ctx.cutpoints);
            let mut grown = tree.clone();
            grown.split_leaf(leaf, j, c).ok()?;
            let log_rev = probs.death.ln() - (grown.prunable_ids().len() as f64).ln();
            (grown, log_fwd, log_rev)
        }
        MoveKind::Death => {
            let prunable = tree.prunable_ids();
            if prunable.is_empty() {
                return None;
            }
            let b = prunable[rng.random_range(0..prunable.len())];
            let (j, c) = tree.node(b).rule().unwrap();
            let log_fwd = probs.death.ln() - (prunable.len() as f64).ln();
            let mut pruned = tree.clone();
            pruned.prune(b).ok()?;
            let log_rev = probs.birth.ln() - (pruned.leaf_count() as f64).ln()
                + log_rule_density(&pruned, b, j, c, ctx.log_s, ctx.cutpoints);
            (pruned, log_fwd, log_rev)
        }
        MoveKind::Change => {
            let branches = tree.branch_ids();
            if branches.is_empty() {
                return None;
            }
            let b = branches[rng.random_range(0..branches.len())];
            let (j_old, c_old) = tree.node(b).rule().unwrap();
            let (j, c) = draw_rule(tree, b, ctx.s, ctx.cutpoints, rng)?;
            // the choice of branch is symmetric and cancels
            let log_fwd = log_rule_density(tree, b, j, c, ctx.log_s, ctx.cutpoints);
            let log_rev = log_rule_density(tree, b, j_old, c_old, ctx.log_s, ctx.cutpoints);
            let mut changed = tree.clone();
            changed.set_rule(b, j, c).ok()?;
            (changed, log_fwd, log_rev)
        }
    };
    let log_prior_ratio = ctx.log_prior(&new_tree) - ctx.log_prior(tree);
    Some(Proposal {
        kind,
        tree: new_tree,
        log_proposal_ratio: log_rev - log_fwd,
        log_prior_ratio,
    })
}

/// Metropolis decision for a log acceptance ratio; NaN rejects.
pub fn metropolis_accept<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    if log_alpha.is_nan() {
        return false;
    }
    if log_alpha >= 0.0 {
        return true;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    u.ln() < log_alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::branch_prob;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx<'a>(prior: &'a TreePrior, s: &'a [f64], log_s: &'a [f64], cut: &'a CutpointRule, mp: &'a MoveProbs) -> TreeContext<'a> {
        TreeContext {
            prior,
            s,
            log_s,
            cutpoints: cut,
            max_leaves: None,
            move_probs: mp,
        }
    }

    #[test]
    fn death_and_change_skip_on_root() {
        let (prior, cut, mp) = (TreePrior::default(), CutpointRule::Continuous, MoveProbs::default());
        let s = [1.0];
        let ls = [0.0];
        let c = ctx(&prior, &s, &ls, &cut, &mp);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = SoftTree::root(0.1);
        assert!(propose_tree_move(&t, MoveKind::Death, &c, &mut rng).is_none());
        assert!(propose_tree_move(&t, MoveKind::Change, &c, &mut rng).is_none());
    }

    #[test]
    fn birth_then_death_is_identity_with_opposite_ratios() {
        let (prior, cut, mp) = (TreePrior::default(), CutpointRule::Continuous, MoveProbs::default());
        let s = [0.3, 0.7];
        let ls = [0.3f64.ln(), 0.7f64.ln()];
        let c = ctx(&prior, &s, &ls, &cut, &mp);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = SoftTree::stump(0, 0.4, 0.0, 0.0, 0.1);
        let birth = propose_tree_move(&t, MoveKind::Birth, &c, &mut rng).unwrap();
        assert_eq!(birth.tree.leaf_count(), 3);
        // the new branch is the only prunable node besides possibly none
        let new_branch = birth
            .tree
            .prunable_ids()
            .into_iter()
            .find(|&b| !t.node(b).is_branch() || b != 0)
            .unwrap();
        let mut back = birth.tree.clone();
        back.prune(new_branch).unwrap();
        assert_eq!(back, t);

        // the death proposal from the grown tree back to t must carry exactly
        // the negated ratios
        let mut found = false;
        for seed in 0..50 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let death = propose_tree_move(&birth.tree, MoveKind::Death, &c, &mut r).unwrap();
            if death.tree == t {
                assert!((death.log_proposal_ratio + birth.log_proposal_ratio).abs() < 1e-12);
                assert!((death.log_prior_ratio + birth.log_prior_ratio).abs() < 1e-12);
                found = true;
                break;
            }
        }
        assert!(found);
    }

    #[test]
    fn birth_ratio_from_root() {
        // From the root: prior ratio q0 (1-q1)^2 / (1-q0) times the rule
        // density, proposal ratio (p_D / 1) / (p_B / 1 * rule density).
        let (prior, cut, mp) = (TreePrior::default(), CutpointRule::Continuous, MoveProbs::default());
        let s = [1.0];
        let ls = [0.0];
        let c = ctx(&prior, &s, &ls, &cut, &mp);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = propose_tree_move(&SoftTree::root(0.1), MoveKind::Birth, &c, &mut rng).unwrap();
        let q0 = branch_prob(0, &prior);
        let q1 = branch_prob(1, &prior);
        let total = p.log_prior_ratio + p.log_proposal_ratio;
        let expected = (q0 * (1.0 - q1).powi(2) / (1.0 - q0)).ln();
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn change_to_same_rule_has_zero_ratio() {
        let (prior, mp) = (TreePrior::default(), MoveProbs::default());
        let cut = CutpointRule::Grid(vec![0.5]);
        let s = [1.0];
        let ls = [0.0];
        let c = ctx(&prior, &s, &ls, &cut, &mp);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = SoftTree::stump(0, 0.5, 0.0, 0.0, 0.1);
        let p = propose_tree_move(&t, MoveKind::Change, &c, &mut rng).unwrap();
        assert_eq!(p.tree, t);
        assert_eq!(p.log_acceptance(-3.0, -3.0), 0.0);
        assert!(metropolis_accept(0.0, &mut rng));
    }

    #[test]
    fn change_invalidating_descendant_is_impossible() {
        // parent at 0.5, left child at 0.25; moving the parent below 0.25 puts
        // the child outside its reachable interval
        let prior = TreePrior::default();
        let mp = MoveProbs::default();
        let cut = CutpointRule::Continuous;
        let s = [1.0];
        let ls = [0.0];
        let c = ctx(&prior, &s, &ls, &cut, &mp);
        let mut t = SoftTree::stump(0, 0.5, 0.0, 0.0, 0.1);
        t.split_leaf(1, 0, 0.25).unwrap();
        let mut moved = t.clone();
        moved.set_rule(0, 0, 0.2).unwrap();
        assert_eq!(c.log_prior(&moved), f64::NEG_INFINITY);
    }

    #[test]
    fn nan_and_neg_inf_reject() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(!metropolis_accept(f64::NAN, &mut rng));
        assert!(!metropolis_accept(f64::NEG_INFINITY, &mut rng));
    }
}

//! Soft decision trees stored as a flat node arena.
//!
//! Node 0 is always the root. After every structural edit the arena is
//! renumbered in preorder, so two trees with the same shape and rules compare
//! equal and leaves are always enumerated left to right.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SbartError};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    /// Decision rule `x[predictor] <= cutpoint` (left), softened by the gate.
    Branch {
        predictor: usize,
        cutpoint: f64,
        left: NodeId,
        right: NodeId,
    },
    Leaf {
        mu: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub depth: u32,
    pub parent: Option<NodeId>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn is_branch(&self) -> bool {
        !self.is_leaf()
    }

    pub fn children(&self) -> Option<(NodeId, NodeId)> {
        match self.kind {
            NodeKind::Branch { left, right, .. } => Some((left, right)),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn rule(&self) -> Option<(usize, f64)> {
        match self.kind {
            NodeKind::Branch {
                predictor,
                cutpoint,
                ..
            } => Some((predictor, cutpoint)),
            NodeKind::Leaf { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftTree {
    nodes: Vec<Node>,
    bandwidth: f64,
}

impl SoftTree {
    /// A single leaf with value zero.
    pub fn root(bandwidth: f64) -> Self {
        SoftTree {
            nodes: vec![Node {
                kind: NodeKind::Leaf { mu: 0.0 },
                depth: 0,
                parent: None,
            }],
            bandwidth,
        }
    }

    /// One split with the given leaf values.
    pub fn stump(predictor: usize, cutpoint: f64, left_mu: f64, right_mu: f64, bandwidth: f64) -> Self {
        let mut tree = SoftTree::root(bandwidth);
        tree.split_leaf(0, predictor, cutpoint)
            .expect("root of a fresh tree is a leaf");
        tree.set_leaf_values(&[left_mu, right_mu])
            .expect("stump has two leaves");
        tree
    }

    /// Rebuilds a tree from a stored arena, checking it against `p` predictors.
    pub fn from_nodes(nodes: Vec<Node>, bandwidth: f64, p: usize) -> Result<Self> {
        let tree = SoftTree { nodes, bandwidth };
        tree.validate(p)?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn set_bandwidth(&mut self, bandwidth: f64) {
        self.bandwidth = bandwidth;
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn branch_count(&self) -> usize {
        self.nodes.len() - self.leaf_count()
    }

    pub fn max_depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Leaf ids, left to right.
    pub fn leaf_ids(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_leaf())
            .collect()
    }

    pub fn branch_ids(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_branch())
            .collect()
    }

    /// Branches whose two children are both leaves (the candidates for pruning).
    pub fn prunable_ids(&self) -> Vec<NodeId> {
        self.branch_ids()
            .into_iter()
            .filter(|&b| {
                let (l, r) = self.nodes[b].children().unwrap();
                self.nodes[l].is_leaf() && self.nodes[r].is_leaf()
            })
            .collect()
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Leaf { mu } => Some(mu),
                NodeKind::Branch { .. } => None,
            })
            .collect()
    }

    pub fn set_leaf_values(&mut self, values: &[f64]) -> Result<()> {
        let leaves = self.leaf_ids();
        if leaves.len() != values.len() {
            return Err(SbartError::structure(format!(
                "tree has {} leaves but {} values were supplied",
                leaves.len(),
                values.len()
            )));
        }
        for (&id, &v) in leaves.iter().zip(values) {
            self.nodes[id].kind = NodeKind::Leaf { mu: v };
        }
        Ok(())
    }

    /// Split counts per predictor, accumulated into `counts`.
    pub fn accumulate_split_counts(&self, counts: &mut [usize]) {
        for node in &self.nodes {
            if let Some((j, _)) = node.rule() {
                counts[j] += 1;
            }
        }
    }

    /// Interval of `predictor` values that can reach `node` under the hard
    /// version of the ancestor decision rules.
    pub fn reachable_interval(&self, node: NodeId, predictor: usize) -> (f64, f64) {
        let mut lo: f64 = 0.0;
        let mut hi: f64 = 1.0;
        let mut child = node;
        while let Some(parent) = self.nodes[child].parent {
            if let NodeKind::Branch {
                predictor: j,
                cutpoint,
                left,
                ..
            } = self.nodes[parent].kind
            {
                if j == predictor {
                    if child == left {
                        hi = hi.min(cutpoint);
                    } else {
                        lo = lo.max(cutpoint);
                    }
                }
            }
            child = parent;
        }
        (lo, hi)
    }

    /// Turns a leaf into a branch with two zero-valued leaf children.
    /// Returns the ids of the new (left, right) children.
    pub fn split_leaf(&mut self, leaf: NodeId, predictor: usize, cutpoint: f64) -> Result<(NodeId, NodeId)> {
        if leaf >= self.nodes.len() || !self.nodes[leaf].is_leaf() {
            return Err(SbartError::structure(format!("node {leaf} is not a leaf")));
        }
        let depth = self.nodes[leaf].depth + 1;
        let left = self.nodes.len();
        let right = left + 1;
        for _ in 0..2 {
            self.nodes.push(Node {
                kind: NodeKind::Leaf { mu: 0.0 },
                depth,
                parent: Some(leaf),
            });
        }
        self.nodes[leaf].kind = NodeKind::Branch {
            predictor,
            cutpoint,
            left,
            right,
        };
        self.renumber();
        let (l, r) = self.nodes[leaf].children().unwrap();
        Ok((l, r))
    }

    /// Collapses a branch whose children are both leaves into a single leaf.
    pub fn prune(&mut self, branch: NodeId) -> Result<()> {
        let (l, r) = self
            .nodes
            .get(branch)
            .and_then(|n| n.children())
            .ok_or_else(|| SbartError::structure(format!("node {branch} is not a branch")))?;
        if !(self.nodes[l].is_leaf() && self.nodes[r].is_leaf()) {
            return Err(SbartError::structure(format!(
                "branch {branch} has a non-leaf child"
            )));
        }
        self.nodes[branch].kind = NodeKind::Leaf { mu: 0.0 };
        self.renumber();
        Ok(())
    }

    pub fn set_rule(&mut self, branch: NodeId, new_predictor: usize, new_cutpoint: f64) -> Result<()> {
        match &mut self.nodes[branch].kind {
            NodeKind::Branch {
                predictor,
                cutpoint,
                ..
            } => {
                *predictor = new_predictor;
                *cutpoint = new_cutpoint;
                Ok(())
            }
            NodeKind::Leaf { .. } => Err(SbartError::structure(format!(
                "node {branch} is a leaf"
            ))),
        }
    }

    /// Rebuilds the arena in preorder, dropping unreachable nodes.
    fn renumber(&mut self) {
        let mut out: Vec<Node> = Vec::with_capacity(self.nodes.len());
        // (old id, new parent id, new slot in parent's children: 0 left, 1 right)
        let mut stack: Vec<(NodeId, Option<NodeId>, u8)> = vec![(0, None, 0)];
        while let Some((old, parent, side)) = stack.pop() {
            let new_id = out.len();
            let depth = parent.map_or(0, |p| out[p].depth + 1);
            let node = &self.nodes[old];
            out.push(Node {
                kind: node.kind.clone(),
                depth,
                parent,
            });
            if let Some(p) = parent {
                if let NodeKind::Branch { left, right, .. } = &mut out[p].kind {
                    if side == 0 {
                        *left = new_id;
                    } else {
                        *right = new_id;
                    }
                }
            }
            if let Some((l, r)) = node.children() {
                stack.push((r, Some(new_id), 1));
                stack.push((l, Some(new_id), 0));
            }
        }
        self.nodes = out;
    }

    /// Checks the arena invariants against a predictor count `p`.
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(SbartError::structure(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if self.nodes.is_empty() || self.nodes[0].parent.is_some() || self.nodes[0].depth != 0 {
            return Err(SbartError::structure("malformed root"));
        }
        let mut seen = vec![false; self.nodes.len()];
        seen[0] = true;
        for (id, node) in self.nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Leaf { mu } => {
                    if !mu.is_finite() {
                        return Err(SbartError::structure(format!("leaf {id} is not finite")));
                    }
                }
                NodeKind::Branch {
                    predictor,
                    cutpoint,
                    left,
                    right,
                } => {
                    if predictor >= p {
                        return Err(SbartError::structure(format!(
                            "branch {id} splits on predictor {predictor} but p = {p}"
                        )));
                    }
                    if !(0.0..=1.0).contains(&cutpoint) {
                        return Err(SbartError::structure(format!(
                            "branch {id} cutpoint {cutpoint} outside [0, 1]"
                        )));
                    }
                    for child in [left, right] {
                        let c = self.nodes.get(child).ok_or_else(|| {
                            SbartError::structure(format!("branch {id} has dangling child {child}"))
                        })?;
                        if c.parent != Some(id) || c.depth != node.depth + 1 || seen[child] {
                            return Err(SbartError::structure(format!(
                                "inconsistent link {id} -> {child}"
                            )));
                        }
                        seen[child] = true;
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(SbartError::structure("unreachable nodes in arena"));
        }
        Ok(())
    }
}

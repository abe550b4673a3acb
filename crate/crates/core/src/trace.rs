use serde::{Deserialize, Serialize};

use crate::ensemble::{total_split_counts, Ensemble};

/// One retained MCMC state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub ensemble: Ensemble,
    pub split_counts: Vec<usize>,
    pub sigma: f64,
    pub log_likelihood: f64,
}

impl PosteriorDraw {
    pub fn new(ensemble: Ensemble, log_likelihood: f64) -> Self {
        let split_counts = total_split_counts(&ensemble);
        let sigma = ensemble.sigma;
        PosteriorDraw {
            ensemble,
            split_counts,
            sigma,
            log_likelihood,
        }
    }
}

/// Acceptance bookkeeping for a chain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub tree_proposals: u64,
    pub tree_accepts: u64,
    pub birth: (u64, u64),
    pub death: (u64, u64),
    pub change: (u64, u64),
    pub bandwidth_proposals: u64,
    pub bandwidth_accepts: u64,
}

impl ChainDiagnostics {
    pub fn tree_acceptance(&self) -> f64 {
        ratio(self.tree_accepts, self.tree_proposals)
    }

    pub fn bandwidth_acceptance(&self) -> f64 {
        ratio(self.bandwidth_accepts, self.bandwidth_proposals)
    }

    pub fn merge(&mut self, other: &ChainDiagnostics) {
        self.tree_proposals += other.tree_proposals;
        self.tree_accepts += other.tree_accepts;
        for (mine, theirs) in [
            (&mut self.birth, other.birth),
            (&mut self.death, other.death),
            (&mut self.change, other.change),
        ] {
            mine.0 += theirs.0;
            mine.1 += theirs.1;
        }
        self.bandwidth_proposals += other.bandwidth_proposals;
        self.bandwidth_accepts += other.bandwidth_accepts;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub draws: Vec<PosteriorDraw>,
    pub diagnostics: ChainDiagnostics,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn num_predictors(&self) -> usize {
        self.draws.first().map_or(0, |d| d.split_counts.len())
    }

    /// Concatenates chains.
    pub fn pool(traces: Vec<Trace>) -> Trace {
        let mut out = Trace::default();
        for t in traces {
            out.diagnostics.merge(&t.diagnostics);
            out.draws.extend(t.draws);
        }
        out
    }
}

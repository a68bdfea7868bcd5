use rand::Rng as _;
use rayon::prelude::*;

use super::SkipGramParams;
use crate::error::{Error, Result};
use crate::hin::{Hin, NodeId, NodeType};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct WalkConfig {
    pub dim: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Lock-free multi-threaded skip-gram. Faster, not reproducible.
    pub parallel_skipgram: bool,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            walks_per_node: 10,
            walk_length: 40,
            window: 5,
            negatives: 5,
            epochs: 5,
            seed: 0,
            parallel_skipgram: false,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0
            || self.walks_per_node == 0
            || self.walk_length == 0
            || self.window == 0
            || self.negatives == 0
            || self.epochs == 0
        {
            return Err(Error::Config("walk parameters must be positive".into()));
        }
        if self.window >= self.walk_length {
            return Err(Error::Config(format!(
                "window ({}) must be smaller than walk_length ({})",
                self.window, self.walk_length
            )));
        }
        Ok(())
    }

    pub fn skipgram(&self) -> SkipGramParams {
        SkipGramParams {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            seed: rng::derive(self.seed, 1),
            parallel: self.parallel_skipgram,
            ..SkipGramParams::default()
        }
    }
}

/// Truncated uniform random walks over purchase edges, `walks_per_node`
/// of them from every user and item node.
///
/// Each start node owns a generator derived from `(seed, node)`, so the
/// result does not depend on thread scheduling.
pub fn generate_walks(hin: &Hin, cfg: &WalkConfig) -> Result<Vec<Vec<NodeId>>> {
    cfg.validate()?;
    let has_buy = hin
        .nodes_of(NodeType::User)
        .any(|u| !hin.buy_neighbors(u).is_empty());
    if !has_buy {
        return Err(Error::Contract("graph has no purchase edges to walk".into()));
    }
    let starts: Vec<NodeId> = hin
        .nodes()
        .filter(|&v| matches!(hin.node_type(v), NodeType::User | NodeType::Item))
        .collect();
    let per_node: Vec<Vec<Vec<NodeId>>> = starts
        .par_iter()
        .map(|&start| {
            let mut rng = rng::child_rng(cfg.seed, start.0 as u64);
            (0..cfg.walks_per_node)
                .map(|_| {
                    let mut walk = Vec::with_capacity(cfg.walk_length);
                    walk.push(start);
                    let mut cur = start;
                    while walk.len() < cfg.walk_length {
                        let nbrs = hin.buy_neighbors(cur);
                        if nbrs.is_empty() {
                            break;
                        }
                        cur = nbrs[rng.gen_range(0..nbrs.len())];
                        walk.push(cur);
                    }
                    walk
                })
                .collect()
        })
        .collect();
    Ok(per_node.into_iter().flatten().collect())
}

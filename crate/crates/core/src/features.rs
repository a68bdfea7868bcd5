//! Model inputs looked up from the trained upstream artifacts.

use crate::embed::Embeddings;
use crate::error::{Error, Result};
use crate::hin::{Hin, NodeId};
use crate::linalg::Matrix;
use crate::metapath::PairKey;
use crate::model::{Candidate, Model, SequenceExample, Target};
use crate::path_encoder::{EncodedPaths, PathEncoder};

/// Walk embeddings plus on-demand encoded path sets.
pub struct Features<'a> {
    pub vectors: &'a Embeddings,
    pub paths: &'a PathEncoder<'a>,
}

/// A history prefix ready for the model.
#[derive(Clone, Debug)]
pub struct History {
    pub user: Vec<f64>,
    pub user_paths: Matrix,
    pub items: Vec<Vec<f64>>,
    pub item_paths: Vec<Matrix>,
}

impl<'a> Features<'a> {
    pub fn new(vectors: &'a Embeddings, paths: &'a PathEncoder<'a>) -> Result<Self> {
        if vectors.dim() != paths.dim() {
            return Err(Error::DimensionMismatch {
                expected: vectors.dim(),
                got: paths.dim(),
            });
        }
        Ok(Self { vectors, paths })
    }

    pub fn hin(&self) -> &'a Hin {
        self.paths.hin()
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn vector(&self, v: NodeId) -> Result<Vec<f64>> {
        self.vectors.get(v).map(<[f64]>::to_vec).ok_or(Error::UnknownNode(v))
    }

    /// Paths from `from` to `to` in the context of `user`; `from == user`
    /// selects the user–item schemas.
    pub fn encoded(&self, user: NodeId, from: NodeId, to: NodeId, cache: bool) -> Result<EncodedPaths> {
        let key = if from == user {
            PairKey::user_item(user, to)
        } else {
            PairKey::item_item(user, from, to)
        };
        if cache {
            self.paths.pair(key)
        } else {
            self.paths.pair_uncached(key)
        }
    }

    pub fn paths(&self, user: NodeId, from: NodeId, to: NodeId, cache: bool) -> Result<Matrix> {
        Ok(self.encoded(user, from, to, cache)?.matrix)
    }

    pub fn history(&self, user: NodeId, items: &[NodeId]) -> Result<History> {
        let first = *items
            .first()
            .ok_or_else(|| Error::Contract("empty history".into()))?;
        Ok(History {
            user: self.vector(user)?,
            user_paths: self.paths(user, user, first, true)?,
            items: items.iter().map(|&i| self.vector(i)).collect::<Result<_>>()?,
            item_paths: items
                .windows(2)
                .map(|w| self.paths(user, w[0], w[1], true))
                .collect::<Result<_>>()?,
        })
    }

    pub fn candidate(&self, user: NodeId, prev: Option<NodeId>, item: NodeId, cache: bool) -> Result<Candidate> {
        Ok(Candidate {
            item: self.vector(item)?,
            paths: self.paths(user, prev.unwrap_or(user), item, cache)?,
        })
    }

    /// Training example over `items` scoring every position, with
    /// `negatives[t]` as the alternatives at position `t`.
    pub fn example(&self, user: NodeId, items: &[NodeId], negatives: &[Vec<NodeId>]) -> Result<SequenceExample> {
        let h = self.history(user, items)?;
        let targets = negatives
            .iter()
            .enumerate()
            .map(|(t, negs)| {
                let prev = if t == 0 { None } else { Some(items[t - 1]) };
                Ok(Target {
                    position: t,
                    negatives: negs
                        .iter()
                        .map(|&j| self.candidate(user, prev, j, false))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SequenceExample {
            user: h.user,
            user_paths: h.user_paths,
            items: h.items,
            item_paths: h.item_paths,
            targets,
        })
    }

    /// Logits of `candidates` as the purchase following `history`.
    pub fn score_after(&self, model: &Model, user: NodeId, history: &[NodeId], candidates: &[NodeId]) -> Result<Vec<f64>> {
        let h = self.history(user, history)?;
        let state = model.history_state(&h.user_paths, &h.items, &h.item_paths)?;
        let prev = *history.last().unwrap();
        candidates
            .iter()
            .map(|&c| {
                let paths = self.paths(user, prev, c, false)?;
                model.next_logit(&h.user, &state, &self.vector(c)?, &paths)
            })
            .collect()
    }
}


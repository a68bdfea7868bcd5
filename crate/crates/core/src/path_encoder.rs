//! Path instances as sentences: skip-gram over their node tokens, then
//! mean pooling of token vectors into one vector per instance.

use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::embed::{train_skipgram, Embeddings, SkipGramParams};
use crate::error::{Error, Result};
use crate::hin::{Hin, NodeId, NodeType};
use crate::linalg::Matrix;
use crate::metapath::{MetaPathSchema, PairCorpus, PairKey, PairPathSet, PathInstance, PathSource};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TokenConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Random schema-conforming walks started from every user/item node per
    /// schema, appended to the sampled corpus so that nodes only ever seen
    /// as evaluation candidates still receive a token vector. 0 disables.
    pub walks_per_schema: usize,
    pub seed: u64,
}

impl Default for TokenConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 2,
            negatives: 5,
            epochs: 20,
            walks_per_schema: 1,
            seed: 0,
        }
    }
}

/// One random walk whose node types follow `schema`, stopping early at a
/// node without neighbours of the next type.
fn schema_walk(hin: &Hin, schema: &MetaPathSchema, start: NodeId, r: &mut rng::Rng) -> Vec<NodeId> {
    let mut walk = vec![start];
    for &t in &schema.types()[1..] {
        let nbrs = hin.typed_neighbors(*walk.last().unwrap(), t);
        match nbrs.choose(r) {
            Some(&n) => walk.push(n),
            None => break,
        }
    }
    walk
}

/// Token sentences: every sampled instance in corpus order, followed by the
/// augmentation walks.
pub fn token_sentences(
    hin: &Hin,
    corpus: &PairCorpus,
    schemas: &[MetaPathSchema],
    cfg: &TokenConfig,
) -> Vec<Vec<NodeId>> {
    let mut out: Vec<Vec<NodeId>> = corpus
        .values()
        .flat_map(|set| set.instances.iter().map(|inst| inst.nodes.clone()))
        .collect();
    if cfg.walks_per_schema == 0 {
        return out;
    }
    let mut r = rng::child_rng(cfg.seed, 1);
    for schema in schemas {
        for v in hin.nodes_of(schema.first()) {
            for _ in 0..cfg.walks_per_schema {
                let w = schema_walk(hin, schema, v, &mut r);
                if w.len() > 1 {
                    out.push(w);
                }
            }
        }
    }
    out
}

/// Token vectors for every node that appears in a path sentence.
pub fn train_path_tokens(
    hin: &Hin,
    corpus: &PairCorpus,
    schemas: &[MetaPathSchema],
    cfg: &TokenConfig,
) -> Result<Embeddings> {
    let sentences = token_sentences(hin, corpus, schemas, cfg);
    if sentences.is_empty() {
        return Err(Error::Contract("path corpus is empty".into()));
    }
    let params = SkipGramParams {
        dim: cfg.dim,
        window: cfg.window,
        negatives: cfg.negatives,
        epochs: cfg.epochs,
        seed: rng::derive(cfg.seed, 2),
        parallel: false,
        ..SkipGramParams::default()
    };
    Ok(train_skipgram(&sentences, hin.num_nodes(), &params)?.embeddings)
}

/// Mean of the token vectors of the instance's nodes.
pub fn encode_instance(inst: &PathInstance, tokens: &Embeddings) -> Result<Vec<f64>> {
    let mut out = vec![0.0; tokens.dim()];
    for &v in &inst.nodes {
        let t = tokens.get(v).ok_or(Error::MissingToken(v))?;
        for (o, x) in out.iter_mut().zip(t) {
            *o += x;
        }
    }
    let n = inst.nodes.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// One row per instance, in instance order.
pub fn encode_pair(set: &PairPathSet, tokens: &Embeddings) -> Result<Matrix> {
    let rows = set
        .instances
        .iter()
        .map(|inst| encode_instance(inst, tokens))
        .collect::<Result<Vec<_>>>()?;
    Ok(Matrix::from_rows(&rows, tokens.dim()))
}

/// The instances of a pair that could be encoded, with their rows.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedPaths {
    pub instances: Vec<PathInstance>,
    pub matrix: Matrix,
}

impl EncodedPaths {
    pub fn empty(dim: usize) -> Self {
        Self {
            instances: Vec::new(),
            matrix: Matrix::zeros(0, dim),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Like [`encode_pair`] but drops instances containing a node without a
/// token vector.
pub fn encode_available(set: &PairPathSet, tokens: &Embeddings) -> EncodedPaths {
    let mut instances = Vec::new();
    let mut rows = Vec::new();
    for inst in &set.instances {
        if let Ok(row) = encode_instance(inst, tokens) {
            instances.push(inst.clone());
            rows.push(row);
        }
    }
    EncodedPaths {
        instances,
        matrix: Matrix::from_rows(&rows, tokens.dim()),
    }
}

/// Encoded path sets on demand for any pair.
pub struct PathEncoder<'a> {
    source: PathSource<'a>,
    tokens: &'a Embeddings,
}

impl<'a> PathEncoder<'a> {
    pub fn new(source: PathSource<'a>, tokens: &'a Embeddings) -> Self {
        Self { source, tokens }
    }

    pub fn dim(&self) -> usize {
        self.tokens.dim()
    }

    pub fn hin(&self) -> &'a Hin {
        self.source.hin()
    }

    pub fn source(&self) -> &PathSource<'a> {
        &self.source
    }

    pub fn tokens(&self) -> &'a Embeddings {
        self.tokens
    }

    pub fn pair(&self, key: PairKey) -> Result<EncodedPaths> {
        Ok(encode_available(&*self.source.get(key)?, self.tokens))
    }

    /// Same as [`PathEncoder::pair`] without growing the sampler cache.
    pub fn pair_uncached(&self, key: PairKey) -> Result<EncodedPaths> {
        Ok(encode_available(&*self.source.get_uncached(key)?, self.tokens))
    }

    pub fn shared(&self, key: PairKey) -> Result<Arc<PairPathSet>> {
        self.source.get(key)
    }
}

/// Nodes of `t` that ended up without a token vector.
pub fn uncovered(hin: &Hin, tokens: &Embeddings, t: NodeType) -> Vec<NodeId> {
    hin.nodes_of(t).filter(|&v| !tokens.contains(v)).collect()
}

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use super::sampler::{sample_pair, HopScorer, PathInstance, SamplerConfig};
use super::{MetaPathSchema, SchemaKind};
use crate::error::{Error, Result};
use crate::hin::{Hin, NodeId, NodeType, UserSequence};

/// Identifies one endpoint pair in the context of one user's sequence.
///
/// Item–item pairs carry the user so that paths can be kept from routing
/// through that user's own purchase edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairKey {
    pub user: NodeId,
    pub from: NodeId,
    pub to: NodeId,
}

impl PairKey {
    pub fn user_item(user: NodeId, item: NodeId) -> Self {
        Self {
            user,
            from: user,
            to: item,
        }
    }

    pub fn item_item(user: NodeId, from: NodeId, to: NodeId) -> Self {
        Self { user, from, to }
    }

    pub fn is_user_item(&self) -> bool {
        self.user == self.from
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PairPathSet {
    pub instances: Vec<PathInstance>,
}

impl PairPathSet {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

pub type PairCorpus = BTreeMap<PairKey, PairPathSet>;

/// Groups schemas by endpoint kind.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemaSet {
    pub user_item: Vec<MetaPathSchema>,
    pub item_item: Vec<MetaPathSchema>,
}

impl SchemaSet {
    pub fn new(schemas: &[MetaPathSchema]) -> Self {
        let (user_item, item_item) = schemas.iter().partition(|s| s.kind() == SchemaKind::UserItem);
        Self { user_item, item_item }
    }

    pub fn defaults() -> Self {
        Self {
            user_item: super::schema::default_user_item(),
            item_item: super::schema::default_item_item(),
        }
    }

    pub fn all(&self) -> Vec<MetaPathSchema> {
        self.user_item.iter().chain(&self.item_item).copied().collect()
    }
}

/// Sample the path set for a single pair.
pub fn sample_key(
    scorer: &HopScorer,
    schemas: &SchemaSet,
    key: PairKey,
    cfg: &SamplerConfig,
) -> Result<PairPathSet> {
    let instances = if key.is_user_item() {
        sample_pair(scorer, &schemas.user_item, key.from, key.to, None, cfg)?
    } else {
        sample_pair(scorer, &schemas.item_item, key.from, key.to, Some(key.user), cfg)?
    };
    Ok(PairPathSet { instances })
}

/// Pairs used by training: `(user, first item)` and each consecutive pair
/// of `bridge ‖ train`.
pub fn training_pairs(seq: &UserSequence) -> Vec<PairKey> {
    let hist = seq.history();
    let mut out = Vec::with_capacity(hist.len());
    if let Some(&first) = hist.first() {
        out.push(PairKey::user_item(seq.user, first));
    }
    for w in hist.windows(2) {
        out.push(PairKey::item_item(seq.user, w[0], w[1]));
    }
    out
}

/// Path sets for every training pair of every sequence.
pub fn build_pair_corpus(
    scorer: &HopScorer,
    seqs: &[UserSequence],
    schemas: &SchemaSet,
    cfg: &SamplerConfig,
) -> Result<PairCorpus> {
    let per_user: Vec<Vec<(PairKey, PairPathSet)>> = seqs
        .par_iter()
        .map(|seq| {
            training_pairs(seq)
                .into_iter()
                .map(|key| Ok((key, sample_key(scorer, schemas, key, cfg)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_user.into_iter().flatten().collect())
}

/// One line per instance: `user_key<TAB>schema<TAB>node_key,...<TAB>score`.
///
/// Scores are written in shortest round-trip form so a reload is exact.
pub fn write_corpus<W: Write>(hin: &Hin, corpus: &PairCorpus, mut w: W) -> Result<()> {
    for (key, set) in corpus {
        for inst in &set.instances {
            let nodes: Vec<&str> = inst.nodes.iter().map(|&v| hin.key(v)).collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                hin.key(key.user),
                inst.schema,
                nodes.join(","),
                inst.score
            )?;
        }
    }
    Ok(())
}

/// Inverse of [`write_corpus`]. Pairs with no instances are not stored in
/// the dump and come back absent.
pub fn read_corpus<R: BufRead>(hin: &Hin, r: R) -> Result<PairCorpus> {
    let mut corpus = PairCorpus::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Corrupt {
            what: "path corpus",
            msg: format!("line {}: {msg}", i + 1),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields".into()));
        }
        let user = hin
            .lookup(NodeType::User, f[0])
            .ok_or_else(|| bad(format!("unknown user `{}`", f[0])))?;
        let schema: MetaPathSchema = f[1].parse()?;
        let keys: Vec<&str> = f[2].split(',').collect();
        if keys.len() != schema.len() {
            return Err(bad("node count does not match schema".into()));
        }
        let nodes = keys
            .iter()
            .zip(schema.types())
            .map(|(k, &t)| hin.lookup(t, k).ok_or_else(|| bad(format!("unknown {t:?} `{k}`"))))
            .collect::<Result<Vec<_>>>()?;
        let score: f64 = f[3].parse().map_err(|_| bad("bad score".into()))?;
        let key = match schema.kind() {
            SchemaKind::UserItem => PairKey::user_item(nodes[0], *nodes.last().unwrap()),
            SchemaKind::ItemItem => PairKey::item_item(user, nodes[0], *nodes.last().unwrap()),
        };
        corpus
            .entry(key)
            .or_default()
            .instances
            .push(PathInstance { schema, nodes, score });
    }
    Ok(corpus)
}

/// Serves path sets for any pair: precomputed ones from the corpus,
/// everything else sampled on demand with the same scorer and cached.
pub struct PathSource<'a> {
    scorer: HopScorer<'a>,
    schemas: SchemaSet,
    cfg: SamplerConfig,
    corpus: Option<&'a PairCorpus>,
    cache: RwLock<HashMap<PairKey, Arc<PairPathSet>>>,
    cache_limit: usize,
}

impl<'a> PathSource<'a> {
    pub fn new(
        scorer: HopScorer<'a>,
        schemas: SchemaSet,
        cfg: SamplerConfig,
        corpus: Option<&'a PairCorpus>,
    ) -> Self {
        Self {
            scorer,
            schemas,
            cfg,
            corpus,
            cache: RwLock::new(HashMap::new()),
            cache_limit: 1 << 20,
        }
    }

    pub fn with_cache_limit(mut self, limit: usize) -> Self {
        self.cache_limit = limit;
        self
    }

    pub fn hin(&self) -> &'a Hin {
        self.scorer.hin()
    }

    pub fn schemas(&self) -> &SchemaSet {
        &self.schemas
    }

    pub fn get(&self, key: PairKey) -> Result<Arc<PairPathSet>> {
        if let Some(set) = self.corpus.and_then(|c| c.get(&key)) {
            return Ok(Arc::new(set.clone()));
        }
        if let Some(set) = self.cache.read().unwrap().get(&key) {
            return Ok(Arc::clone(set));
        }
        let set = Arc::new(sample_key(&self.scorer, &self.schemas, key, &self.cfg)?);
        let mut cache = self.cache.write().unwrap();
        if cache.len() < self.cache_limit {
            cache.insert(key, Arc::clone(&set));
        }
        Ok(set)
    }

    /// Like [`PathSource::get`] but never stores the result.
    pub fn get_uncached(&self, key: PairKey) -> Result<Arc<PairPathSet>> {
        if let Some(set) = self.corpus.and_then(|c| c.get(&key)) {
            return Ok(Arc::new(set.clone()));
        }
        if let Some(set) = self.cache.read().unwrap().get(&key) {
            return Ok(Arc::clone(set));
        }
        Ok(Arc::new(sample_key(&self.scorer, &self.schemas, key, &self.cfg)?))
    }
}

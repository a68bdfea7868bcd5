//! Sampled-negative ranking evaluation: HR@K and NDCG@K.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::Features;
use crate::hin::{Hin, NodeId, NodeType, UserSequence};
use crate::model::{Ablation, Model};
use crate::rng;

pub const CUTOFFS: [usize; 4] = [1, 5, 10, 20];

/// 1-based rank of the positive; ties count against it.
pub fn rank_of(positive: f64, negatives: &[f64]) -> usize {
    1 + negatives.iter().filter(|&&s| s >= positive).count()
}

pub fn hit_ratio(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

pub fn ndcg(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    let gain: f64 = ranks
        .iter()
        .filter(|&&r| r <= k)
        .map(|&r| 1.0 / ((r + 1) as f64).log2())
        .sum();
    gain / ranks.len() as f64
}

/// `n` distinct items drawn uniformly from `pool` minus `exclude`; fewer
/// when not enough remain.
pub fn sample_negatives(pool: &[NodeId], exclude: &HashSet<NodeId>, n: usize, r: &mut rng::Rng) -> Vec<NodeId> {
    let available = pool.len() - pool.iter().filter(|v| exclude.contains(v)).count();
    if n * 2 < available {
        let mut picked = HashSet::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let v = pool[r.gen_range(0..pool.len())];
            if !exclude.contains(&v) && picked.insert(v) {
                out.push(v);
            }
        }
        out
    } else {
        let rest: Vec<NodeId> = pool.iter().copied().filter(|v| !exclude.contains(v)).collect();
        rest.choose_multiple(r, n.min(rest.len())).copied().collect()
    }
}

/// One ranking instance: a test item against its negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct TestCase {
    pub seq: usize,
    /// Index within the user's test segment.
    pub position: usize,
    pub user: NodeId,
    pub positive: NodeId,
    pub negatives: Vec<NodeId>,
}

/// Every test item of every sequence with its own negatives, drawn from
/// items the user never interacted with.
pub fn build_protocol(hin: &Hin, seqs: &[UserSequence], n_negatives: usize, seed: u64) -> Vec<TestCase> {
    let pool: Vec<NodeId> = hin.nodes_of(NodeType::Item).collect();
    seqs.par_iter()
        .enumerate()
        .flat_map_iter(|(s, seq)| {
            let exclude: HashSet<NodeId> = seq.all_items().into_iter().collect();
            let mut r = rng::child_rng(seed, s as u64);
            let pool = &pool;
            seq.test
                .iter()
                .enumerate()
                .map(|(p, &item)| TestCase {
                    seq: s,
                    position: p,
                    user: seq.user,
                    positive: item,
                    negatives: sample_negatives(pool, &exclude, n_negatives, &mut r),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Scores the positive of a case together with its negatives.
pub trait CaseScorer: Sync {
    fn scores(&self, seq: &UserSequence, case: &TestCase) -> Result<(f64, Vec<f64>)>;
}

/// Number of Buy edges of each item in the graph, i.e. purchases outside
/// the test segments.
pub struct Popularity {
    counts: Vec<f64>,
}

impl Popularity {
    pub fn new(hin: &Hin) -> Self {
        Self {
            counts: hin.nodes().map(|v| hin.buy_neighbors(v).len() as f64).collect(),
        }
    }

    pub fn get(&self, v: NodeId) -> f64 {
        self.counts[v.index()]
    }
}

impl CaseScorer for Popularity {
    fn scores(&self, _: &UserSequence, case: &TestCase) -> Result<(f64, Vec<f64>)> {
        Ok((self.get(case.positive), case.negatives.iter().map(|&v| self.get(v)).collect()))
    }
}

/// The trained model conditioned on the user's full bridge + train history.
pub struct ModelScorer<'a> {
    pub model: &'a Model,
    pub features: &'a Features<'a>,
}

impl CaseScorer for ModelScorer<'_> {
    fn scores(&self, seq: &UserSequence, case: &TestCase) -> Result<(f64, Vec<f64>)> {
        let mut cands = Vec::with_capacity(case.negatives.len() + 1);
        cands.push(case.positive);
        cands.extend(&case.negatives);
        let s = self.features.score_after(self.model, seq.user, &seq.history(), &cands)?;
        Ok((s[0], s[1..].to_vec()))
    }
}

pub fn rank_cases<S: CaseScorer>(scorer: &S, seqs: &[UserSequence], cases: &[TestCase]) -> Result<Vec<usize>> {
    cases
        .par_iter()
        .map(|c| {
            let (pos, negs) = scorer.scores(&seqs[c.seq], c)?;
            if !pos.is_finite() || negs.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite("candidate score"));
            }
            Ok(rank_of(pos, &negs))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cutoff {
    #[serde(rename = "HR")]
    pub hr: f64,
    #[serde(rename = "NDCG")]
    pub ndcg: f64,
}

pub fn metrics(ranks: &[usize]) -> BTreeMap<usize, Cutoff> {
    CUTOFFS
        .iter()
        .map(|&k| {
            (
                k,
                Cutoff {
                    hr: hit_ratio(ranks, k),
                    ndcg: ndcg(ranks, k),
                },
            )
        })
        .collect()
}

/// Metrics over all test items and over each user's first test item.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregates {
    pub instances: usize,
    pub all: BTreeMap<usize, Cutoff>,
    pub first_instances: usize,
    pub first: BTreeMap<usize, Cutoff>,
}

impl Aggregates {
    pub fn new(cases: &[TestCase], ranks: &[usize]) -> Self {
        let first: Vec<usize> = cases
            .iter()
            .zip(ranks)
            .filter(|(c, _)| c.position == 0)
            .map(|(_, &r)| r)
            .collect();
        Self {
            instances: ranks.len(),
            all: metrics(ranks),
            first_instances: first.len(),
            first: metrics(&first),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub dataset: String,
    pub seed: u64,
    pub ablation: String,
    pub negatives: usize,
    pub users: usize,
    pub model: Aggregates,
    pub popularity: Aggregates,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Ranks of every case under the model and the popularity baseline.
pub struct Evaluation {
    pub cases: Vec<TestCase>,
    pub model_ranks: Vec<usize>,
    pub popularity_ranks: Vec<usize>,
}

pub fn evaluate(features: &Features, model: &Model, seqs: &[UserSequence], n_negatives: usize, seed: u64) -> Result<Evaluation> {
    let hin = features.hin();
    let cases = build_protocol(hin, seqs, n_negatives, seed);
    let model_ranks = rank_cases(&ModelScorer { model, features }, seqs, &cases)?;
    let popularity_ranks = rank_cases(&Popularity::new(hin), seqs, &cases)?;
    Ok(Evaluation {
        cases,
        model_ranks,
        popularity_ranks,
    })
}

impl Evaluation {
    pub fn report(&self, dataset: &str, seed: u64, ablation: Ablation, negatives: usize, users: usize) -> Report {
        Report {
            dataset: dataset.to_string(),
            seed,
            ablation: ablation.to_string(),
            negatives,
            users,
            model: Aggregates::new(&self.cases, &self.model_ranks),
            popularity: Aggregates::new(&self.cases, &self.popularity_ranks),
        }
    }

    /// `user  test_position  item  negatives  rank  popularity_rank`
    pub fn write_ranks<W: Write>(&self, hin: &Hin, mut w: W) -> Result<()> {
        writeln!(w, "user\tposition\titem\tnegatives\trank\tpopularity_rank")?;
        for ((c, r), p) in self.cases.iter().zip(&self.model_ranks).zip(&self.popularity_ranks) {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{r}\t{p}",
                hin.key(c.user),
                c.position,
                hin.key(c.positive),
                c.negatives.len()
            )?;
        }
        Ok(())
    }
}

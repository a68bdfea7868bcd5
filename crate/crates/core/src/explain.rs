//! Attention-weighted item–item paths as explanations.

use std::fmt;

use crate::error::{Error, Result};
use crate::features::Features;
use crate::hin::{NodeId, UserSequence};
use crate::model::Model;

pub const NO_EVIDENCE: &str = "NO_EVIDENCE";

#[derive(Clone, Debug, PartialEq)]
pub struct ExplainedPath {
    pub schema: String,
    pub nodes: Vec<String>,
    pub weight: f64,
    /// Row of this path in the attention input.
    pub row: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationRecord {
    pub user: String,
    pub from: String,
    pub to: String,
    /// Sorted by weight, heaviest first.
    pub paths: Vec<ExplainedPath>,
}

impl ExplanationRecord {
    pub fn total_weight(&self) -> f64 {
        self.paths.iter().map(|p| p.weight).sum()
    }
}

impl fmt::Display for ExplanationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t", self.user, self.from, self.to)?;
        if self.paths.is_empty() {
            return f.write_str(NO_EVIDENCE);
        }
        for (k, p) in self.paths.iter().enumerate() {
            if k > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{} {} {:.4}", p.schema, p.nodes.join(","), p.weight)?;
        }
        Ok(())
    }
}

/// Paths from `from` to `to` weighted by the item–item attention the model
/// applies when scoring `to` after `from`.
pub fn explain_pair(model: &Model, features: &Features, user: NodeId, from: NodeId, to: NodeId) -> Result<ExplanationRecord> {
    if from == user {
        return Err(Error::Contract("explanations cover item-item pairs".into()));
    }
    let hin = features.hin();
    let enc = features.encoded(user, from, to, false)?;
    let att = model.item_item_attention(&enc.matrix)?;
    let mut paths: Vec<ExplainedPath> = enc
        .instances
        .iter()
        .zip(&att.weights)
        .enumerate()
        .map(|(row, (inst, &weight))| ExplainedPath {
            schema: inst.schema.to_string(),
            nodes: inst.nodes.iter().map(|&v| hin.key(v).to_string()).collect(),
            weight,
            row,
        })
        .collect();
    paths.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.row.cmp(&b.row)));
    Ok(ExplanationRecord {
        user: hin.key(user).to_string(),
        from: hin.key(from).to_string(),
        to: hin.key(to).to_string(),
        paths,
    })
}

/// One record per recommendation, each explained from the user's last
/// consumed item.
pub fn explain_topk(model: &Model, features: &Features, seq: &UserSequence, recommendations: &[NodeId]) -> Result<Vec<ExplanationRecord>> {
    let last = seq
        .last_train_item()
        .ok_or_else(|| Error::Contract("sequence has no history".into()))?;
    recommendations
        .iter()
        .map(|&to| explain_pair(model, features, seq.user, last, to))
        .collect()
}

/// The `k` best-scoring `candidates` after the user's history, best first.
pub fn recommend(model: &Model, features: &Features, seq: &UserSequence, candidates: &[NodeId], k: usize) -> Result<Vec<(NodeId, f64)>> {
    let scores = features.score_after(model, seq.user, &seq.history(), candidates)?;
    let mut ranked: Vec<(NodeId, f64)> = candidates.iter().copied().zip(scores).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

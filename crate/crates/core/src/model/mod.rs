//! Scoring model: path self-attention, gated item updates along the
//! purchase sequence, and a tower MLP over `[user; h1; h2]`.
//!
//! All gradients are derived by hand; walk embeddings and path encodings
//! are inputs, not parameters.

mod attention;
mod gate;
mod mlp;
mod params;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use attention::{attention_backward, self_attend, self_attend_cached, AttentionCache, AttentionOutput, AttentionParams};
pub use gate::{
    init_first_item, init_first_item_backward, init_first_item_cached, update_item, update_item_backward,
    update_item_cached, GateParams, ItemUpdate,
};
pub use mlp::{layer_sizes, logit, logit_cached, mlp_backward, sigmoid, Dense, MlpParams};
pub use params::{Adam, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Ablation {
    #[default]
    Full,
    /// No user–item path context.
    Rui,
    /// No item–item path context.
    Rii,
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "rui" => Ok(Self::Rui),
            "rii" => Ok(Self::Rii),
            _ => Err(Error::Config(format!("unknown ablation `{s}` (full, RUI, RII)"))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Rui => "RUI",
            Self::Rii => "RII",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossKind {
    /// `-log r⁺ - Σ log(1 - r⁻)`
    #[default]
    Standard,
    /// Only the expected negative term, `-mean log(1 - r⁻)`.
    PaperLiteral,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "paper-literal" => Ok(Self::PaperLiteral),
            _ => Err(Error::Config(format!("unknown loss `{s}` (standard, paper-literal)"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::PaperLiteral => "paper-literal",
        })
    }
}

/// A scored alternative at some sequence position.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub item: Vec<f64>,
    /// Encoded paths from the predecessor (or from the user, at position 0).
    pub paths: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub position: usize,
    pub negatives: Vec<Candidate>,
}

/// One user's history with cached upstream vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceExample {
    pub user: Vec<f64>,
    /// Paths from the user to `items[0]`.
    pub user_paths: Matrix,
    pub items: Vec<Vec<f64>>,
    /// `item_paths[t]` connects `items[t]` to `items[t + 1]`.
    pub item_paths: Vec<Matrix>,
    pub targets: Vec<Target>,
}

impl SequenceExample {
    fn check(&self, d: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::Contract(format!("sequence example: {msg}")));
        if self.items.is_empty() {
            return bad("no items");
        }
        if self.item_paths.len() + 1 != self.items.len() {
            return bad("item_paths must have one entry per consecutive pair");
        }
        let vecs = std::iter::once(&self.user).chain(&self.items);
        let mats = std::iter::once(&self.user_paths)
            .chain(&self.item_paths)
            .chain(self.targets.iter().flat_map(|t| t.negatives.iter().map(|c| &c.paths)));
        let cand_items = self.targets.iter().flat_map(|t| t.negatives.iter().map(|c| &c.item));
        for v in vecs.chain(cand_items) {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
        }
        for m in mats {
            if m.cols != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.cols,
                });
            }
        }
        if self.targets.iter().any(|t| t.position >= self.items.len()) {
            return bad("target position out of range");
        }
        Ok(())
    }
}

/// Model parameters plus the ablation applied at every forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub ablation: Ablation,
}

fn concat3(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() * 3);
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v.extend_from_slice(c);
    v
}

/// `sigmoid(MLP([h_u; h1; h2]))`
pub fn score(h_u: &[f64], h1: &[f64], h2: &[f64], mlp: &MlpParams) -> f64 {
    sigmoid(logit(&concat3(h_u, h1, h2), mlp))
}

/// `sigmoid(MLP([h_u; φu; h_first]))`
pub fn score_first(h_u: &[f64], user_path: &[f64], h_first: &[f64], mlp: &MlpParams) -> f64 {
    sigmoid(logit(&concat3(h_u, user_path, h_first), mlp))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Forward result of scoring one candidate after a known predecessor state.
#[derive(Clone, Debug, PartialEq)]
pub struct NextScore {
    pub logit: f64,
    /// Path weights used in this forward pass; `None` when the item–item
    /// context is ablated.
    pub attention: Option<AttentionOutput>,
}

impl Model {
    pub fn new(params: ModelParams, ablation: Ablation) -> Self {
        Self { params, ablation }
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    fn uses_user_paths(&self) -> bool {
        self.ablation != Ablation::Rui
    }

    fn uses_item_paths(&self) -> bool {
        self.ablation != Ablation::Rii
    }

    pub fn user_item_attention(&self, paths: &Matrix) -> Result<AttentionOutput> {
        self_attend(paths, &self.params.user_item)
    }

    pub fn item_item_attention(&self, paths: &Matrix) -> Result<AttentionOutput> {
        self_attend(paths, &self.params.item_item)
    }

    fn user_context(&self, paths: &Matrix) -> Result<(Vec<f64>, Option<AttentionCache>)> {
        if !self.uses_user_paths() {
            return Ok((vec![0.0; self.dim()], None));
        }
        let (out, cache) = self_attend_cached(paths, &self.params.user_item)?;
        Ok((out.context, Some(cache)))
    }

    fn item_context(&self, paths: &Matrix) -> Result<(Vec<f64>, Option<AttentionCache>, Option<AttentionOutput>)> {
        if !self.uses_item_paths() {
            return Ok((vec![0.0; self.dim()], None, None));
        }
        let (out, cache) = self_attend_cached(paths, &self.params.item_item)?;
        Ok((out.context.clone(), Some(cache), Some(out)))
    }

    /// Item state after the last of `items`.
    pub fn history_state(&self, user_paths: &Matrix, items: &[Vec<f64>], item_paths: &[Matrix]) -> Result<Vec<f64>> {
        if items.is_empty() || item_paths.len() + 1 != items.len() {
            return Err(Error::Contract("history needs one path set per consecutive pair".into()));
        }
        let (uctx, _) = self.user_context(user_paths)?;
        let mut state = init_first_item(&items[0], &uctx, &self.params.gates);
        for (item, paths) in items[1..].iter().zip(item_paths) {
            let (ctx, _, _) = self.item_context(paths)?;
            state = update_item(&state, item, &ctx, &self.params.gates).h2;
        }
        Ok(state)
    }

    /// Logit of `item` following a predecessor with state `state`.
    pub fn next_forward(&self, user: &[f64], state: &[f64], item: &[f64], paths: &Matrix) -> Result<NextScore> {
        let (ctx, _, attention) = self.item_context(paths)?;
        let u = update_item(state, item, &ctx, &self.params.gates);
        let logit = logit(&concat3(user, &u.h1, &u.h2), &self.params.mlp);
        Ok(NextScore { logit, attention })
    }

    pub fn next_logit(&self, user: &[f64], state: &[f64], item: &[f64], paths: &Matrix) -> Result<f64> {
        Ok(self.next_forward(user, state, item, paths)?.logit)
    }

    /// Logit of `item` as the user's first purchase.
    pub fn first_logit(&self, user: &[f64], item: &[f64], user_paths: &Matrix) -> Result<f64> {
        let (uctx, _) = self.user_context(user_paths)?;
        let s = init_first_item(item, &uctx, &self.params.gates);
        Ok(logit(&concat3(user, &uctx, &s), &self.params.mlp))
    }

    /// Loss and exact gradients for one sequence; the loss is summed over
    /// its targets. Returns `(loss, grads, targets)`.
    pub fn example_loss_and_grads(&self, ex: &SequenceExample, loss: LossKind) -> Result<(f64, ModelParams, usize)> {
        let d = self.dim();
        ex.check(d)?;
        let p = &self.params;
        let mut g = ModelParams::zeros(d, p.heads());
        if ex.targets.is_empty() {
            return Ok((0.0, g, 0));
        }
        let last = ex.targets.iter().map(|t| t.position).max().unwrap();

        // positive chain
        let (uctx, ucache) = self.user_context(&ex.user_paths)?;
        let (s0, first_cache) = init_first_item_cached(&ex.items[0], &uctx, &p.gates);
        let mut states = vec![s0];
        let mut h1s = vec![Vec::new()];
        let mut steps = Vec::with_capacity(last);
        for t in 1..=last {
            let (ctx, acache, _) = self.item_context(&ex.item_paths[t - 1])?;
            let (u, c) = update_item_cached(&states[t - 1], &ex.items[t], &ctx, &p.gates);
            h1s.push(u.h1);
            states.push(u.h2);
            steps.push((c, acache));
        }

        let mut d_state = vec![vec![0.0; d]; last + 1];
        let mut d_h1 = vec![vec![0.0; d]; last + 1];
        let mut d_uctx = vec![0.0; d];
        let mut total = 0.0;

        for target in &ex.targets {
            let t = target.position;
            let pos_in = if t == 0 {
                concat3(&ex.user, &uctx, &states[0])
            } else {
                concat3(&ex.user, &h1s[t], &states[t])
            };
            let (pos_logit, pos_cache) = logit_cached(&pos_in, &p.mlp);
            let n_neg = target.negatives.len();
            let (neg_weight, pos_grad) = match loss {
                LossKind::Standard => {
                    total += softplus(-pos_logit);
                    (1.0, sigmoid(pos_logit) - 1.0)
                }
                LossKind::PaperLiteral => (if n_neg == 0 { 0.0 } else { 1.0 / n_neg as f64 }, 0.0),
            };
            if pos_grad != 0.0 {
                let din = mlp_backward(&pos_cache, &p.mlp, pos_grad, &mut g.mlp);
                if t == 0 {
                    crate::linalg::axpy(&mut d_uctx, 1.0, &din[d..2 * d]);
                    crate::linalg::axpy(&mut d_state[0], 1.0, &din[2 * d..]);
                } else {
                    crate::linalg::axpy(&mut d_h1[t], 1.0, &din[d..2 * d]);
                    crate::linalg::axpy(&mut d_state[t], 1.0, &din[2 * d..]);
                }
            }
            for neg in &target.negatives {
                if t == 0 {
                    let (nctx, ncache) = self.user_context(&neg.paths)?;
                    let (s, fcache) = init_first_item_cached(&neg.item, &nctx, &p.gates);
                    let (l, mc) = logit_cached(&concat3(&ex.user, &nctx, &s), &p.mlp);
                    total += neg_weight * softplus(l);
                    let din = mlp_backward(&mc, &p.mlp, neg_weight * sigmoid(l), &mut g.mlp);
                    let mut dctx = init_first_item_backward(&fcache, &p.gates, &din[2 * d..], &mut g.gates);
                    crate::linalg::axpy(&mut dctx, 1.0, &din[d..2 * d]);
                    if let Some(c) = ncache {
                        attention_backward(&c, &p.user_item, &dctx, &mut g.user_item);
                    }
                } else {
                    let (nctx, ncache, _) = self.item_context(&neg.paths)?;
                    let (u, ucache_n) = update_item_cached(&states[t - 1], &neg.item, &nctx, &p.gates);
                    let (l, mc) = logit_cached(&concat3(&ex.user, &u.h1, &u.h2), &p.mlp);
                    total += neg_weight * softplus(l);
                    let din = mlp_backward(&mc, &p.mlp, neg_weight * sigmoid(l), &mut g.mlp);
                    let (dprev, dpath) =
                        update_item_backward(&ucache_n, &p.gates, &din[d..2 * d], &din[2 * d..], &mut g.gates);
                    crate::linalg::axpy(&mut d_state[t - 1], 1.0, &dprev);
                    if let Some(c) = ncache {
                        attention_backward(&c, &p.item_item, &dpath, &mut g.item_item);
                    }
                }
            }
        }

        for t in (1..=last).rev() {
            let (c, acache) = &steps[t - 1];
            let (dprev, dpath) = update_item_backward(c, &p.gates, &d_h1[t], &d_state[t], &mut g.gates);
            crate::linalg::axpy(&mut d_state[t - 1], 1.0, &dprev);
            if let Some(ac) = acache {
                attention_backward(ac, &p.item_item, &dpath, &mut g.item_item);
            }
        }
        let dctx = init_first_item_backward(&first_cache, &p.gates, &d_state[0], &mut g.gates);
        crate::linalg::axpy(&mut d_uctx, 1.0, &dctx);
        if let Some(c) = ucache {
            attention_backward(&c, &p.user_item, &d_uctx, &mut g.user_item);
        }
        Ok((total, g, ex.targets.len()))
    }

    /// Mean loss per positive over the batch and its gradient. Per-example
    /// gradients are reduced in batch order, so the result does not depend
    /// on the thread count.
    pub fn loss_and_grads(&self, batch: &[SequenceExample], loss: LossKind) -> Result<(f64, ModelParams)> {
        let parts: Vec<(f64, ModelParams, usize)> = batch
            .par_iter()
            .map(|ex| self.example_loss_and_grads(ex, loss))
            .collect::<Result<_>>()?;
        let mut grads = ModelParams::zeros(self.dim(), self.params.heads());
        let mut total = 0.0;
        let mut count = 0;
        for (l, g, n) in &parts {
            total += l;
            count += n;
            grads.add_assign(g);
        }
        if count == 0 {
            return Ok((0.0, grads));
        }
        grads.scale(1.0 / count as f64);
        Ok((total / count as f64, grads))
    }
}

//! Minibatch training with fresh uniform negatives every epoch and early
//! stopping on a held-out last train item.

use std::collections::HashSet;

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{hit_ratio, rank_of, sample_negatives};
use crate::features::Features;
use crate::hin::{NodeId, NodeType, UserSequence};
use crate::model::{Ablation, Adam, LossKind, Model, ModelParams};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub heads: usize,
    pub n_neg: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping; 0 disables
    /// validation and keeps the last epoch.
    pub patience: usize,
    pub val_negatives: usize,
    pub ablation: Ablation,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            heads: 4,
            n_neg: 4,
            lr: 1e-3,
            epochs: 30,
            batch_size: 32,
            patience: 5,
            val_negatives: 100,
            ablation: Ablation::Full,
            loss: LossKind::Standard,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub val_hr10: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

struct UserData {
    user: NodeId,
    items: Vec<NodeId>,
    exclude: HashSet<NodeId>,
    val: Option<(NodeId, Vec<NodeId>)>,
}

fn prepare(seqs: &[UserSequence], pool: &[NodeId], cfg: &TrainConfig) -> Vec<UserData> {
    let validate = cfg.patience > 0;
    seqs.iter()
        .enumerate()
        .filter_map(|(s, seq)| {
            let mut items = seq.history();
            let exclude: HashSet<NodeId> = seq.all_items().into_iter().collect();
            let val = if validate && items.len() >= 3 {
                let held = items.pop().unwrap();
                let mut r = rng::child_rng(rng::stage_seed(cfg.seed, "validation"), s as u64);
                Some((held, sample_negatives(pool, &exclude, cfg.val_negatives, &mut r)))
            } else {
                None
            };
            if items.is_empty() {
                return None;
            }
            Some(UserData {
                user: seq.user,
                items,
                exclude,
                val,
            })
        })
        .collect()
}

fn validation_hr10(features: &Features, model: &Model, users: &[UserData]) -> Result<f64> {
    let ranks: Vec<usize> = users
        .par_iter()
        .filter_map(|u| u.val.as_ref().map(|v| (u, v)))
        .map(|(u, (held, negs))| {
            let mut cands = vec![*held];
            cands.extend(negs);
            let s = features.score_after(model, u.user, &u.items, &cands)?;
            Ok(rank_of(s[0], &s[1..]))
        })
        .collect::<Result<_>>()?;
    Ok(hit_ratio(&ranks, 10))
}

pub fn train(features: &Features, seqs: &[UserSequence], cfg: &TrainConfig) -> Result<(Model, TrainReport)> {
    if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.n_neg == 0 {
        return Err(Error::Config("epochs, batch size and n_neg must be positive".into()));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    let d = features.dim();
    let params = ModelParams::init(d, cfg.heads, rng::stage_seed(cfg.seed, "model-init"))?;
    let mut model = Model::new(params, cfg.ablation);
    let mut opt = Adam::new(cfg.lr, &model.params);
    let pool: Vec<NodeId> = features.hin().nodes_of(NodeType::Item).collect();
    let users = prepare(seqs, &pool, cfg);
    if users.is_empty() {
        return Err(Error::Contract("no training sequences".into()));
    }
    let starved = users.iter().filter(|u| u.exclude.len() >= pool.len()).count();
    if starved > 0 {
        warn!("{starved} users interacted with every item; they get no negatives");
    }
    let validate = users.iter().any(|u| u.val.is_some());

    let mut report = TrainReport::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..users.len()).collect();
    for epoch in 0..cfg.epochs {
        let epoch_seed = rng::derive(rng::stage_seed(cfg.seed, "train"), epoch as u64);
        order.shuffle(&mut rng::child_rng(epoch_seed, u64::MAX));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = chunk
                .par_iter()
                .map(|&i| {
                    let u = &users[i];
                    let mut r = rng::child_rng(epoch_seed, i as u64);
                    let negs: Vec<Vec<NodeId>> = (0..u.items.len())
                        .map(|_| sample_negatives(&pool, &u.exclude, cfg.n_neg, &mut r))
                        .collect();
                    features.example(u.user, &u.items, &negs)
                })
                .collect::<Result<Vec<_>>>()?;
            let (loss, grads) = model.loss_and_grads(&batch, cfg.loss)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            opt.step(&mut model.params, &grads);
            loss_sum += loss;
            batches += 1;
        }
        let loss = loss_sum / batches as f64;
        report.epoch_losses.push(loss);
        if !validate {
            info!("epoch {}: loss {loss:.5}", epoch + 1);
            continue;
        }
        let hr = validation_hr10(features, &model, &users)?;
        report.val_hr10.push(hr);
        info!("epoch {}: loss {loss:.5} val HR@10 {hr:.4}", epoch + 1);
        if best.as_ref().is_none_or(|(b, _)| hr > *b) {
            best = Some((hr, model.params.clone()));
            report.best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                info!("early stop after epoch {}", epoch + 1);
                break;
            }
        }
    }
    match best {
        Some((_, p)) => model.params = p,
        None => report.best_epoch = report.epoch_losses.len(),
    }
    Ok((model, report))
}

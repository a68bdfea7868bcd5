//! Skip-gram with negative sampling over node "sentences".

use std::sync::atomic::{AtomicU64, Ordering};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::Embeddings;
use crate::error::{Error, Result};
use crate::hin::NodeId;
use crate::linalg::dot;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SkipGramParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Exponent applied to token counts for the negative-sampling distribution.
    pub unigram_power: f64,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for SkipGramParams {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr_start: 0.025,
            lr_end: 0.0001,
            unigram_power: 0.75,
            seed: 0,
            parallel: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SkipGramOutput {
    /// One vector per node that occurs in the corpus.
    pub embeddings: Embeddings,
    /// Mean loss per (center, context) pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Row storage abstraction so the same update code drives both the
/// sequential trainer and the lock-free parallel one.
trait Table {
    fn load(&self, row: usize, out: &mut [f64]);
    fn dot_row(&self, row: usize, x: &[f64]) -> f64;
    fn axpy_row(&mut self, row: usize, a: f64, x: &[f64]);
}

struct Dense<'a> {
    dim: usize,
    data: &'a mut [f64],
}

impl Table for Dense<'_> {
    fn load(&self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.data[row * self.dim..(row + 1) * self.dim]);
    }
    fn dot_row(&self, row: usize, x: &[f64]) -> f64 {
        dot(&self.data[row * self.dim..(row + 1) * self.dim], x)
    }
    fn axpy_row(&mut self, row: usize, a: f64, x: &[f64]) {
        for (y, xi) in self.data[row * self.dim..(row + 1) * self.dim].iter_mut().zip(x) {
            *y += a * xi;
        }
    }
}

#[derive(Clone, Copy)]
struct Shared<'a> {
    dim: usize,
    data: &'a [AtomicU64],
}

impl Table for Shared<'_> {
    fn load(&self, row: usize, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.data[row * self.dim..(row + 1) * self.dim]) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }
    fn dot_row(&self, row: usize, x: &[f64]) -> f64 {
        self.data[row * self.dim..(row + 1) * self.dim]
            .iter()
            .zip(x)
            .map(|(a, xi)| f64::from_bits(a.load(Ordering::Relaxed)) * xi)
            .sum()
    }
    fn axpy_row(&mut self, row: usize, a: f64, x: &[f64]) {
        for (cell, xi) in self.data[row * self.dim..(row + 1) * self.dim].iter().zip(x) {
            let y = f64::from_bits(cell.load(Ordering::Relaxed)) + a * xi;
            cell.store(y.to_bits(), Ordering::Relaxed);
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln σ(x)` without overflow.
#[inline]
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

struct Scratch {
    center: Vec<f64>,
    grad: Vec<f64>,
    out: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Self {
            center: vec![0.0; d],
            grad: vec![0.0; d],
            out: vec![0.0; d],
        }
    }
}

struct Vocab {
    /// Node index per sampled slot.
    tokens: Vec<usize>,
    dist: WeightedIndex<f64>,
}

/// Train one sentence. Returns (loss sum, pair count).
#[allow(clippy::too_many_arguments)]
fn train_sentence<T: Table, U: Table>(
    sentence: &[NodeId],
    params: &SkipGramParams,
    vocab: &Vocab,
    syn0: &mut T,
    syn1: &mut U,
    lr_at: &dyn Fn(usize) -> f64,
    step: &mut usize,
    stride: usize,
    rng: &mut rng::Rng,
    scratch: &mut Scratch,
) -> (f64, usize) {
    let Scratch { center, grad, out } = scratch;
    let mut loss = 0.0;
    let mut pairs = 0usize;
    for (i, &c) in sentence.iter().enumerate() {
        let lr = lr_at(*step);
        *step += stride;
        let lo = i.saturating_sub(params.window);
        let hi = (i + params.window + 1).min(sentence.len());
        for (j, &ctx) in sentence.iter().enumerate().take(hi).skip(lo) {
            if j == i {
                continue;
            }
            syn0.load(c.index(), center);
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut update = |target: usize, label: f64, loss: &mut f64, syn1: &mut U| {
                let f = syn1.dot_row(target, center);
                *loss += if label > 0.5 {
                    neg_log_sigmoid(f)
                } else {
                    neg_log_sigmoid(-f)
                };
                let g = (label - sigmoid(f)) * lr;
                syn1.load(target, out);
                for (gi, oi) in grad.iter_mut().zip(out.iter()) {
                    *gi += g * oi;
                }
                syn1.axpy_row(target, g, center);
            };
            update(ctx.index(), 1.0, &mut loss, syn1);
            for _ in 0..params.negatives {
                let neg = vocab.tokens[vocab.dist.sample(rng)];
                if neg == ctx.index() {
                    continue;
                }
                update(neg, 0.0, &mut loss, syn1);
            }
            syn0.axpy_row(c.index(), 1.0, grad);
            pairs += 1;
        }
    }
    (loss, pairs)
}

/// Skip-gram with negative sampling.
///
/// Input vectors start uniform in `[-0.5/d, 0.5/d]`, output vectors at zero,
/// and the learning rate decays linearly from `lr_start` to `lr_end` over
/// all epochs. Negatives come from the corpus token counts raised to
/// `unigram_power`.
pub fn train_skipgram(
    sentences: &[Vec<NodeId>],
    num_nodes: usize,
    params: &SkipGramParams,
) -> Result<SkipGramOutput> {
    if sentences.iter().all(|s| s.is_empty()) {
        return Err(Error::Contract("skip-gram corpus is empty".into()));
    }
    if params.dim == 0 || params.window == 0 || params.epochs == 0 {
        return Err(Error::Config("skip-gram dim, window and epochs must be positive".into()));
    }
    let d = params.dim;
    let mut counts = vec![0u64; num_nodes];
    for s in sentences {
        for &v in s {
            if v.index() >= num_nodes {
                return Err(Error::UnknownNode(v));
            }
            counts[v.index()] += 1;
        }
    }
    let tokens: Vec<usize> = (0..num_nodes).filter(|&i| counts[i] > 0).collect();
    let weights: Vec<f64> = tokens
        .iter()
        .map(|&i| (counts[i] as f64).powf(params.unigram_power))
        .collect();
    let vocab = Vocab {
        dist: WeightedIndex::new(&weights).expect("non-empty positive weights"),
        tokens,
    };

    let mut rng = rng::rng(params.seed);
    let half = 0.5 / d as f64;
    let mut syn0 = vec![0.0; num_nodes * d];
    for &i in &vocab.tokens {
        for x in &mut syn0[i * d..(i + 1) * d] {
            *x = rng.gen_range(-half..half);
        }
    }
    let mut syn1: Vec<f64> = vec![0.0; num_nodes * d];

    let tokens_per_epoch: usize = sentences.iter().map(Vec::len).sum();
    let total = (tokens_per_epoch * params.epochs).max(1);
    let (lr_start, lr_end) = (params.lr_start, params.lr_end);
    let lr_at = move |step: usize| lr_start - (lr_start - lr_end) * (step as f64 / total as f64);

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut epoch_losses = Vec::with_capacity(params.epochs);

    if params.parallel {
        let shared0: Vec<AtomicU64> = syn0.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        let shared1: Vec<AtomicU64> = syn1.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        let workers = rayon::current_num_threads().max(1);
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let chunk = order.len().div_ceil(workers);
            let results: Vec<(f64, usize)> = std::thread::scope(|scope| {
                let handles: Vec<_> = order
                    .chunks(chunk.max(1))
                    .enumerate()
                    .map(|(w, idx)| {
                        let (vocab, lr_at) = (&vocab, &lr_at);
                        let mut t0 = Shared { dim: d, data: &shared0 };
                        let mut t1 = Shared { dim: d, data: &shared1 };
                        let seed = rng::derive(params.seed, (epoch * workers + w) as u64 + 1);
                        scope.spawn(move || {
                            let mut rng = rng::rng(seed);
                            // workers interleave their steps on the global schedule
                            let mut step = epoch * tokens_per_epoch + w;
                            let mut scratch = Scratch::new(d);
                            let mut acc = (0.0, 0usize);
                            for &s in idx {
                                let (l, p) = train_sentence(
                                    &sentences[s], params, vocab, &mut t0, &mut t1, lr_at,
                                    &mut step, workers, &mut rng, &mut scratch,
                                );
                                acc.0 += l;
                                acc.1 += p;
                            }
                            acc
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("skip-gram worker panicked")).collect()
            });
            let (l, p) = results.iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            epoch_losses.push(if p > 0 { l / p as f64 } else { 0.0 });
        }
        for (x, a) in syn0.iter_mut().zip(&shared0) {
            *x = f64::from_bits(a.load(Ordering::Relaxed));
        }
    } else {
        let mut step = 0usize;
        let mut scratch = Scratch::new(d);
        let mut t0 = Dense { dim: d, data: &mut syn0 };
        let mut t1 = Dense { dim: d, data: &mut syn1 };
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            let (mut loss, mut pairs) = (0.0, 0usize);
            for &s in &order {
                let (l, p) = train_sentence(
                    &sentences[s], params, &vocab, &mut t0, &mut t1, &lr_at, &mut step, 1, &mut rng,
                    &mut scratch,
                );
                loss += l;
                pairs += p;
            }
            epoch_losses.push(if pairs > 0 { loss / pairs as f64 } else { 0.0 });
        }
    }

    let mut embeddings = Embeddings::new(num_nodes, d);
    for &i in &vocab.tokens {
        embeddings.set(NodeId(i as u32), &syn0[i * d..(i + 1) * d]);
    }
    Ok(SkipGramOutput {
        embeddings,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cosine;

    /// Random sentences inside two disjoint cliques {0..5} and {5..10}.
    fn two_cliques(seed: u64) -> Vec<Vec<NodeId>> {
        let mut rng = rng::rng(seed);
        (0..400)
            .map(|k| {
                let base = if k % 2 == 0 { 0 } else { 5 };
                (0..8).map(|_| NodeId(base + rng.gen_range(0..5))).collect()
            })
            .collect()
    }

    fn params() -> SkipGramParams {
        SkipGramParams {
            dim: 16,
            window: 2,
            negatives: 3,
            epochs: 5,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn cliques_separate_in_cosine() {
        let out = train_skipgram(&two_cliques(1), 10, &params()).unwrap();
        let e = &out.embeddings;
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for a in 0..10u32 {
            for b in (a + 1)..10u32 {
                let c = cosine(e.get(NodeId(a)).unwrap(), e.get(NodeId(b)).unwrap());
                if (a < 5) == (b < 5) {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        let (intra, inter) = (intra / ni as f64, inter / nx as f64);
        assert!(intra > inter, "intra {intra} inter {inter}");
    }

    #[test]
    fn loss_does_not_increase_over_training() {
        let out = train_skipgram(&two_cliques(2), 10, &params()).unwrap();
        let l = &out.epoch_losses;
        assert_eq!(l.len(), 5);
        assert!(l.last().unwrap() <= l.first().unwrap(), "{l:?}");
    }

    #[test]
    fn deterministic_under_seed() {
        let corpus = two_cliques(3);
        let a = train_skipgram(&corpus, 10, &params()).unwrap();
        let b = train_skipgram(&corpus, 10, &params()).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn requested_dimension_is_used() {
        let p = SkipGramParams { dim: 100, ..params() };
        let out = train_skipgram(&two_cliques(4), 10, &p).unwrap();
        for v in out.embeddings.present_nodes() {
            assert_eq!(out.embeddings.get(v).unwrap().len(), 100);
        }
    }

    #[test]
    fn single_token_corpus_is_finite() {
        let out = train_skipgram(&[vec![NodeId(2)]], 4, &params()).unwrap();
        let v = out.embeddings.get(NodeId(2)).unwrap();
        assert!(v.iter().all(|x| x.is_finite()));
        assert_eq!(out.embeddings.count_present(), 1);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(train_skipgram(&[], 4, &params()).is_err());
    }

    #[test]
    fn parallel_variant_produces_finite_vectors() {
        let p = SkipGramParams { parallel: true, ..params() };
        let out = train_skipgram(&two_cliques(5), 10, &p).unwrap();
        assert_eq!(out.embeddings.count_present(), 10);
        for v in out.embeddings.present_nodes() {
            assert!(out.embeddings.get(v).unwrap().iter().all(|x| x.is_finite()));
        }
    }
}

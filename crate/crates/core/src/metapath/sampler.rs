//! Similarity-guided beam sampling of meta-path instances.
//!
//! For a schema of `L` node types the path is grown from both ends: a
//! forward beam from the start node covers positions `0..=a`, a backward
//! beam from the end node covers `a+1..L`, with `a = (L-2)/2`. The two
//! halves are then joined across the single middle hop. Each beam keeps
//! its `beam_width` best partial paths by product of hop scores.

use std::cmp::Ordering;

use crate::embed::Embeddings;
use crate::error::{Error, Result};
use crate::hin::{Hin, NodeId, NodeType};
use crate::linalg::cosine;

use super::MetaPathSchema;

/// Cosine similarity between two vectors, 0 when either has zero norm.
pub fn hop_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if !a.iter().chain(b).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("hop similarity input"));
    }
    Ok(cosine(a, b))
}

/// Per-hop priority in `[0, 1]`.
///
/// User–item hops use `(1 + cos) / 2` on the walk embeddings. Hops touching
/// a brand or category use the same transform on path-token vectors when
/// both endpoints have one, and otherwise the attribute node's degree
/// relative to the largest degree of its type.
#[derive(Clone)]
pub struct HopScorer<'a> {
    hin: &'a Hin,
    node_vectors: &'a Embeddings,
    token_vectors: Option<&'a Embeddings>,
    max_degree: [usize; 4],
}

impl<'a> HopScorer<'a> {
    pub fn new(hin: &'a Hin, node_vectors: &'a Embeddings, token_vectors: Option<&'a Embeddings>) -> Self {
        let mut max_degree = [0usize; 4];
        for v in hin.nodes() {
            let s = hin.node_type(v).slot();
            max_degree[s] = max_degree[s].max(hin.degree(v));
        }
        Self {
            hin,
            node_vectors,
            token_vectors,
            max_degree,
        }
    }

    pub fn hin(&self) -> &'a Hin {
        self.hin
    }

    pub fn uses_tokens(&self) -> bool {
        self.token_vectors.is_some()
    }

    pub fn hop(&self, a: NodeId, b: NodeId) -> f64 {
        let (ta, tb) = (self.hin.node_type(a), self.hin.node_type(b));
        let is_entity = |t: NodeType| matches!(t, NodeType::User | NodeType::Item);
        if is_entity(ta) && is_entity(tb) {
            return match (self.node_vectors.get(a), self.node_vectors.get(b)) {
                (Some(x), Some(y)) => 0.5 * (1.0 + cosine(x, y)),
                _ => 0.5,
            };
        }
        if let Some(tokens) = self.token_vectors {
            if let (Some(x), Some(y)) = (tokens.get(a), tokens.get(b)) {
                return 0.5 * (1.0 + cosine(x, y));
            }
        }
        let attr = if is_entity(ta) { b } else { a };
        let max = self.max_degree[self.hin.node_type(attr).slot()];
        if max == 0 {
            0.0
        } else {
            self.hin.degree(attr) as f64 / max as f64
        }
    }

    /// Product of hop scores along `nodes`, multiplied left to right.
    pub fn path_score(&self, nodes: &[NodeId]) -> f64 {
        nodes.windows(2).map(|w| self.hop(w[0], w[1])).product()
    }
}

/// A concrete node sequence conforming to a schema.
#[derive(Clone, Debug, PartialEq)]
pub struct PathInstance {
    pub schema: MetaPathSchema,
    pub nodes: Vec<NodeId>,
    /// Product of hop scores.
    pub score: f64,
}

impl PathInstance {
    /// Geometric mean hop score, comparable across schema lengths.
    pub fn rank_key(&self) -> f64 {
        let hops = self.nodes.len().saturating_sub(1).max(1);
        self.score.powf(1.0 / hops as f64)
    }

    pub fn start(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn end(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }
}

/// Ranking order: best `rank_key` first, then schema, then node sequence.
pub fn instance_order(a: &PathInstance, b: &PathInstance) -> Ordering {
    b.rank_key()
        .total_cmp(&a.rank_key())
        .then_with(|| a.schema.cmp(&b.schema))
        .then_with(|| a.nodes.cmp(&b.nodes))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Instances kept per pair.
    pub k: usize,
    /// Partial paths kept per beam step.
    pub beam_width: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { k: 5, beam_width: 5 }
    }
}

impl SamplerConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, beam_width: k }
    }
}

/// Structural rules every instance obeys, checked against the graph.
///
/// Interior item nodes are distinct from each other and from both
/// endpoints; `exclude`, when given, never appears in the interior.
/// Brand, category and user nodes may repeat.
pub fn validate_instance(
    hin: &Hin,
    schema: &MetaPathSchema,
    nodes: &[NodeId],
    exclude: Option<NodeId>,
) -> std::result::Result<(), String> {
    if nodes.len() != schema.len() {
        return Err(format!("{} nodes for schema {schema}", nodes.len()));
    }
    for (k, (&v, &t)) in nodes.iter().zip(schema.types()).enumerate() {
        if !hin.contains(v) {
            return Err(format!("unknown node {v}"));
        }
        if hin.node_type(v) != t {
            return Err(format!("position {k}: {v} is {:?}, schema wants {t:?}", hin.node_type(v)));
        }
    }
    for w in nodes.windows(2) {
        if !hin.is_adjacent(w[0], w[1]) {
            return Err(format!("{} and {} are not adjacent", w[0], w[1]));
        }
    }
    let interior = &nodes[1..nodes.len() - 1];
    let (start, end) = (nodes[0], nodes[nodes.len() - 1]);
    for (k, &v) in interior.iter().enumerate() {
        if Some(v) == exclude {
            return Err(format!("excluded node {v} in interior"));
        }
        if hin.node_type(v) == NodeType::Item
            && (v == start || v == end || interior[..k].contains(&v))
        {
            return Err(format!("item {v} repeats"));
        }
    }
    Ok(())
}

#[derive(Clone)]
struct Partial {
    nodes: Vec<NodeId>,
    score: f64,
}

fn partial_order(a: &Partial, b: &Partial) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.nodes.cmp(&b.nodes))
}

/// Grow a beam from `anchor` across `positions` (in visiting order).
#[allow(clippy::too_many_arguments)]
fn grow(
    scorer: &HopScorer,
    schema: &MetaPathSchema,
    anchor: NodeId,
    positions: impl Iterator<Item = usize>,
    start: NodeId,
    end: NodeId,
    exclude: Option<NodeId>,
    width: usize,
) -> Vec<Partial> {
    let hin = scorer.hin();
    let mut beam = vec![Partial {
        nodes: vec![anchor],
        score: 1.0,
    }];
    for pos in positions {
        let t = schema.types()[pos];
        let mut next = Vec::new();
        for p in &beam {
            let last = *p.nodes.last().unwrap();
            for &n in hin.typed_neighbors(last, t) {
                if Some(n) == exclude {
                    continue;
                }
                if t == NodeType::Item && (n == start || n == end || p.nodes[1..].contains(&n)) {
                    continue;
                }
                let mut nodes = p.nodes.clone();
                nodes.push(n);
                next.push(Partial {
                    score: p.score * scorer.hop(last, n),
                    nodes,
                });
            }
        }
        next.sort_by(partial_order);
        next.truncate(width);
        if next.is_empty() {
            return next;
        }
        beam = next;
    }
    beam
}

/// Sample up to `cfg.k` instances of `schema` from `start` to `end`.
pub fn sample_instances(
    scorer: &HopScorer,
    schema: &MetaPathSchema,
    start: NodeId,
    end: NodeId,
    exclude: Option<NodeId>,
    cfg: &SamplerConfig,
) -> Result<Vec<PathInstance>> {
    let hin = scorer.hin();
    let (ts, te) = (hin.try_node_type(start)?, hin.try_node_type(end)?);
    if ts != schema.first() || te != schema.last() {
        return Err(Error::Contract(format!(
            "schema {schema} cannot connect {ts:?} {start} to {te:?} {end}"
        )));
    }
    if cfg.k == 0 || cfg.beam_width == 0 {
        return Err(Error::Config("k and beam width must be positive".into()));
    }
    let len = schema.len();
    let split = (len - 2) / 2;
    let interior_exclude = exclude.filter(|&x| x != start && x != end);

    let forward = grow(scorer, schema, start, 1..=split, start, end, interior_exclude, cfg.beam_width);
    let backward = grow(
        scorer,
        schema,
        end,
        (split + 1..len - 1).rev(),
        start,
        end,
        interior_exclude,
        cfg.beam_width,
    );
    if forward.is_empty() || backward.is_empty() {
        return Ok(Vec::new());
    }
    // every forward partial has split+1 nodes, every backward one len-split-1
    if forward[0].nodes.len() != split + 1 || backward[0].nodes.len() != len - split - 1 {
        return Ok(Vec::new());
    }

    let mut joined: Vec<PathInstance> = Vec::new();
    for f in &forward {
        let x = *f.nodes.last().unwrap();
        for b in &backward {
            let y = *b.nodes.last().unwrap();
            if !hin.is_adjacent(x, y) {
                continue;
            }
            let f_items = f.nodes[1..].iter().filter(|&&v| hin.node_type(v) == NodeType::Item);
            let clash = f_items.clone().any(|v| b.nodes[1..].contains(v));
            if clash {
                continue;
            }
            let mut nodes = f.nodes.clone();
            nodes.extend(b.nodes.iter().rev());
            let score = scorer.path_score(&nodes);
            joined.push(PathInstance {
                schema: *schema,
                nodes,
                score,
            });
        }
    }
    joined.sort_by(instance_order);
    joined.truncate(cfg.k);
    Ok(joined)
}

/// Instances pooled over several schemas, best `cfg.k` overall.
pub fn sample_pair(
    scorer: &HopScorer,
    schemas: &[MetaPathSchema],
    start: NodeId,
    end: NodeId,
    exclude: Option<NodeId>,
    cfg: &SamplerConfig,
) -> Result<Vec<PathInstance>> {
    let mut pooled = Vec::new();
    for schema in schemas {
        pooled.extend(sample_instances(scorer, schema, start, end, exclude, cfg)?);
    }
    pooled.sort_by(instance_order);
    pooled.dedup_by(|a, b| a.nodes == b.nodes);
    pooled.truncate(cfg.k);
    Ok(pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hin::{HinBuilder, Relation};
    use crate::rng;
    use rand::Rng as _;

    /// Depth-first enumeration of every schema-conforming instance.
    fn enumerate(
        hin: &Hin,
        schema: &MetaPathSchema,
        start: NodeId,
        end: NodeId,
        exclude: Option<NodeId>,
    ) -> Vec<Vec<NodeId>> {
        fn go(
            hin: &Hin,
            types: &[NodeType],
            path: &mut Vec<NodeId>,
            end: NodeId,
            exclude: Option<NodeId>,
            out: &mut Vec<Vec<NodeId>>,
        ) {
            let pos = path.len();
            if pos == types.len() {
                if *path.last().unwrap() == end {
                    out.push(path.clone());
                }
                return;
            }
            let last = *path.last().unwrap();
            for v in hin.nodes() {
                if hin.node_type(v) != types[pos] || !hin.is_adjacent(last, v) {
                    continue;
                }
                path.push(v);
                let interior_ok = pos + 1 == types.len()
                    || (Some(v) != exclude
                        && (types[pos] != NodeType::Item
                            || (v != path[0] && v != end && !path[1..pos].contains(&v))));
                if interior_ok {
                    go(hin, types, path, end, exclude, out);
                }
                path.pop();
            }
        }
        let mut out = Vec::new();
        go(hin, schema.types(), &mut vec![start], end, exclude, &mut out);
        out
    }

    fn emb(hin: &Hin, d: usize, seed: u64) -> Embeddings {
        let mut e = Embeddings::new(hin.num_nodes(), d);
        let mut r = rng::rng(seed);
        for v in hin.nodes() {
            if matches!(hin.node_type(v), NodeType::User | NodeType::Item) {
                let x: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
                e.set(v, &x);
            }
        }
        e
    }

    /// 6-node fixture: i1,i2,i3 share brand b1; i3 also has b2; u1 bought i1,i2.
    fn fixture() -> Hin {
        let mut b = HinBuilder::new();
        let u1 = b.add_node(NodeType::User, "u1");
        let i1 = b.add_node(NodeType::Item, "i1");
        let i2 = b.add_node(NodeType::Item, "i2");
        let i3 = b.add_node(NodeType::Item, "i3");
        let b1 = b.add_node(NodeType::Brand, "b1");
        let b2 = b.add_node(NodeType::Brand, "b2");
        b.add_edge(u1, i1, Relation::Buy(1)).unwrap();
        b.add_edge(u1, i2, Relation::Buy(2)).unwrap();
        for i in [i1, i2, i3] {
            b.add_edge(b1, i, Relation::IsBrandOf).unwrap();
        }
        b.add_edge(b2, i3, Relation::IsBrandOf).unwrap();
        b.add_edge(b2, i1, Relation::IsBrandOf).unwrap();
        b.build()
    }

    #[test]
    fn hop_similarity_basics() {
        assert!((hop_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(hop_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(hop_similarity(&[0.0, 0.0], &[3.0, 1.0]).unwrap(), 0.0);
        assert!(hop_similarity(&[1.0], &[1.0, 2.0]).is_err());
        assert!(hop_similarity(&[f64::NAN], &[1.0]).is_err());
        let (a, b) = ([0.3, -1.2, 2.0], [1.5, 0.25, -0.5]);
        let expected = (0.3 * 1.5 + -1.2 * 0.25 + 2.0 * -0.5)
            / ((0.09f64 + 1.44 + 4.0).sqrt() * (2.25f64 + 0.0625 + 0.25).sqrt());
        assert!((hop_similarity(&a, &b).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn unique_iui_path_is_found() {
        let h = fixture();
        let e = emb(&h, 4, 1);
        let s = HopScorer::new(&h, &e, None);
        let iui: MetaPathSchema = "IUI".parse().unwrap();
        let (i1, i2) = (NodeId(1), NodeId(2));
        let got = sample_instances(&s, &iui, i1, i2, None, &SamplerConfig::with_k(3)).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].nodes, vec![i1, NodeId(0), i2]);
        let expected = s.hop(i1, NodeId(0)) * s.hop(NodeId(0), i2);
        assert_eq!(got[0].score, expected);
    }

    #[test]
    fn ibi_top3_matches_enumeration() {
        let h = fixture();
        let e = emb(&h, 4, 2);
        let s = HopScorer::new(&h, &e, None);
        let ibi: MetaPathSchema = "IBI".parse().unwrap();
        for (a, b) in [(1, 3), (1, 2), (3, 2)] {
            let (a, b) = (NodeId(a), NodeId(b));
            let got = sample_instances(&s, &ibi, a, b, None, &SamplerConfig::with_k(3)).unwrap();
            let mut all: Vec<PathInstance> = enumerate(&h, &ibi, a, b, None)
                .into_iter()
                .map(|nodes| PathInstance {
                    schema: ibi,
                    score: s.path_score(&nodes),
                    nodes,
                })
                .collect();
            all.sort_by(instance_order);
            all.truncate(3);
            assert_eq!(got, all);
        }
    }

    #[test]
    fn disconnected_pair_gives_nothing() {
        let mut b = HinBuilder::new();
        let i1 = b.add_node(NodeType::Item, "i1");
        let i2 = b.add_node(NodeType::Item, "i2");
        let br = b.add_node(NodeType::Brand, "b");
        b.add_edge(br, i1, Relation::IsBrandOf).unwrap();
        let h = b.build();
        let e = emb(&h, 3, 0);
        let s = HopScorer::new(&h, &e, None);
        for name in ["IBI", "IBIBI", "IUIUI", "ICIBI"] {
            let schema: MetaPathSchema = name.parse().unwrap();
            assert!(sample_instances(&s, &schema, i1, i2, None, &SamplerConfig::default())
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn endpoint_type_mismatch_is_rejected() {
        let h = fixture();
        let e = emb(&h, 3, 0);
        let s = HopScorer::new(&h, &e, None);
        let uibi: MetaPathSchema = "UIBI".parse().unwrap();
        assert!(sample_instances(&s, &uibi, NodeId(1), NodeId(2), None, &SamplerConfig::default()).is_err());
    }

    #[test]
    fn excluded_node_never_in_interior() {
        let h = fixture();
        let e = emb(&h, 3, 5);
        let s = HopScorer::new(&h, &e, None);
        let iui: MetaPathSchema = "IUI".parse().unwrap();
        let got = sample_instances(&s, &iui, NodeId(1), NodeId(2), Some(NodeId(0)), &SamplerConfig::default()).unwrap();
        assert!(got.is_empty());
    }

    fn random_hin(seed: u64, users: usize, items: usize, brands: usize, cats: usize) -> Hin {
        let mut r = rng::rng(seed);
        let mut b = HinBuilder::new();
        let us: Vec<_> = (0..users).map(|i| b.add_node(NodeType::User, &format!("u{i}"))).collect();
        let is: Vec<_> = (0..items).map(|i| b.add_node(NodeType::Item, &format!("i{i}"))).collect();
        let bs: Vec<_> = (0..brands).map(|i| b.add_node(NodeType::Brand, &format!("b{i}"))).collect();
        let cs: Vec<_> = (0..cats).map(|i| b.add_node(NodeType::Category, &format!("c{i}"))).collect();
        for &u in &us {
            for _ in 0..4 {
                b.add_edge(u, is[r.gen_range(0..items)], Relation::Buy(0)).unwrap();
            }
        }
        for &i in &is {
            b.add_edge(bs[r.gen_range(0..brands)], i, Relation::IsBrandOf).unwrap();
            b.add_edge(cs[r.gen_range(0..cats)], i, Relation::InCategory).unwrap();
            if r.gen_bool(0.3) {
                b.add_edge(cs[r.gen_range(0..cats)], i, Relation::InCategory).unwrap();
            }
        }
        b.build()
    }

    #[test]
    fn wide_beam_equals_exhaustive_top_k() {
        let h = random_hin(3, 12, 30, 4, 3);
        let e = emb(&h, 6, 9);
        let s = HopScorer::new(&h, &e, None);
        let wide = SamplerConfig { k: 4, beam_width: 100_000 };
        let items: Vec<_> = h.nodes_of(NodeType::Item).collect();
        let users: Vec<_> = h.nodes_of(NodeType::User).collect();
        let mut checked = 0;
        for name in crate::metapath::schema::DEFAULT_ITEM_ITEM.iter().chain(&crate::metapath::schema::DEFAULT_USER_ITEM) {
            let schema: MetaPathSchema = name.parse().unwrap();
            for k in 0..6 {
                let start = if schema.first() == NodeType::User { users[k] } else { items[k] };
                let end = items[(k * 7 + 3) % items.len()];
                let excl = if schema.first() == NodeType::Item { Some(users[k]) } else { None };
                let got = sample_instances(&s, &schema, start, end, excl, &wide).unwrap();
                let mut all: Vec<PathInstance> = enumerate(&h, &schema, start, end, excl)
                    .into_iter()
                    .map(|nodes| PathInstance {
                        schema,
                        score: s.path_score(&nodes),
                        nodes,
                    })
                    .collect();
                all.sort_by(instance_order);
                all.truncate(4);
                assert_eq!(got, all, "{schema} {start}->{end}");
                checked += got.len();
            }
        }
        assert!(checked > 20, "fixture too sparse: {checked}");
    }

    #[test]
    fn narrow_beam_is_subset_and_valid() {
        let h = random_hin(4, 12, 30, 4, 3);
        let e = emb(&h, 6, 1);
        let s = HopScorer::new(&h, &e, None);
        let narrow = SamplerConfig { k: 3, beam_width: 2 };
        let items: Vec<_> = h.nodes_of(NodeType::Item).collect();
        for name in crate::metapath::schema::DEFAULT_ITEM_ITEM {
            let schema: MetaPathSchema = name.parse().unwrap();
            for k in 0..10 {
                let (a, b) = (items[k], items[29 - k]);
                let all = enumerate(&h, &schema, a, b, None);
                for inst in sample_instances(&s, &schema, a, b, None, &narrow).unwrap() {
                    assert!(all.contains(&inst.nodes));
                    validate_instance(&h, &schema, &inst.nodes, None).unwrap();
                    assert_eq!(inst.score, s.path_score(&inst.nodes));
                }
            }
        }
    }

    #[test]
    fn pooled_pair_is_sorted_and_truncated() {
        let h = random_hin(5, 12, 30, 4, 3);
        let e = emb(&h, 6, 2);
        let s = HopScorer::new(&h, &e, None);
        let schemas = crate::metapath::schema::default_item_item();
        let items: Vec<_> = h.nodes_of(NodeType::Item).collect();
        let got = sample_pair(&s, &schemas, items[0], items[1], None, &SamplerConfig::with_k(5)).unwrap();
        assert!(got.len() <= 5);
        for w in got.windows(2) {
            assert_ne!(instance_order(&w[0], &w[1]), Ordering::Greater);
        }
    }

    #[test]
    fn degree_priority_without_tokens_and_token_cosine_with() {
        let h = fixture();
        let e = emb(&h, 3, 0);
        let s = HopScorer::new(&h, &e, None);
        // b1 has degree 3 (max among brands), b2 degree 2
        assert_eq!(s.hop(NodeId(1), NodeId(4)), 1.0);
        assert!((s.hop(NodeId(1), NodeId(5)) - 2.0 / 3.0).abs() < 1e-15);
        let mut tok = Embeddings::new(h.num_nodes(), 2);
        tok.set(NodeId(1), &[1.0, 0.0]);
        tok.set(NodeId(5), &[0.0, 1.0]);
        let s = HopScorer::new(&h, &e, Some(&tok));
        assert_eq!(s.hop(NodeId(1), NodeId(5)), 0.5);
        assert_eq!(s.hop(NodeId(5), NodeId(1)), 0.5);
        // b1 has no token vector: falls back to degree
        assert_eq!(s.hop(NodeId(1), NodeId(4)), 1.0);
    }
}

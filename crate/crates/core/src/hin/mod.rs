//! Heterogeneous information network: typed nodes, typed undirected edges,
//! and the per-user purchase sequences split into bridge/train/test.

mod dump;
mod ingest;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::{read_hin, read_sequences, write_hin, write_sequences};
pub use ingest::{ingest, ingest_readers, Dataset, IngestConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    User,
    Item,
    Brand,
    Category,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::User,
        NodeType::Item,
        NodeType::Brand,
        NodeType::Category,
    ];

    #[inline]
    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            NodeType::User => 'U',
            NodeType::Item => 'I',
            NodeType::Brand => 'B',
            NodeType::Category => 'C',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'U' => Some(NodeType::User),
            'I' => Some(NodeType::Item),
            'B' => Some(NodeType::Brand),
            'C' => Some(NodeType::Category),
            _ => None,
        }
    }
}

/// Edge label. `Buy` carries the purchase time in unix seconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    Buy(i64),
    IsBrandOf,
    InCategory,
}

impl Relation {
    /// The unordered pair of endpoint types this relation joins.
    pub fn endpoint_types(self) -> (NodeType, NodeType) {
        match self {
            Relation::Buy(_) => (NodeType::User, NodeType::Item),
            Relation::IsBrandOf => (NodeType::Brand, NodeType::Item),
            Relation::InCategory => (NodeType::Category, NodeType::Item),
        }
    }

    pub fn connects(self, a: NodeType, b: NodeType) -> bool {
        let (x, y) = self.endpoint_types();
        (a, b) == (x, y) || (a, b) == (y, x)
    }
}

/// Whether any relation joins nodes of these two types.
pub fn types_connectable(a: NodeType, b: NodeType) -> bool {
    use NodeType::*;
    matches!(
        (a, b),
        (User, Item) | (Item, User) | (Item, Brand) | (Brand, Item) | (Item, Category) | (Category, Item)
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub to: NodeId,
    pub rel: Relation,
}

/// Immutable typed multigraph. Every edge is stored in both endpoint lists.
#[derive(Clone, Debug)]
pub struct Hin {
    types: Vec<NodeType>,
    keys: Vec<String>,
    adjacency: Vec<Vec<Edge>>,
    typed: Vec<[Vec<NodeId>; 4]>,
    counts: [usize; 4],
    index: HashMap<(NodeType, String), NodeId>,
}

impl Hin {
    pub fn num_nodes(&self) -> usize {
        self.types.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn count(&self, t: NodeType) -> usize {
        self.counts[t.slot()]
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.types.len()
    }

    pub fn node_type(&self, v: NodeId) -> NodeType {
        self.types[v.index()]
    }

    pub fn try_node_type(&self, v: NodeId) -> Result<NodeType> {
        self.types.get(v.index()).copied().ok_or(Error::UnknownNode(v))
    }

    pub fn key(&self, v: NodeId) -> &str {
        &self.keys[v.index()]
    }

    pub fn lookup(&self, t: NodeType, key: &str) -> Option<NodeId> {
        self.index.get(&(t, key.to_string())).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.types.len() as u32).map(NodeId)
    }

    pub fn nodes_of(&self, t: NodeType) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(move |&v| self.node_type(v) == t)
    }

    pub fn edges(&self, v: NodeId) -> &[Edge] {
        &self.adjacency[v.index()]
    }

    /// Distinct neighbours of `v` with the given type, ascending.
    pub fn neighbors(&self, v: NodeId, type_filter: NodeType) -> Result<&[NodeId]> {
        if !self.contains(v) {
            return Err(Error::UnknownNode(v));
        }
        Ok(self.typed_neighbors(v, type_filter))
    }

    /// Unchecked variant of [`Hin::neighbors`] for hot loops.
    #[inline]
    pub fn typed_neighbors(&self, v: NodeId, t: NodeType) -> &[NodeId] {
        &self.typed[v.index()][t.slot()]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v.index()].len()
    }

    #[inline]
    pub fn is_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        let t = self.types[b.index()];
        self.typed_neighbors(a, t).binary_search(&b).is_ok()
    }

    /// Buy neighbours of `v` (distinct), for walks on the bipartite subgraph.
    pub fn buy_neighbors(&self, v: NodeId) -> &[NodeId] {
        match self.node_type(v) {
            NodeType::User => self.typed_neighbors(v, NodeType::Item),
            NodeType::Item => self.typed_neighbors(v, NodeType::User),
            _ => &[],
        }
    }
}

/// Incrementally assembles a [`Hin`], enforcing type discipline.
#[derive(Default)]
pub struct HinBuilder {
    types: Vec<NodeType>,
    keys: Vec<String>,
    edges: Vec<(NodeId, NodeId, Relation)>,
    index: HashMap<(NodeType, String), NodeId>,
}

impl HinBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the existing id when the (type, key) pair was already added.
    pub fn add_node(&mut self, t: NodeType, key: &str) -> NodeId {
        if let Some(&id) = self.index.get(&(t, key.to_string())) {
            return id;
        }
        let id = NodeId(self.types.len() as u32);
        self.types.push(t);
        self.keys.push(key.to_string());
        self.index.insert((t, key.to_string()), id);
        id
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId, rel: Relation) -> Result<()> {
        let ta = *self.types.get(a.index()).ok_or(Error::UnknownNode(a))?;
        let tb = *self.types.get(b.index()).ok_or(Error::UnknownNode(b))?;
        if a == b {
            return Err(Error::Contract(format!("self-loop on {a}")));
        }
        if !rel.connects(ta, tb) {
            return Err(Error::Contract(format!(
                "relation {rel:?} cannot join {ta:?} and {tb:?}"
            )));
        }
        self.edges.push((a, b, rel));
        Ok(())
    }

    pub fn build(self) -> Hin {
        let n = self.types.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, rel) in &self.edges {
            adjacency[a.index()].push(Edge { to: b, rel });
            adjacency[b.index()].push(Edge { to: a, rel });
        }
        let mut typed: Vec<[Vec<NodeId>; 4]> = Vec::with_capacity(n);
        for list in adjacency.iter_mut() {
            list.sort();
            list.dedup();
            let mut per_type: [Vec<NodeId>; 4] = Default::default();
            for e in list.iter() {
                let slot = &mut per_type[self.types[e.to.index()].slot()];
                if slot.last() != Some(&e.to) {
                    slot.push(e.to);
                }
            }
            typed.push(per_type);
        }
        let mut counts = [0usize; 4];
        for t in &self.types {
            counts[t.slot()] += 1;
        }
        Hin {
            types: self.types,
            keys: self.keys,
            adjacency,
            typed,
            counts,
            index: self.index,
        }
    }
}

/// One user's chronologically ordered purchases split into three segments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSequence {
    pub user: NodeId,
    pub bridge: Vec<NodeId>,
    pub train: Vec<NodeId>,
    pub test: Vec<NodeId>,
    /// Timestamps aligned with `bridge ‖ train ‖ test`.
    pub timestamps: Vec<i64>,
}

impl UserSequence {
    /// `bridge ‖ train`: the items the model is allowed to see.
    pub fn history(&self) -> Vec<NodeId> {
        self.bridge.iter().chain(&self.train).copied().collect()
    }

    pub fn all_items(&self) -> Vec<NodeId> {
        self.bridge
            .iter()
            .chain(&self.train)
            .chain(&self.test)
            .copied()
            .collect()
    }

    pub fn last_train_item(&self) -> Option<NodeId> {
        self.train.last().or(self.bridge.last()).copied()
    }

    pub fn is_chronological(&self) -> bool {
        self.timestamps.windows(2).all(|w| w[0] <= w[1])
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::toy;
    use super::*;

    #[test]
    fn brand_neighbor_of_item() {
        let h = toy();
        let i1 = h.lookup(NodeType::Item, "i1").unwrap();
        let b1 = h.lookup(NodeType::Brand, "b1").unwrap();
        assert_eq!(h.neighbors(i1, NodeType::Brand).unwrap(), &[b1]);
        assert!(h.neighbors(i1, NodeType::Category).unwrap().is_empty());
    }

    #[test]
    fn unknown_node_is_an_error() {
        let h = toy();
        assert!(matches!(
            h.neighbors(NodeId(99), NodeType::Item),
            Err(Error::UnknownNode(NodeId(99)))
        ));
    }

    #[test]
    fn adjacency_matches_hand_built_edge_list() {
        let h = toy();
        let edges: &[(u32, u32)] = &[(0, 2), (0, 3), (1, 3), (4, 2), (4, 3), (5, 3)];
        for v in h.nodes() {
            for t in NodeType::ALL {
                let mut expected: Vec<NodeId> = edges
                    .iter()
                    .filter_map(|&(a, b)| {
                        if a == v.0 {
                            Some(NodeId(b))
                        } else if b == v.0 {
                            Some(NodeId(a))
                        } else {
                            None
                        }
                    })
                    .filter(|&n| h.node_type(n) == t)
                    .collect();
                expected.sort();
                assert_eq!(h.neighbors(v, t).unwrap(), expected.as_slice(), "{v} {t:?}");
            }
        }
        assert_eq!(h.num_edges(), edges.len());
    }

    #[test]
    fn adjacency_is_symmetric_and_typed() {
        let h = toy();
        for v in h.nodes() {
            for e in h.edges(v) {
                assert!(h.edges(e.to).contains(&Edge { to: v, rel: e.rel }));
                assert!(e.rel.connects(h.node_type(v), h.node_type(e.to)));
            }
        }
    }

    #[test]
    fn builder_rejects_bad_edges() {
        let mut b = HinBuilder::new();
        let u = b.add_node(NodeType::User, "u");
        let br = b.add_node(NodeType::Brand, "b");
        assert!(b.add_edge(u, br, Relation::Buy(0)).is_err());
        assert!(b.add_edge(u, u, Relation::Buy(0)).is_err());
        assert!(b.add_edge(u, NodeId(7), Relation::Buy(0)).is_err());
    }

    #[test]
    fn counts_by_type() {
        let h = toy();
        assert_eq!(h.count(NodeType::User), 2);
        assert_eq!(h.count(NodeType::Item), 2);
        assert_eq!(h.count(NodeType::Brand), 1);
        assert_eq!(h.count(NodeType::Category), 1);
    }
}

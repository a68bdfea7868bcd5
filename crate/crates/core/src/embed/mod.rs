//! Node embeddings: truncated random walks on the user–item purchase graph
//! fed to skip-gram with negative sampling.

mod skipgram;
mod walk;

use std::io::{Read, Write};

use log::{info, warn};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::hin::{Hin, NodeId, NodeType};
use crate::rng;

pub use skipgram::{train_skipgram, SkipGramOutput, SkipGramParams};
pub use walk::{generate_walks, WalkConfig};

/// Dense per-node vector table; nodes without a vector are marked absent.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    dim: usize,
    data: Vec<f64>,
    present: Vec<bool>,
}

impl Embeddings {
    pub fn new(num_nodes: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; num_nodes * dim],
            present: vec![false; num_nodes],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.present.len()
    }

    #[inline]
    pub fn get(&self, v: NodeId) -> Option<&[f64]> {
        let i = v.index();
        if self.present.get(i).copied().unwrap_or(false) {
            Some(&self.data[i * self.dim..(i + 1) * self.dim])
        } else {
            None
        }
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.get(v).is_some()
    }

    pub fn set(&mut self, v: NodeId, values: &[f64]) {
        assert_eq!(values.len(), self.dim);
        let i = v.index();
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(values);
        self.present[i] = true;
    }

    pub fn present_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.present
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(i, _)| NodeId(i as u32))
    }

    pub fn count_present(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    /// `node_key<TAB>v1 v2 ... vd`, one line per node with a vector.
    pub fn write_text<W: Write>(&self, hin: &Hin, mut w: W) -> Result<()> {
        for v in self.present_nodes() {
            let vals: Vec<String> = self.get(v).unwrap().iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}\t{}", hin.key(v), vals.join(" "))?;
        }
        Ok(())
    }

    /// Header `TMEREMB1`, `d: u32`, `count: u64`, then `count` records of
    /// `node_id: u32` followed by `d` little-endian f64 values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(EMB_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.count_present() as u64).to_le_bytes())?;
        for v in self.present_nodes() {
            w.write_all(&v.0.to_le_bytes())?;
            for x in self.get(v).unwrap() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R, num_nodes: usize) -> Result<Self> {
        let bad = |msg: &str| Error::Corrupt {
            what: "embedding file",
            msg: msg.to_string(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != EMB_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let mut out = Embeddings::new(num_nodes, dim);
        let mut row = vec![0.0; dim];
        for _ in 0..count {
            r.read_exact(&mut b4)?;
            let id = u32::from_le_bytes(b4);
            if id as usize >= num_nodes {
                return Err(bad("node id out of range"));
            }
            for x in row.iter_mut() {
                r.read_exact(&mut b8)?;
                *x = f64::from_le_bytes(b8);
            }
            out.set(NodeId(id), &row);
        }
        Ok(out)
    }
}

const EMB_MAGIC: &[u8; 8] = b"TMEREMB1";

/// Result of the walk-based initializer.
#[derive(Clone, Debug)]
pub struct InitReport {
    pub embeddings: Embeddings,
    pub epoch_losses: Vec<f64>,
    /// User/item nodes that never appeared in a walk and got random vectors.
    pub unwalked: Vec<NodeId>,
}

/// Walk + skip-gram initialization for every user and item node.
pub fn init_embeddings(hin: &Hin, cfg: &WalkConfig) -> Result<InitReport> {
    let walks = generate_walks(hin, cfg)?;
    info!(
        "generated {} walks ({} tokens)",
        walks.len(),
        walks.iter().map(Vec::len).sum::<usize>()
    );
    let out = train_skipgram(&walks, hin.num_nodes(), &cfg.skipgram())?;
    let mut embeddings = out.embeddings;
    let mut unwalked = Vec::new();
    let d = cfg.dim;
    let mut rng = rng::child_rng(cfg.seed, u64::MAX);
    let half = 0.5 / d as f64;
    for v in hin.nodes() {
        let t = hin.node_type(v);
        if matches!(t, NodeType::User | NodeType::Item) && !embeddings.contains(v) {
            let vals: Vec<f64> = (0..d).map(|_| rng.gen_range(-half..half)).collect();
            embeddings.set(v, &vals);
            unwalked.push(v);
        }
    }
    if !unwalked.is_empty() {
        warn!("{} user/item nodes absent from walks received random vectors", unwalked.len());
    }
    Ok(InitReport {
        embeddings,
        epoch_losses: out.epoch_losses,
        unwalked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_roundtrip_is_exact() {
        let mut e = Embeddings::new(4, 3);
        e.set(NodeId(1), &[0.1, -2.5e-300, f64::MIN_POSITIVE]);
        e.set(NodeId(3), &[1.0, 2.0, 3.0]);
        let mut buf = Vec::new();
        e.write_binary(&mut buf).unwrap();
        let back = Embeddings::read_binary(buf.as_slice(), 4).unwrap();
        assert_eq!(back, e);
        assert!(back.get(NodeId(0)).is_none());
    }

    #[test]
    fn binary_rejects_bad_magic() {
        assert!(Embeddings::read_binary(&b"NOTMAGIC\0\0\0\0"[..], 1).is_err());
    }

    #[test]
    fn text_dump_lists_present_nodes() {
        let h = crate::hin::fixtures::toy();
        let mut e = Embeddings::new(h.num_nodes(), 2);
        e.set(NodeId(2), &[0.5, -1.0]);
        let mut buf = Vec::new();
        e.write_text(&h, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i1\t0.5 -1\n");
    }

    #[test]
    fn init_covers_every_user_and_item() {
        let h = crate::hin::fixtures::toy();
        let cfg = WalkConfig {
            dim: 8,
            walks_per_node: 2,
            walk_length: 4,
            window: 2,
            epochs: 2,
            ..Default::default()
        };
        let rep = init_embeddings(&h, &cfg).unwrap();
        for v in h.nodes() {
            let t = h.node_type(v);
            let has = rep.embeddings.contains(v);
            assert_eq!(has, matches!(t, NodeType::User | NodeType::Item), "{v}");
        }
        assert!(rep.unwalked.is_empty());
    }
}

//! Line-based text dumps of the graph and the sequence split.
//!
//! Graph dump:
//!
//! ```text
//! tmer-hin v1
//! nodes <count>
//! <id>\t<U|I|B|C>\t<key>          (one per node, ascending id)
//! edges <count>
//! <a>\t<b>\t<buy:TS|brand|category> (one per undirected edge, a < b)
//! ```
//!
//! Sequence dump: header `tmer-sequences v1`, then one row per purchase,
//! `<user_key>\t<bridge|train|test>\t<item_key>\t<timestamp>`, grouped by user
//! in chronological order.

use std::io::{BufRead, Write};

use super::{Hin, HinBuilder, NodeId, NodeType, Relation, UserSequence};
use crate::error::{Error, Result};

const HIN_MAGIC: &str = "tmer-hin v1";
const SEQ_MAGIC: &str = "tmer-sequences v1";

fn corrupt(what: &'static str, line: usize, msg: impl Into<String>) -> Error {
    Error::Corrupt {
        what,
        msg: format!("line {line}: {}", msg.into()),
    }
}

pub fn write_hin<W: Write>(hin: &Hin, mut w: W) -> Result<()> {
    writeln!(w, "{HIN_MAGIC}")?;
    writeln!(w, "nodes {}", hin.num_nodes())?;
    for v in hin.nodes() {
        writeln!(w, "{}\t{}\t{}", v.0, hin.node_type(v).letter(), hin.key(v))?;
    }
    writeln!(w, "edges {}", hin.num_edges())?;
    for v in hin.nodes() {
        for e in hin.edges(v) {
            if e.to <= v {
                continue;
            }
            let rel = match e.rel {
                Relation::Buy(ts) => format!("buy:{ts}"),
                Relation::IsBrandOf => "brand".into(),
                Relation::InCategory => "category".into(),
            };
            writeln!(w, "{}\t{}\t{rel}", v.0, e.to.0)?;
        }
    }
    Ok(())
}

fn parse_count(line: Option<&str>, label: &str, lineno: usize) -> Result<usize> {
    let line = line.ok_or_else(|| corrupt("graph dump", lineno, "unexpected end of file"))?;
    line.strip_prefix(label)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| corrupt("graph dump", lineno, format!("expected `{label}<count>`")))
}

pub fn read_hin<R: BufRead>(r: R) -> Result<Hin> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let mut it = lines.iter().map(String::as_str);
    if it.next() != Some(HIN_MAGIC) {
        return Err(corrupt("graph dump", 1, "bad header"));
    }
    let n = parse_count(it.next(), "nodes ", 2)?;
    let mut builder = HinBuilder::new();
    for i in 0..n {
        let lineno = i + 3;
        let line = it.next().ok_or_else(|| corrupt("graph dump", lineno, "truncated node table"))?;
        let f: Vec<&str> = line.splitn(3, '\t').collect();
        if f.len() != 3 {
            return Err(corrupt("graph dump", lineno, "node row needs 3 fields"));
        }
        let t = f[1]
            .chars()
            .next()
            .and_then(NodeType::from_letter)
            .ok_or_else(|| corrupt("graph dump", lineno, "bad node type"))?;
        let id = builder.add_node(t, f[2]);
        if f[0].parse::<u32>().ok() != Some(id.0) {
            return Err(corrupt("graph dump", lineno, "node ids must be dense and ascending"));
        }
    }
    let m = parse_count(it.next(), "edges ", n + 3)?;
    for i in 0..m {
        let lineno = n + 4 + i;
        let line = it.next().ok_or_else(|| corrupt("graph dump", lineno, "truncated edge table"))?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(corrupt("graph dump", lineno, "edge row needs 3 fields"));
        }
        let id = |s: &str| {
            s.parse::<u32>()
                .map(NodeId)
                .map_err(|_| corrupt("graph dump", lineno, "bad node id"))
        };
        let rel = match f[2] {
            "brand" => Relation::IsBrandOf,
            "category" => Relation::InCategory,
            s => match s.strip_prefix("buy:").and_then(|t| t.parse().ok()) {
                Some(ts) => Relation::Buy(ts),
                None => return Err(corrupt("graph dump", lineno, "bad relation")),
            },
        };
        builder.add_edge(id(f[0])?, id(f[1])?, rel)?;
    }
    Ok(builder.build())
}

pub fn write_sequences<W: Write>(hin: &Hin, seqs: &[UserSequence], mut w: W) -> Result<()> {
    writeln!(w, "{SEQ_MAGIC}")?;
    for s in seqs {
        let segments = s
            .bridge
            .iter()
            .map(|&i| ("bridge", i))
            .chain(s.train.iter().map(|&i| ("train", i)))
            .chain(s.test.iter().map(|&i| ("test", i)));
        for ((seg, item), ts) in segments.zip(&s.timestamps) {
            writeln!(w, "{}\t{seg}\t{}\t{ts}", hin.key(s.user), hin.key(item))?;
        }
    }
    Ok(())
}

pub fn read_sequences<R: BufRead>(hin: &Hin, r: R) -> Result<Vec<UserSequence>> {
    let mut out: Vec<UserSequence> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i == 0 {
            if line != SEQ_MAGIC {
                return Err(corrupt("sequence dump", 1, "bad header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(corrupt("sequence dump", lineno, "row needs 4 fields"));
        }
        let user = hin
            .lookup(NodeType::User, f[0])
            .ok_or_else(|| corrupt("sequence dump", lineno, format!("unknown user `{}`", f[0])))?;
        let item = hin
            .lookup(NodeType::Item, f[2])
            .ok_or_else(|| corrupt("sequence dump", lineno, format!("unknown item `{}`", f[2])))?;
        let ts: i64 = f[3]
            .parse()
            .map_err(|_| corrupt("sequence dump", lineno, "bad timestamp"))?;
        if out.last().map(|s| s.user) != Some(user) {
            out.push(UserSequence {
                user,
                bridge: vec![],
                train: vec![],
                test: vec![],
                timestamps: vec![],
            });
        }
        let s = out.last_mut().unwrap();
        match f[1] {
            "bridge" => s.bridge.push(item),
            "train" => s.train.push(item),
            "test" => s.test.push(item),
            _ => return Err(corrupt("sequence dump", lineno, "bad segment")),
        }
        s.timestamps.push(ts);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::toy;
    use super::*;

    #[test]
    fn graph_dump_roundtrip_is_byte_identical() {
        let h = toy();
        let mut a = Vec::new();
        write_hin(&h, &mut a).unwrap();
        let back = read_hin(a.as_slice()).unwrap();
        let mut b = Vec::new();
        write_hin(&back, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.num_edges(), h.num_edges());
    }

    #[test]
    fn sequence_dump_roundtrip() {
        let h = toy();
        let seqs = vec![UserSequence {
            user: NodeId(0),
            bridge: vec![NodeId(2)],
            train: vec![NodeId(3)],
            test: vec![NodeId(2)],
            timestamps: vec![1, 2, 5],
        }];
        let mut buf = Vec::new();
        write_sequences(&h, &seqs, &mut buf).unwrap();
        assert_eq!(read_sequences(&h, buf.as_slice()).unwrap(), seqs);
    }

    #[test]
    fn corrupt_dump_is_rejected() {
        assert!(read_hin("nope\n".as_bytes()).is_err());
        assert!(read_hin("tmer-hin v1\nnodes 1\n0\tX\tk\nedges 0\n".as_bytes()).is_err());
    }
}

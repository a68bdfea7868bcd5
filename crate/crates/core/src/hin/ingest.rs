use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::{Hin, HinBuilder, NodeType, Relation, UserSequence};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct IngestConfig {
    /// Most recent interactions kept per user.
    pub history_len: usize,
    /// Users with fewer interactions are dropped.
    pub min_history: usize,
    pub bridge_len: usize,
    pub train_len: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            history_len: 12,
            min_history: 12,
            bridge_len: 2,
            train_len: 4,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        let floor = self.bridge_len + self.train_len + 1;
        if self.min_history < floor || self.min_history > self.history_len {
            return Err(Error::Config(format!(
                "min_history must lie in [{floor}, {}], got {}",
                self.history_len, self.min_history
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub hin: Hin,
    pub sequences: Vec<UserSequence>,
}

pub fn ingest(interactions: &Path, metadata: &Path, cfg: &IngestConfig) -> Result<Dataset> {
    let inter = BufReader::new(File::open(interactions)?);
    let meta = BufReader::new(File::open(metadata)?);
    ingest_readers(inter, interactions, meta, metadata, cfg)
}

struct Interaction {
    item: String,
    ts: i64,
}

/// Reader-based ingestion; `*_name` only labels error messages.
pub fn ingest_readers<R1: BufRead, R2: BufRead>(
    interactions: R1,
    interactions_name: &Path,
    metadata: R2,
    metadata_name: &Path,
    cfg: &IngestConfig,
) -> Result<Dataset> {
    cfg.validate()?;

    let mut per_user: HashMap<String, Vec<Interaction>> = HashMap::new();
    let mut seen: HashSet<(String, String, i64)> = HashSet::new();
    let mut duplicates = 0usize;
    for (lineno, line) in interactions.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: PathBuf::from(interactions_name),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        if user.is_empty() || item.is_empty() {
            return Err(parse_err("empty user or item key".into()));
        }
        let ts: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid timestamp `{}`", fields[2])))?;
        if !seen.insert((user.to_string(), item.to_string(), ts)) {
            duplicates += 1;
            continue;
        }
        per_user.entry(user.to_string()).or_default().push(Interaction {
            item: item.to_string(),
            ts,
        });
    }
    if duplicates > 0 {
        info!("dropped {duplicates} duplicate (user, item, timestamp) rows");
    }

    let mut kept: Vec<(String, Vec<Interaction>)> = Vec::new();
    let mut dropped = 0usize;
    for (user, mut events) in per_user {
        // stable: equal timestamps keep file order
        events.sort_by_key(|e| e.ts);
        if events.len() < cfg.min_history {
            dropped += 1;
            continue;
        }
        let start = events.len().saturating_sub(cfg.history_len);
        events.drain(..start);
        kept.push((user, events));
    }
    kept.sort_by(|a, b| a.0.cmp(&b.0));
    if dropped > 0 {
        info!("dropped {dropped} users with fewer than {} interactions", cfg.min_history);
    }

    let items: BTreeSet<&str> = kept
        .iter()
        .flat_map(|(_, ev)| ev.iter().map(|e| e.item.as_str()))
        .collect();

    // repeated rows for one item add further brand/category edges
    let mut meta: HashMap<String, (BTreeSet<String>, BTreeSet<String>)> = HashMap::new();
    for (lineno, line) in metadata.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |msg: String| Error::Parse {
            path: PathBuf::from(metadata_name),
            line: lineno + 1,
            msg,
        };
        if fields.len() > 3 {
            return Err(parse_err(format!("expected at most 3 tab-separated fields, found {}", fields.len())));
        }
        let item = fields[0].trim();
        if item.is_empty() {
            return Err(parse_err("empty item key".into()));
        }
        let field = |i: usize| {
            fields
                .get(i)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        let entry = meta.entry(item.to_string()).or_default();
        entry.0.extend(field(1));
        entry.1.extend(field(2));
    }

    let mut brands: BTreeSet<&str> = BTreeSet::new();
    let mut categories: BTreeSet<&str> = BTreeSet::new();
    for item in &items {
        if let Some((b, c)) = meta.get(*item) {
            brands.extend(b.iter().map(String::as_str));
            categories.extend(c.iter().map(String::as_str));
        }
    }

    let mut builder = HinBuilder::new();
    for (user, _) in &kept {
        builder.add_node(NodeType::User, user);
    }
    for item in &items {
        builder.add_node(NodeType::Item, item);
    }
    for b in &brands {
        builder.add_node(NodeType::Brand, b);
    }
    for c in &categories {
        builder.add_node(NodeType::Category, c);
    }
    for item in &items {
        let Some((b, c)) = meta.get(*item) else {
            continue;
        };
        let iid = builder.add_node(NodeType::Item, item);
        for b in b {
            let bid = builder.add_node(NodeType::Brand, b);
            builder.add_edge(bid, iid, Relation::IsBrandOf)?;
        }
        for c in c {
            let cid = builder.add_node(NodeType::Category, c);
            builder.add_edge(cid, iid, Relation::InCategory)?;
        }
    }

    let visible = cfg.bridge_len + cfg.train_len;
    let mut sequences = Vec::with_capacity(kept.len());
    for (user, events) in &kept {
        let uid = builder.add_node(NodeType::User, user);
        let ids: Vec<_> = events
            .iter()
            .map(|e| builder.add_node(NodeType::Item, &e.item))
            .collect();
        // test purchases stay out of the graph so they cannot leak into paths or walks
        for (e, &iid) in events.iter().zip(&ids).take(visible) {
            builder.add_edge(uid, iid, Relation::Buy(e.ts))?;
        }
        let bridge_end = cfg.bridge_len.min(ids.len());
        let train_end = visible.min(ids.len());
        sequences.push(UserSequence {
            user: uid,
            bridge: ids[..bridge_end].to_vec(),
            train: ids[bridge_end..train_end].to_vec(),
            test: ids[train_end..].to_vec(),
            timestamps: events.iter().map(|e| e.ts).collect(),
        });
    }

    let hin = builder.build();
    if hin.count(NodeType::User) == 0 {
        warn!("no users survived filtering");
    }
    Ok(Dataset { hin, sequences })
}

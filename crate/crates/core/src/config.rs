//! Run configuration: built-in defaults, overridden by a flat `key = value`
//! file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::info;

use crate::embed::WalkConfig;
use crate::error::{Error, Result};
use crate::hin::IngestConfig;
use crate::metapath::{schema, MetaPathSchema, SamplerConfig, SchemaSet};
use crate::model::{Ablation, LossKind};
use crate::path_encoder::TokenConfig;
use crate::rng;
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "config file",
            Source::Flag => "flag",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub seed: u64,
    pub dim: usize,
    pub heads: usize,
    pub k_paths: usize,
    pub beam_width: usize,
    pub n_neg: usize,
    /// `None` picks the per-dataset default.
    pub lr: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub val_negatives: usize,
    pub ablation: Ablation,
    pub loss: LossKind,
    /// Threads for parallel stages; 0 uses every core.
    pub workers: usize,
    pub train_workers: usize,
    pub eval_negatives: usize,
    pub min_history: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub walk_epochs: usize,
    pub token_epochs: usize,
    pub token_window: usize,
    pub token_walks: usize,
    pub user_item_schemas: Vec<MetaPathSchema>,
    pub item_item_schemas: Vec<MetaPathSchema>,
    pub explain_users: usize,
    pub explain_top: usize,
    sources: BTreeMap<&'static str, Source>,
}

pub const KEYS: [&str; 29] = [
    "dataset",
    "seed",
    "dim",
    "heads",
    "k-paths",
    "beam-width",
    "n-neg",
    "lr",
    "epochs",
    "batch-size",
    "patience",
    "val-negatives",
    "ablation",
    "loss",
    "workers",
    "train-workers",
    "eval-negatives",
    "min-history",
    "walks-per-node",
    "walk-length",
    "window",
    "walk-epochs",
    "token-epochs",
    "token-window",
    "token-walks",
    "user-item-schemas",
    "item-item-schemas",
    "explain-users",
    "explain-top",
];

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: "dataset".into(),
            seed: 0,
            dim: 100,
            heads: 4,
            k_paths: 5,
            beam_width: 5,
            n_neg: 4,
            lr: None,
            epochs: 30,
            batch_size: 32,
            patience: 5,
            val_negatives: 100,
            ablation: Ablation::Full,
            loss: LossKind::Standard,
            workers: 0,
            train_workers: 1,
            eval_negatives: 500,
            min_history: 12,
            walks_per_node: 10,
            walk_length: 40,
            window: 5,
            walk_epochs: 5,
            token_epochs: 20,
            token_window: 2,
            token_walks: 1,
            user_item_schemas: schema::default_user_item(),
            item_item_schemas: schema::default_item_item(),
            explain_users: 10,
            explain_top: 5,
            sources: BTreeMap::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_schemas(key: &str, value: &str) -> Result<Vec<MetaPathSchema>> {
    let names: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let list = schema::parse_list(&names)?;
    let want = if key == "user-item-schemas" {
        crate::metapath::SchemaKind::UserItem
    } else {
        crate::metapath::SchemaKind::ItemItem
    };
    if let Some(s) = list.iter().find(|s| s.kind() != want) {
        return Err(Error::Config(format!("`{s}` does not belong in `{key}`")));
    }
    Ok(list)
}

/// Learning rate used when none is configured.
pub fn default_lr(dataset: &str) -> f64 {
    let d = dataset.to_ascii_lowercase();
    if d.contains("musical") {
        5e-6
    } else if d.contains("automotive") {
        5e-5
    } else if d.contains("toys") {
        1e-4
    } else {
        1e-3
    }
}

impl RunConfig {
    /// Set one key; `_` and `-` are interchangeable in key names.
    pub fn set(&mut self, key: &str, value: &str, source: Source) -> Result<()> {
        let norm = key.trim().replace('_', "-");
        let Some(&key) = KEYS.iter().find(|k| **k == norm) else {
            return Err(Error::Config(format!("unknown key `{key}`")));
        };
        match key {
            "dataset" => self.dataset = value.trim().to_string(),
            "seed" => self.seed = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "k-paths" => self.k_paths = parse(key, value)?,
            "beam-width" => self.beam_width = parse(key, value)?,
            "n-neg" => self.n_neg = parse(key, value)?,
            "lr" => self.lr = Some(parse(key, value)?),
            "epochs" => self.epochs = parse(key, value)?,
            "batch-size" => self.batch_size = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "val-negatives" => self.val_negatives = parse(key, value)?,
            "ablation" => self.ablation = value.trim().parse()?,
            "loss" => self.loss = value.trim().parse()?,
            "workers" => self.workers = parse(key, value)?,
            "train-workers" => self.train_workers = parse(key, value)?,
            "eval-negatives" => self.eval_negatives = parse(key, value)?,
            "min-history" => self.min_history = parse(key, value)?,
            "walks-per-node" => self.walks_per_node = parse(key, value)?,
            "walk-length" => self.walk_length = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "walk-epochs" => self.walk_epochs = parse(key, value)?,
            "token-epochs" => self.token_epochs = parse(key, value)?,
            "token-window" => self.token_window = parse(key, value)?,
            "token-walks" => self.token_walks = parse(key, value)?,
            "user-item-schemas" => self.user_item_schemas = parse_schemas(key, value)?,
            "item-item-schemas" => self.item_item_schemas = parse_schemas(key, value)?,
            "explain-users" => self.explain_users = parse(key, value)?,
            "explain-top" => self.explain_top = parse(key, value)?,
            _ => unreachable!(),
        }
        self.sources.insert(key, source);
        Ok(())
    }

    /// Lines of `key = value`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: Source) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k, v, source)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text, Source::File)
    }

    pub fn source(&self, key: &str) -> Source {
        self.sources.get(key).copied().unwrap_or(Source::Default)
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or_else(|| default_lr(&self.dataset))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("dim {} must be a positive multiple of heads {}", self.dim, self.heads)));
        }
        if self.k_paths == 0 || self.beam_width == 0 {
            return Err(Error::Config("k-paths and beam-width must be positive".into()));
        }
        self.ingest().validate()?;
        self.walk(0).validate()?;
        Ok(())
    }

    /// Effective values with their origin, one per line.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "dataset" => self.dataset.clone(),
                "seed" => self.seed.to_string(),
                "dim" => self.dim.to_string(),
                "heads" => self.heads.to_string(),
                "k-paths" => self.k_paths.to_string(),
                "beam-width" => self.beam_width.to_string(),
                "n-neg" => self.n_neg.to_string(),
                "lr" => self.learning_rate().to_string(),
                "epochs" => self.epochs.to_string(),
                "batch-size" => self.batch_size.to_string(),
                "patience" => self.patience.to_string(),
                "val-negatives" => self.val_negatives.to_string(),
                "ablation" => self.ablation.to_string(),
                "loss" => self.loss.to_string(),
                "workers" => self.workers.to_string(),
                "train-workers" => self.train_workers.to_string(),
                "eval-negatives" => self.eval_negatives.to_string(),
                "min-history" => self.min_history.to_string(),
                "walks-per-node" => self.walks_per_node.to_string(),
                "walk-length" => self.walk_length.to_string(),
                "window" => self.window.to_string(),
                "walk-epochs" => self.walk_epochs.to_string(),
                "token-epochs" => self.token_epochs.to_string(),
                "token-window" => self.token_window.to_string(),
                "token-walks" => self.token_walks.to_string(),
                "user-item-schemas" => join(&self.user_item_schemas),
                "item-item-schemas" => join(&self.item_item_schemas),
                "explain-users" => self.explain_users.to_string(),
                "explain-top" => self.explain_top.to_string(),
                _ => unreachable!(),
            };
            out.push_str(&format!("{key} = {value} ({})\n", self.source(key)));
        }
        out
    }

    pub fn log(&self) {
        for line in self.describe().lines() {
            info!("config: {line}");
        }
    }

    pub fn ingest(&self) -> IngestConfig {
        IngestConfig {
            min_history: self.min_history,
            ..IngestConfig::default()
        }
    }

    pub fn walk(&self, seed: u64) -> WalkConfig {
        WalkConfig {
            dim: self.dim,
            walks_per_node: self.walks_per_node,
            walk_length: self.walk_length,
            window: self.window,
            epochs: self.walk_epochs,
            seed,
            ..WalkConfig::default()
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            k: self.k_paths,
            beam_width: self.beam_width,
        }
    }

    pub fn schemas(&self) -> SchemaSet {
        SchemaSet {
            user_item: self.user_item_schemas.clone(),
            item_item: self.item_item_schemas.clone(),
        }
    }

    pub fn tokens(&self, seed: u64) -> TokenConfig {
        TokenConfig {
            dim: self.dim,
            window: self.token_window,
            epochs: self.token_epochs,
            walks_per_schema: self.token_walks,
            seed,
            ..TokenConfig::default()
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            heads: self.heads,
            n_neg: self.n_neg,
            lr: self.learning_rate(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            val_negatives: self.val_negatives,
            ablation: self.ablation,
            loss: self.loss,
            seed: rng::stage_seed(self.seed, "train"),
        }
    }
}

fn join(s: &[MetaPathSchema]) -> String {
    s.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let mut c = RunConfig::default();
        assert_eq!(c.epochs, 30);
        assert_eq!(c.source("epochs"), Source::Default);
        c.apply_text("# comment\nepochs = 7\nk_paths=3\n\nablation = RII  # trailing\n", Source::File).unwrap();
        assert_eq!((c.epochs, c.k_paths, c.ablation), (7, 3, Ablation::Rii));
        c.set("epochs", "2", Source::Flag).unwrap();
        assert_eq!(c.epochs, 2);
        assert_eq!(c.source("epochs"), Source::Flag);
        assert_eq!(c.source("k-paths"), Source::File);
        assert!(c.describe().contains("epochs = 2 (flag)"));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        assert!(c.set("nope", "1", Source::Flag).is_err());
        assert!(c.set("dim", "abc", Source::Flag).is_err());
        assert!(c.apply_text("dim 100", Source::File).is_err());
        assert!(c.set("item-item-schemas", "UIBI", Source::Flag).is_err());
        c.set("dim", "10", Source::Flag).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn learning_rate_follows_dataset() {
        let mut c = RunConfig::default();
        c.set("dataset", "Musical_Instruments", Source::Flag).unwrap();
        assert_eq!(c.learning_rate(), 5e-6);
        c.set("dataset", "automotive", Source::Flag).unwrap();
        assert_eq!(c.learning_rate(), 5e-5);
        c.set("dataset", "Toys_and_Games", Source::Flag).unwrap();
        assert_eq!(c.learning_rate(), 1e-4);
        c.set("lr", "0.01", Source::Flag).unwrap();
        assert_eq!(c.learning_rate(), 0.01);
    }

    #[test]
    fn schema_lists_parse() {
        let mut c = RunConfig::default();
        c.set("item-item-schemas", "IBIBI, ICICI", Source::File).unwrap();
        assert_eq!(c.schemas().item_item.len(), 2);
        c.set("item-item-schemas", "", Source::File).unwrap();
        assert!(c.schemas().item_item.is_empty());
    }
}

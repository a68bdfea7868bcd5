//! Stage drivers reading and writing artifacts in a work directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::embed::{init_embeddings, Embeddings};
use crate::error::{Error, Result};
use crate::eval::{self, Report};
use crate::explain::{explain_topk, recommend};
use crate::features::Features;
use crate::hin::{self, Hin, NodeType, UserSequence};
use crate::metapath::{build_pair_corpus, read_corpus, write_corpus, HopScorer, PairCorpus, PathSource};
use crate::model::{Model, ModelParams};
use crate::path_encoder::{train_path_tokens, uncovered, PathEncoder};
use crate::rng;
use crate::train::{self, TrainReport};

pub const HIN: &str = "hin.txt";
pub const SEQUENCES: &str = "sequences.txt";
pub const PREPARE_SUMMARY: &str = "prepare.json";
pub const EMBEDDINGS: &str = "embeddings.bin";
pub const PATHS: &str = "paths.tsv";
pub const TOKENS: &str = "tokens.bin";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_SUMMARY: &str = "train.json";
pub const METRICS: &str = "metrics.json";
pub const RANKS: &str = "ranks.tsv";
pub const EXPLANATIONS: &str = "explanations.txt";

pub struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn open(&self, name: &str, stage: &'static str) -> Result<BufReader<File>> {
        let p = self.path(name);
        if !p.exists() {
            return Err(Error::MissingArtifact { path: p, stage });
        }
        Ok(BufReader::new(File::open(p)?))
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_hin(&self) -> Result<Hin> {
        hin::read_hin(self.open(HIN, "prepare")?)
    }

    pub fn load_sequences(&self, hin: &Hin) -> Result<Vec<UserSequence>> {
        hin::read_sequences(hin, self.open(SEQUENCES, "prepare")?)
    }

    pub fn load_embeddings(&self, hin: &Hin) -> Result<Embeddings> {
        Embeddings::read_binary(self.open(EMBEDDINGS, "init-embed")?, hin.num_nodes())
    }

    pub fn load_corpus(&self, hin: &Hin) -> Result<PairCorpus> {
        read_corpus(hin, self.open(PATHS, "sample-paths")?)
    }

    pub fn load_tokens(&self, hin: &Hin) -> Result<Embeddings> {
        Embeddings::read_binary(self.open(TOKENS, "encode-paths")?, hin.num_nodes())
    }

    pub fn load_model(&self) -> Result<Model> {
        let params = ModelParams::read_checkpoint(self.open(CHECKPOINT, "train")?)?;
        let summary: TrainSummary = serde_json::from_reader(self.open(TRAIN_SUMMARY, "train")?)?;
        Ok(Model::new(params, summary.ablation.parse()?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrepareSummary {
    pub dataset: String,
    pub users: usize,
    pub items: usize,
    pub brands: usize,
    pub categories: usize,
    pub graph_purchases: usize,
    pub test_items: usize,
}

pub fn prepare(cfg: &RunConfig, ws: &Workspace, interactions: &Path, metadata: &Path) -> Result<PrepareSummary> {
    let data = hin::ingest(interactions, metadata, &cfg.ingest())?;
    let h = &data.hin;
    let mut w = ws.create(HIN)?;
    hin::write_hin(h, &mut w)?;
    w.flush()?;
    let mut w = ws.create(SEQUENCES)?;
    hin::write_sequences(h, &data.sequences, &mut w)?;
    w.flush()?;
    let graph_purchases = h
        .nodes_of(NodeType::User)
        .map(|u| h.buy_neighbors(u).len())
        .sum();
    let summary = PrepareSummary {
        dataset: cfg.dataset.clone(),
        users: h.count(NodeType::User),
        items: h.count(NodeType::Item),
        brands: h.count(NodeType::Brand),
        categories: h.count(NodeType::Category),
        graph_purchases,
        test_items: data.sequences.iter().map(|s| s.test.len()).sum(),
    };
    info!(
        "prepared {} users, {} items, {} brands, {} categories",
        summary.users, summary.items, summary.brands, summary.categories
    );
    ws.write_json(PREPARE_SUMMARY, &summary)?;
    Ok(summary)
}

pub fn init_embed(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    let h = ws.load_hin()?;
    let report = init_embeddings(&h, &cfg.walk(rng::stage_seed(cfg.seed, "init-embed")))?;
    let mut w = ws.create(EMBEDDINGS)?;
    report.embeddings.write_binary(&mut w)?;
    w.flush()?;
    info!(
        "embedded {} nodes; final walk loss {:.5}",
        report.embeddings.count_present(),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn sample_paths(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    let h = ws.load_hin()?;
    let seqs = ws.load_sequences(&h)?;
    let emb = ws.load_embeddings(&h)?;
    let scorer = HopScorer::new(&h, &emb, None);
    let corpus = build_pair_corpus(&scorer, &seqs, &cfg.schemas(), &cfg.sampler())?;
    let empty = corpus.values().filter(|s| s.is_empty()).count();
    info!("sampled paths for {} pairs ({empty} without any instance)", corpus.len());
    let mut w = ws.create(PATHS)?;
    write_corpus(&h, &corpus, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn encode_paths(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    let h = ws.load_hin()?;
    let corpus = ws.load_corpus(&h)?;
    let tokens = train_path_tokens(
        &h,
        &corpus,
        &cfg.schemas().all(),
        &cfg.tokens(rng::stage_seed(cfg.seed, "encode-paths")),
    )?;
    let missing = uncovered(&h, &tokens, NodeType::Item).len();
    info!("path tokens for {} nodes; {missing} items uncovered", tokens.count_present());
    let mut w = ws.create(TOKENS)?;
    tokens.write_binary(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Everything the model-facing stages need, loaded once.
pub struct Loaded {
    pub hin: Hin,
    pub seqs: Vec<UserSequence>,
    pub embeddings: Embeddings,
    pub tokens: Embeddings,
    pub corpus: PairCorpus,
}

impl Loaded {
    pub fn from_workspace(ws: &Workspace) -> Result<Self> {
        let hin = ws.load_hin()?;
        Ok(Self {
            seqs: ws.load_sequences(&hin)?,
            embeddings: ws.load_embeddings(&hin)?,
            tokens: ws.load_tokens(&hin)?,
            corpus: ws.load_corpus(&hin)?,
            hin,
        })
    }

    /// Path source that serves the stored corpus and samples other pairs
    /// with the same scorer that built it.
    pub fn encoder(&self, cfg: &RunConfig) -> PathEncoder<'_> {
        let scorer = HopScorer::new(&self.hin, &self.embeddings, None);
        let source = PathSource::new(scorer, cfg.schemas(), cfg.sampler(), Some(&self.corpus));
        PathEncoder::new(source, &self.tokens)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct TrainSummary {
    pub ablation: String,
    pub loss: String,
    pub lr: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub epoch_losses: Vec<f64>,
    pub val_hr10: Vec<f64>,
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn train(cfg: &RunConfig, ws: &Workspace) -> Result<TrainReport> {
    let data = Loaded::from_workspace(ws)?;
    let enc = data.encoder(cfg);
    let features = Features::new(&data.embeddings, &enc)?;
    let tcfg = cfg.train();
    let (model, report) = pool(cfg.train_workers)?.install(|| train::train(&features, &data.seqs, &tcfg))?;
    let mut w = ws.create(CHECKPOINT)?;
    model.params.write_checkpoint(&mut w)?;
    w.flush()?;
    ws.write_json(
        TRAIN_SUMMARY,
        &TrainSummary {
            ablation: cfg.ablation.to_string(),
            loss: cfg.loss.to_string(),
            lr: tcfg.lr,
            epochs_run: report.epoch_losses.len(),
            best_epoch: report.best_epoch,
            epoch_losses: report.epoch_losses.clone(),
            val_hr10: report.val_hr10.clone(),
        },
    )?;
    Ok(report)
}

pub fn evaluate(cfg: &RunConfig, ws: &Workspace) -> Result<Report> {
    let data = Loaded::from_workspace(ws)?;
    let model = ws.load_model()?;
    let enc = data.encoder(cfg);
    let features = Features::new(&data.embeddings, &enc)?;
    let seed = rng::stage_seed(cfg.seed, "evaluate");
    let ev = eval::evaluate(&features, &model, &data.seqs, cfg.eval_negatives, seed)?;
    let report = ev.report(&cfg.dataset, cfg.seed, model.ablation, cfg.eval_negatives, data.seqs.len());
    fs::write(ws.path(METRICS), report.to_json()?)?;
    let mut w = ws.create(RANKS)?;
    ev.write_ranks(&data.hin, &mut w)?;
    w.flush()?;
    let hr10 = |a: &eval::Aggregates| a.all[&10].hr;
    info!(
        "{} HR@10 {:.4} (popularity {:.4})",
        model.ablation,
        hr10(&report.model),
        hr10(&report.popularity)
    );
    Ok(report)
}

/// Explanations for the top recommendations of the first
/// `explain-users` users, ranked among their first test item's candidates.
pub fn explain(cfg: &RunConfig, ws: &Workspace) -> Result<Vec<String>> {
    let data = Loaded::from_workspace(ws)?;
    let model = ws.load_model()?;
    let enc = data.encoder(cfg);
    let features = Features::new(&data.embeddings, &enc)?;
    let seed = rng::stage_seed(cfg.seed, "evaluate");
    let picked: Vec<UserSequence> = data
        .seqs
        .iter()
        .filter(|s| !s.test.is_empty())
        .take(cfg.explain_users)
        .cloned()
        .collect();
    let cases = eval::build_protocol(&data.hin, &picked, cfg.eval_negatives, seed);
    let mut lines = Vec::new();
    for (s, seq) in picked.iter().enumerate() {
        let Some(case) = cases.iter().find(|c| c.seq == s && c.position == 0) else {
            continue;
        };
        let mut cands = vec![case.positive];
        cands.extend(&case.negatives);
        let recs: Vec<_> = recommend(&model, &features, seq, &cands, cfg.explain_top)?
            .into_iter()
            .map(|(v, _)| v)
            .collect();
        for rec in explain_topk(&model, &features, seq, &recs)? {
            lines.push(rec.to_string());
        }
    }
    let mut w = ws.create(EXPLANATIONS)?;
    for l in &lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    info!("wrote {} explanation records", lines.len());
    Ok(lines)
}

pub fn run_all(cfg: &RunConfig, ws: &Workspace, interactions: &Path, metadata: &Path) -> Result<Report> {
    prepare(cfg, ws, interactions, metadata)?;
    init_embed(cfg, ws)?;
    sample_paths(cfg, ws)?;
    encode_paths(cfg, ws)?;
    train(cfg, ws)?;
    let report = evaluate(cfg, ws)?;
    explain(cfg, ws)?;
    Ok(report)
}

/// Runs `f` on a pool with `workers` threads (0 = every core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let threads = if workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        workers
    };
    pool(threads)?.install(f)
}


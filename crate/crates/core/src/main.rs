use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use tmer::config::{RunConfig, Source};
use tmer::pipeline::{self, Workspace};
use tmer::synth::{self, SynthConfig};
use tmer::Result;

#[derive(Parser, Debug)]
#[command(name = "tmer", version, about = "Meta-path guided sequential recommendation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat `key = value` file; keys mirror the long flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    dim: Option<String>,
    #[arg(long, global = true)]
    heads: Option<String>,
    #[arg(long, global = true)]
    k_paths: Option<String>,
    #[arg(long, global = true)]
    n_neg: Option<String>,
    #[arg(long, global = true)]
    lr: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    /// full, RUI or RII
    #[arg(long, global = true)]
    ablation: Option<String>,
    /// standard or paper-literal
    #[arg(long, global = true)]
    loss: Option<String>,
    /// Threads for parallel stages (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<String>,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory holding stage artifacts.
    #[arg(long, global = true, default_value = "work")]
    work_dir: PathBuf,
}

#[derive(Args, Debug)]
struct Inputs {
    /// Tab-separated `user item timestamp` rows.
    #[arg(long)]
    interactions: PathBuf,
    /// Tab-separated `item brand category` rows.
    #[arg(long)]
    metadata: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the graph and user sequences.
    Prepare(Inputs),
    /// Walk embeddings for users and items.
    InitEmbed,
    /// Sample path instances for every training pair.
    SamplePaths,
    /// Learn path token vectors.
    EncodePaths,
    Train,
    Evaluate,
    Explain,
    /// Every stage in order.
    RunAll(Inputs),
    /// Write a synthetic dataset with planted brand structure.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 500)]
        items: usize,
        #[arg(long, default_value_t = 20)]
        brands: usize,
        #[arg(long, default_value_t = 10)]
        categories: usize,
        #[arg(long, default_value_t = 0.9)]
        follow: f64,
    },
}

fn build_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &g.config {
        cfg.apply_file(p)?;
    }
    let flags = [
        ("seed", &g.seed),
        ("dim", &g.dim),
        ("heads", &g.heads),
        ("k-paths", &g.k_paths),
        ("n-neg", &g.n_neg),
        ("lr", &g.lr),
        ("epochs", &g.epochs),
        ("ablation", &g.ablation),
        ("loss", &g.loss),
        ("workers", &g.workers),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v, Source::Flag)?;
        }
    }
    for kv in &g.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| tmer::Error::Config(format!("--set expects key=value, got `{kv}`")))?;
        cfg.set(k, v, Source::Flag)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli.global)?;
    cfg.log();
    info!("seed {}", cfg.seed);
    let ws = Workspace::new(&cli.global.work_dir)?;
    let inputs = |i: &Inputs| (i.interactions.clone(), i.metadata.clone());
    pipeline::with_workers(cfg.workers, || match &cli.command {
        Command::Prepare(i) => {
            let (a, b) = inputs(i);
            let s = pipeline::prepare(&cfg, &ws, &a, &b)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            Ok(())
        }
        Command::InitEmbed => pipeline::init_embed(&cfg, &ws),
        Command::SamplePaths => pipeline::sample_paths(&cfg, &ws),
        Command::EncodePaths => pipeline::encode_paths(&cfg, &ws),
        Command::Train => pipeline::train(&cfg, &ws).map(|_| ()),
        Command::Evaluate => {
            let r = pipeline::evaluate(&cfg, &ws)?;
            println!("{}", r.to_json()?);
            Ok(())
        }
        Command::Explain => {
            for line in pipeline::explain(&cfg, &ws)? {
                println!("{line}");
            }
            Ok(())
        }
        Command::RunAll(i) => {
            let (a, b) = inputs(i);
            let r = pipeline::run_all(&cfg, &ws, &a, &b)?;
            println!("{}", r.to_json()?);
            Ok(())
        }
        Command::Synth {
            out,
            users,
            items,
            brands,
            categories,
            follow,
        } => {
            let data = synth::generate(&SynthConfig {
                users: *users,
                items: *items,
                brands: *brands,
                categories: *categories,
                follow: *follow,
                seed: cfg.seed,
                ..SynthConfig::default()
            })?;
            let (a, b) = synth::write(&data, Path::new(out))?;
            println!("{}\n{}", a.display(), b.display());
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

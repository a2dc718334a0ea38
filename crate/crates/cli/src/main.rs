use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use awdlm::cache::{evaluate_with_cache, tune_cache, word_loss_diff, CacheConfig, CacheGrid};
use awdlm::corpus::{Corpus, CorpusPaths, Vocabulary};
use awdlm::harness::{
    ablate, evaluate, fine_tune, load_checkpoint, train, Ablation, AblationRow, Checkpoint, Profile, RunConfig,
    Split,
};
use awdlm::model::evaluate_ids;

#[derive(Parser)]
#[command(name = "awdlm", version, about = "Regularized LSTM language models with NT-ASGD and a neural cache")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from scratch
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Directory for metrics and checkpoints
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Resume from the checkpoint.bin in --out
        #[arg(long)]
        resume: bool,
    },
    /// Perplexity of a checkpoint on one split
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Continue a finished run with averaging from the first step
    Finetune {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Grid-search cache window, λ and θ on the validation split
    CacheTune {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        thetas: Option<Vec<f64>>,
    },
    /// Perplexity with the cache enabled
    CacheEval {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cache: CacheArgs,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Per-word loss change caused by the cache
    AnalyzeCache {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cache: CacheArgs,
        #[arg(long, default_value = "valid")]
        split: String,
        /// Write the full table here instead of printing the extremes
        #[arg(long)]
        tsv: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        rows: usize,
    },
    /// Train with one technique removed and print a results row
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Ablation names, or "all"; "baseline" runs the unmodified config
        #[arg(required = true)]
        names: Vec<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = ["ptb", "wt2", "tiny"])]
    profile: Option<String>,
    /// `key = value` config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory with train.txt, valid.txt and test.txt
    #[arg(long, env = "AWDLM_DATA")]
    data: Option<PathBuf>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    bptt: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    wdrop: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    nonmono: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra overrides as key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(p) = &self.config {
            c.apply_text(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?;
        }
        if let Some(p) = &self.profile {
            let profile: Profile = p.parse()?;
            if profile != c.profile || self.config.is_none() {
                c = RunConfig {
                    data: c.data.clone(),
                    ..RunConfig::profile(profile)
                };
            }
        }
        let mut set = |k: &str, v: Option<String>| v.map(|v| c.set(k, &v)).transpose();
        set("layers", self.layers.map(|v| v.to_string()))?;
        set("hidden", self.hidden.map(|v| v.to_string()))?;
        set("embed", self.embed.map(|v| v.to_string()))?;
        set("batch", self.batch.map(|v| v.to_string()))?;
        set("bptt", self.bptt.map(|v| v.to_string()))?;
        set("lr", self.lr.map(|v| v.to_string()))?;
        set("clip", self.clip.map(|v| v.to_string()))?;
        set("wdrop", self.wdrop.map(|v| v.to_string()))?;
        set("alpha", self.alpha.map(|v| v.to_string()))?;
        set("beta", self.beta.map(|v| v.to_string()))?;
        set("nonmono", self.nonmono.map(|v| v.to_string()))?;
        set("epochs", self.epochs.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("data", self.data.as_ref().map(|p| p.display().to_string()))?;
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got {kv:?}"))?;
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Checkpoint file
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory with train.txt, valid.txt and test.txt
    #[arg(long, env = "AWDLM_DATA")]
    data: Option<PathBuf>,
    /// Evaluation window length (defaults to the run's bptt)
    #[arg(long)]
    bptt: Option<usize>,
}

impl ModelArgs {
    fn load(&self) -> Result<(Checkpoint<f32>, Corpus)> {
        let ckpt: Checkpoint<f32> = load_checkpoint(&self.checkpoint)?;
        let dir = self
            .data
            .clone()
            .or_else(|| ckpt.config.data.clone())
            .context("no data directory: pass --data or set AWDLM_DATA")?;
        let corpus = Corpus::load(&CorpusPaths::in_dir(dir))?;
        awdlm::harness::check_vocab(&ckpt.vocab, &corpus)?;
        Ok((ckpt, corpus))
    }

    fn bptt(&self, ckpt: &Checkpoint<f32>) -> usize {
        self.bptt.unwrap_or(ckpt.config.bptt)
    }
}

#[derive(Args)]
struct CacheArgs {
    #[arg(long, default_value_t = 2000)]
    window: usize,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
}

impl CacheArgs {
    fn config(&self) -> CacheConfig {
        CacheConfig {
            window: self.window,
            lambda: self.lambda,
            theta: self.theta,
        }
    }
}

fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    let dir = config
        .data
        .as_deref()
        .context("no data directory: pass --data, set AWDLM_DATA or put `data = ...` in the config")?;
    Ok(Corpus::load(&CorpusPaths::in_dir(dir))?)
}

fn print_config(c: &RunConfig) {
    println!("# effective config");
    for line in c.dump().lines() {
        println!("# {line}");
    }
}

fn cmd_train(run: &RunArgs, out: &Path, resume: bool) -> Result<()> {
    if resume {
        let ckpt: Checkpoint<f32> = load_checkpoint(out.join(awdlm::harness::CHECKPOINT_FILE))?;
        print_config(&ckpt.config);
        let corpus = load_corpus(&ckpt.config)?;
        let mut t = awdlm::harness::Trainer::resume(ckpt, corpus)?.with_output(out)?;
        t.run()?;
        println!("{}", awdlm::harness::MetricLine::HEADER);
        t.history().iter().for_each(|m| println!("{}", m.tsv()));
        return Ok(());
    }
    let config = run.resolve()?;
    print_config(&config);
    let corpus = load_corpus(&config)?;
    let t = train(config, corpus, Some(out))?;
    println!("{}", awdlm::harness::MetricLine::HEADER);
    t.history().iter().for_each(|m| println!("{}", m.tsv()));
    Ok(())
}

fn split_ids<'a>(corpus: &'a Corpus, split: &str) -> Result<&'a [usize]> {
    Ok(split.parse::<Split>()?.ids(corpus))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train { run, out, resume } => cmd_train(&run, &out, resume)?,
        Command::Eval { model, split, batch } => {
            let (ckpt, corpus) = model.load()?;
            let s: Split = split.parse()?;
            let batch = batch.unwrap_or(match s {
                Split::Test => ckpt.config.test_batch,
                _ => ckpt.config.eval_batch,
            });
            let r = evaluate(&ckpt, &corpus, s, batch, model.bptt(&ckpt))?;
            println!("{split}\tperplexity\t{:.4}\ttokens\t{}", r.perplexity, r.tokens);
        }
        Command::Finetune { model, out } => {
            let (ckpt, corpus) = model.load()?;
            print_config(&ckpt.config);
            let t = fine_tune(ckpt, corpus, Some(&out))?;
            println!("{}", awdlm::harness::MetricLine::HEADER);
            t.history().iter().for_each(|m| println!("{}", m.tsv()));
        }
        Command::CacheTune {
            model,
            windows,
            lambdas,
            thetas,
        } => {
            let (ckpt, corpus) = model.load()?;
            let d = CacheGrid::default();
            let grid = CacheGrid {
                windows: windows.unwrap_or(d.windows),
                lambdas: lambdas.unwrap_or(d.lambdas),
                thetas: thetas.unwrap_or(d.thetas),
            };
            let r = tune_cache(&ckpt.params, &corpus.valid, &grid, model.bptt(&ckpt))?;
            println!("window\tlambda\ttheta\tvalid_ppl");
            for (c, p) in &r.table {
                println!("{}\t{}\t{}\t{:.4}", c.window, c.lambda, c.theta, p);
            }
            println!(
                "# best window={} lambda={} theta={} valid_ppl={:.4} (no cache {:.4})",
                r.best.window, r.best.lambda, r.best.theta, r.best_perplexity, r.baseline_perplexity
            );
        }
        Command::CacheEval { model, cache, split } => {
            let (ckpt, corpus) = model.load()?;
            let ids = split_ids(&corpus, &split)?;
            let r = evaluate_with_cache(&ckpt.params, ids, &cache.config(), model.bptt(&ckpt))?;
            let plain = evaluate_ids(&ckpt.params, ids, 1, model.bptt(&ckpt))?;
            println!(
                "{split}\tperplexity\t{:.4}\tno_cache\t{:.4}\ttokens\t{}",
                r.result.perplexity, plain.perplexity, r.result.tokens
            );
        }
        Command::AnalyzeCache {
            model,
            cache,
            split,
            tsv,
            rows,
        } => {
            let (ckpt, corpus) = model.load()?;
            let ids = split_ids(&corpus, &split)?;
            let bptt = model.bptt(&ckpt);
            let base = evaluate_with_cache(
                &ckpt.params,
                ids,
                &CacheConfig {
                    lambda: 0.0,
                    ..cache.config()
                },
                bptt,
            )?;
            let with = evaluate_with_cache(&ckpt.params, ids, &cache.config(), bptt)?;
            let vocab = Vocabulary::from_tokens(ckpt.vocab.clone())?;
            let report = word_loss_diff(&base.losses, &with.losses, &base.targets, &vocab)?;
            match tsv {
                Some(p) => {
                    std::fs::write(&p, report.to_tsv())?;
                    println!("wrote {} rows to {}", report.rows.len(), p.display());
                }
                None => print!("{}", report.extremes_tsv(rows)),
            }
        }
        Command::Ablate { run, names } => {
            let config = run.resolve()?;
            print_config(&config);
            let corpus = load_corpus(&config)?;
            let mut selected: Vec<Option<Ablation>> = Vec::new();
            for n in &names {
                match n.as_str() {
                    "all" => selected.extend(Ablation::ALL.map(Some)),
                    "baseline" => selected.push(None),
                    other => selected.push(Some(other.parse()?)),
                }
            }
            if selected.is_empty() {
                bail!("no ablations selected");
            }
            println!("{}", AblationRow::HEADER);
            for a in selected {
                let row = ablate(&config, a, &corpus)?;
                println!("{}", row.tsv());
            }
        }
    }
    Ok(())
}

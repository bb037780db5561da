//! Command-line driver.
//!
//! Exit codes: 0 success, 2 input or format error, 3 pool exhausted before the
//! configured iterations, 64 usage or validation error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{unigram_overlap, OverlapReport, Side};
use crate::corpus::{load_corpus, Corpus, CorpusFormat, PoolState};
use crate::embedding::{EmbeddingStore, DEFAULT_FALLBACK_DIM};
use crate::scoring::{score_pool, LogprobTable, UncertaintyKind, DEFAULT_POOL_CAP};
use crate::simulator::{
    config_from_manifest, run_simulation, write_bundle, LogprobSource, SimulationConfig,
    DEFAULT_ITERATIONS, DEFAULT_SEED_SIZE,
};
use crate::strategies::{
    huds_scores, select_diversity, select_huds, select_idds_with, select_random, select_uncertainty,
    HudsParams, SelectionHeader, Strategy, DEFAULT_ALPHA, DEFAULT_K, DEFAULT_LAMBDA,
};
use crate::stratify::{stratify, DEFAULT_CLUSTERS, DEFAULT_MAX_ITER, DEFAULT_STRATA, DEFAULT_TOL};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_EXHAUSTED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "huds", version, about = "Active-learning data selection for sentence corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score a pool with NNLL or NSP from exported log-probabilities
    Score(ScoreArgs),
    /// Write fallback hashed n-gram embeddings for a corpus
    Embed(EmbedArgs),
    /// Run one acquisition step over a pool
    Select(SelectArgs),
    /// Simulate the full active-learning loop
    Simulate(SimulateArgs),
    /// Unigram overlap between selected sentences and a reference set
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Random,
    Uncertainty,
    Nsp,
    Diversity,
    Idds,
    Huds,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Uncertainty => Strategy::Uncertainty,
            StrategyArg::Nsp => Strategy::Nsp,
            StrategyArg::Diversity => Strategy::Diversity,
            StrategyArg::Idds => Strategy::Idds,
            StrategyArg::Huds => Strategy::Huds,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Nnll,
    Nsp,
}

impl From<KindArg> for UncertaintyKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Nnll => UncertaintyKind::Nnll,
            KindArg::Nsp => UncertaintyKind::Nsp,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EmbedFormat {
    Alemb1,
    Jsonl,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SideArg {
    Source,
    Target,
    Combined,
    All,
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("{x} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be >= 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args, Debug, Clone)]
struct StrategyOpts {
    /// Acquisition strategy
    #[arg(long, value_enum, default_value_t = StrategyArg::Huds)]
    strategy: StrategyArg,
    /// Hybrid weight of diversity against uncertainty
    #[arg(long, default_value_t = DEFAULT_LAMBDA, value_parser = unit_interval)]
    lambda: f64,
    /// Number of uncertainty strata
    #[arg(long, default_value_t = DEFAULT_STRATA, value_parser = positive)]
    strata: usize,
    /// k-means clusters per stratum
    #[arg(long, default_value_t = DEFAULT_CLUSTERS, value_parser = positive)]
    clusters: usize,
    /// k-means iteration limit
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    kmeans_max_iter: usize,
    /// k-means centroid-shift tolerance
    #[arg(long, default_value_t = DEFAULT_TOL)]
    kmeans_tol: f64,
    /// IDDS weight of unlabeled-pool similarity against labeled-set similarity
    #[arg(long, default_value_t = DEFAULT_ALPHA, value_parser = unit_interval)]
    alpha: f64,
    /// Uncertainty score used by uncertainty and huds
    #[arg(long, value_enum, default_value_t = KindArg::Nnll)]
    uncertainty_kind: KindArg,
    /// Mix raw uncertainty and diversity without min-max normalization
    #[arg(long)]
    no_normalize: bool,
    /// IDDS with the unlabeled and labeled sets swapped
    #[arg(long)]
    idds_literal_eq5: bool,
    /// Candidates scored per step
    #[arg(long, default_value_t = DEFAULT_POOL_CAP, value_parser = positive)]
    pool_cap: usize,
    /// Master random seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dimension of fallback embeddings when --embeddings is absent
    #[arg(long, default_value_t = DEFAULT_FALLBACK_DIM)]
    embed_dim: usize,
}

impl StrategyOpts {
    fn huds(&self) -> HudsParams {
        HudsParams {
            lambda: self.lambda,
            strata: self.strata,
            normalize: !self.no_normalize,
            clusters: self.clusters,
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
        }
    }
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Corpus file (.jsonl or .tsv)
    #[arg(long)]
    corpus: PathBuf,
    /// Log-probability JSONL file
    #[arg(long)]
    logprobs: PathBuf,
    /// Pool snapshot; its unlabeled ids are scored (default: whole corpus)
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Uncertainty score
    #[arg(long, value_enum, default_value_t = KindArg::Nnll)]
    uncertainty_kind: KindArg,
    /// Candidates scored
    #[arg(long, default_value_t = DEFAULT_POOL_CAP, value_parser = positive)]
    pool_cap: usize,
    /// Master random seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    /// Corpus file (.jsonl or .tsv)
    #[arg(long)]
    corpus: PathBuf,
    /// Embedding dimension
    #[arg(long, default_value_t = DEFAULT_FALLBACK_DIM)]
    embed_dim: usize,
    /// Output encoding
    #[arg(long, value_enum, default_value_t = EmbedFormat::Alemb1)]
    format: EmbedFormat,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    opts: StrategyOpts,
    /// Number of sentences to select
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Corpus file (.jsonl or .tsv)
    #[arg(long)]
    corpus: PathBuf,
    /// Log-probability JSONL file
    #[arg(long)]
    logprobs: Option<PathBuf>,
    /// Embedding file (ALEMB1 or JSONL); fallback embeddings when absent
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Pool snapshot to select from (default: whole corpus unlabeled)
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    opts: StrategyOpts,
    /// Sentences selected per iteration
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    k: usize,
    /// Number of iterations
    #[arg(long, default_value_t = DEFAULT_ITERATIONS, value_parser = positive)]
    iterations: usize,
    /// Size of the random initial labeled set
    #[arg(long, default_value_t = DEFAULT_SEED_SIZE)]
    seed_size: usize,
    /// Corpus file (.jsonl or .tsv)
    #[arg(long, required_unless_present = "manifest")]
    corpus: Option<PathBuf>,
    /// Log-probability JSONL file, reused every iteration
    #[arg(long, conflicts_with = "logprobs_per_iteration")]
    logprobs: Option<PathBuf>,
    /// Per-iteration log-probability path pattern containing `{iter}`
    #[arg(long)]
    logprobs_per_iteration: Option<String>,
    /// Embedding file (ALEMB1 or JSONL); fallback embeddings when absent
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Comma-separated lambda values, one sub-run each
    #[arg(long, value_delimiter = ',', value_parser = unit_interval)]
    lambda_sweep: Option<Vec<f64>>,
    /// Replay the configuration recorded in a run manifest
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Selected sentences as `name=path` or `path` (repeatable)
    #[arg(long, required = true)]
    selected: Vec<String>,
    /// Reference (validation) corpus
    #[arg(long)]
    reference: PathBuf,
    /// Vocabulary side
    #[arg(long, value_enum, default_value_t = SideArg::All)]
    side: SideArg,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

/// Run the CLI on `argv` (program name first) and return the exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Score(a) => score(a).map(|()| EXIT_OK),
        Command::Embed(a) => embed(a).map(|()| EXIT_OK),
        Command::Select(a) => select(a).map(|()| EXIT_OK),
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a).map(|()| EXIT_OK),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) | Error::Usage(_) => EXIT_USAGE,
        Error::Exhausted { .. } => EXIT_EXHAUSTED,
        _ => EXIT_INPUT,
    }
}

fn load(path: &Path) -> Result<Corpus> {
    load_corpus(path, CorpusFormat::from_path(path))
}

fn load_pool(path: Option<&PathBuf>, corpus: &Corpus) -> Result<PoolState> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            PoolState::from_json(&text, corpus)
        }
        None => Ok(PoolState::all_unlabeled(corpus)),
    }
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn manifest(verb: &str, config: serde_json::Value, outputs: serde_json::Value) -> serde_json::Value {
    use sha2::{Digest, Sha256};
    let digest = hex::encode(Sha256::digest(config.to_string().as_bytes()))[..16].to_string();
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "verb": verb,
        "config": config,
        "config_digest": digest,
        "outputs": outputs,
    })
}

fn score(a: ScoreArgs) -> Result<()> {
    let corpus = load(&a.corpus)?;
    let pool = load_pool(a.pool.as_ref(), &corpus)?;
    let table = LogprobTable::load(&a.logprobs)?;
    let scores = score_pool(&pool.unlabeled, &table, a.uncertainty_kind.into(), a.pool_cap, a.seed)?;
    create_out(&a.out)?;
    let path = a.out.join("scores.jsonl");
    fs::write(&path, scores.to_jsonl()).map_err(|e| Error::io(&path, e))?;
    let config = json!({
        "corpus": a.corpus, "logprobs": a.logprobs, "pool": a.pool,
        "uncertainty_kind": scores.kind, "pool_cap": a.pool_cap, "seed": a.seed,
    });
    write_json(
        &a.out.join("manifest.json"),
        &manifest("score", config, json!({"scores": "scores.jsonl", "scored": scores.len()})),
    )
}

fn embed(a: EmbedArgs) -> Result<()> {
    let corpus = load(&a.corpus)?;
    let store = EmbeddingStore::fallback(&corpus, a.embed_dim)?;
    create_out(&a.out)?;
    let name = match a.format {
        EmbedFormat::Alemb1 => {
            store.write_alemb1(&a.out.join("embeddings.alemb"))?;
            "embeddings.alemb"
        }
        EmbedFormat::Jsonl => {
            store.write_jsonl(&a.out.join("embeddings.jsonl"))?;
            "embeddings.jsonl"
        }
    };
    let config = json!({"corpus": a.corpus, "embed_dim": a.embed_dim, "embedder": "fallback hashed character 3-grams"});
    write_json(
        &a.out.join("manifest.json"),
        &manifest("embed", config, json!({"embeddings": name, "count": store.len()})),
    )
}

fn select(a: SelectArgs) -> Result<()> {
    let o = &a.opts;
    let strategy: Strategy = o.strategy.into();
    let corpus = load(&a.corpus)?;
    let pool = load_pool(a.pool.as_ref(), &corpus)?;
    if pool.unlabeled.is_empty() {
        return Err(Error::Degenerate("pool has no unlabeled sentences".into()));
    }
    let kind = match strategy {
        Strategy::Nsp => UncertaintyKind::Nsp,
        _ => o.uncertainty_kind.into(),
    };
    let scores = match &a.logprobs {
        Some(p) => Some(score_pool(&pool.unlabeled, &LogprobTable::load(p)?, kind, o.pool_cap, o.seed)?),
        None if strategy.needs_logprobs() => {
            return Err(Error::Config(format!("strategy {strategy} needs --logprobs")))
        }
        None => None,
    };
    let store = match &a.embeddings {
        Some(p) => Some(EmbeddingStore::load(p)?),
        None if strategy.needs_embeddings() => Some(EmbeddingStore::fallback(&corpus, o.embed_dim)?),
        None => None,
    };
    let candidates: BTreeSet<String> = match &scores {
        Some(s) => s.ids().cloned().collect(),
        None => crate::scoring::cap_pool(&pool.unlabeled, o.pool_cap, o.seed)
            .into_iter()
            .cloned()
            .collect(),
    };
    let params = o.huds();
    let need = |what: &str| Error::Config(format!("strategy {strategy} needs {what}"));
    create_out(&a.out)?;

    let mut outputs = json!({"selection": "selection.jsonl"});
    let mut result = match strategy {
        Strategy::Random => select_random(&candidates, a.k, o.seed)?,
        Strategy::Uncertainty | Strategy::Nsp => select_uncertainty(scores.as_ref().unwrap(), a.k)?,
        Strategy::Diversity | Strategy::Huds => {
            let scores = scores.as_ref().ok_or_else(|| need("--logprobs"))?;
            let store = store.as_ref().ok_or_else(|| need("embeddings"))?;
            let strata = stratify(scores, params.strata)?;
            let path = a.out.join("strata.json");
            fs::write(&path, strata.to_json()).map_err(|e| Error::io(&path, e))?;
            outputs["strata"] = json!("strata.json");
            if strategy == Strategy::Huds {
                select_huds(scores, store, &params, a.k, o.seed)?
            } else {
                let (_, div) = huds_scores(scores, store, &params, o.seed)?;
                select_diversity(&div, a.k)?
            }
        }
        Strategy::Idds => select_idds_with(
            &candidates,
            &pool.labeled,
            store.as_ref().ok_or_else(|| need("embeddings"))?,
            o.alpha,
            a.k,
            o.idds_literal_eq5,
        )?,
    };

    let config = json!({
        "strategy": strategy, "huds": params, "alpha": o.alpha, "uncertainty_kind": kind,
        "idds_swap_sets": o.idds_literal_eq5, "k": a.k, "pool_cap": o.pool_cap, "seed": o.seed,
        "corpus": a.corpus, "logprobs": a.logprobs, "embeddings": a.embeddings,
        "embedding_source": store.as_ref().map(|s| s.source_tag.clone()),
        "embed_dim": o.embed_dim, "pool": a.pool,
    });
    let m = manifest("select", config, outputs);
    result.config_digest = m["config_digest"].as_str().unwrap_or_default().to_string();
    let header = SelectionHeader {
        strategy,
        iteration: 0,
        lambda: params.lambda,
        n: params.strata,
        k: a.k,
        seed: o.seed,
        iteration_seed: o.seed,
        config_digest: result.config_digest.clone(),
    };
    result.write(&header, &a.out.join("selection.jsonl"))?;
    write_json(&a.out.join("manifest.json"), &m)
}

fn simulate(a: SimulateArgs) -> Result<i32> {
    let config = match &a.manifest {
        Some(m) => config_from_manifest(m)?,
        None => {
            let o = &a.opts;
            let mut c = SimulationConfig::new(o.strategy.into(), a.corpus.clone().expect("required by clap"));
            c.huds = o.huds();
            c.alpha = o.alpha;
            c.uncertainty_kind = o.uncertainty_kind.into();
            c.idds_swap_sets = o.idds_literal_eq5;
            c.batch_size = a.k;
            c.iterations = a.iterations;
            c.seed_size = a.seed_size;
            c.pool_cap = o.pool_cap;
            c.rng_seed = o.seed;
            c.logprobs = match (&a.logprobs, &a.logprobs_per_iteration) {
                (Some(p), _) => Some(LogprobSource::Static(p.clone())),
                (None, Some(pat)) => Some(LogprobSource::PerIteration(pat.clone())),
                (None, None) => None,
            };
            c.embeddings = a.embeddings.clone();
            c.fallback_dim = o.embed_dim;
            c.lambda_sweep = a.lambda_sweep.clone();
            c
        }
    };
    let bundle = run_simulation(&config)?;
    write_bundle(&bundle, &a.out)?;
    if bundle.exhausted() {
        eprintln!("warning: unlabeled pool exhausted before {} iterations", config.iterations);
        Ok(EXIT_EXHAUSTED)
    } else {
        Ok(EXIT_OK)
    }
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let reference = load(&a.reference)?;
    let sides: Vec<Side> = match a.side {
        SideArg::Source => vec![Side::Source],
        SideArg::Target => vec![Side::Target],
        SideArg::Combined => vec![Side::Combined],
        SideArg::All => Side::ALL.to_vec(),
    };
    let mut reports: Vec<OverlapReport> = Vec::new();
    for spec in &a.selected {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let n = p.file_stem().and_then(|s| s.to_str()).unwrap_or("selected").to_string();
                (n, p)
            }
        };
        let selected = load(&path)?;
        for &side in &sides {
            let mut r = unigram_overlap(selected.records(), reference.records(), side)?;
            r.strategy = Some(name.clone());
            reports.push(r);
        }
    }
    create_out(&a.out)?;
    write_json(&a.out.join("overlap.json"), &serde_json::to_value(&reports)?)?;
    let config = json!({"selected": a.selected, "reference": a.reference, "sides": sides});
    write_json(
        &a.out.join("manifest.json"),
        &manifest("analyze", config, json!({"overlap": "overlap.json"})),
    )
}

//! Active-learning loop emulation.
//!
//! A run draws a random labeled seed set, then repeats query → annotate →
//! transfer for a fixed number of iterations. Annotation is emulated by
//! revealing the stored target. The first iteration always selects at random;
//! the configured strategy takes over from iteration 2.
//!
//! Each iteration `t` works on a candidate pool: a uniform subsample of at most
//! `pool_cap` unlabeled ids drawn from the stream seeded with `rng_seed + t`.
//! When log-probabilities and embeddings are available the candidates are
//! scored and stratified every iteration, whatever the strategy, so that each
//! selected id carries its raw uncertainty and diversity at selection time.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{scatter_csv, scatter_export};
use crate::corpus::{init_pools, load_corpus, write_records, Corpus, CorpusFormat, PoolState};
use crate::embedding::{EmbeddingStore, DEFAULT_FALLBACK_DIM};
use crate::scoring::{cap_pool, score_pool, LogprobTable, ScoreTable, UncertaintyKind, DEFAULT_POOL_CAP};
use crate::strategies::{
    huds_scores, select_diversity, select_huds, select_idds_with, select_random, select_uncertainty,
    Diagnostics, HudsParams, SelectionHeader, SelectionResult, Strategy, DEFAULT_ALPHA, DEFAULT_K,
};
use crate::stratify::DiversityTable;
use crate::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_SEED_SIZE: usize = 1000;

/// Where log-probabilities come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogprobSource {
    /// One file scored once and reused every iteration.
    Static(PathBuf),
    /// A path pattern with an `{iter}` placeholder, one file per iteration.
    PerIteration(String),
}

impl LogprobSource {
    pub fn path_for(&self, iteration: usize) -> PathBuf {
        match self {
            LogprobSource::Static(p) => p.clone(),
            LogprobSource::PerIteration(pat) => PathBuf::from(pat.replace("{iter}", &iteration.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub strategy: Strategy,
    pub huds: HudsParams,
    pub alpha: f64,
    pub uncertainty_kind: UncertaintyKind,
    /// Swap the unlabeled/labeled sets in the IDDS formula.
    pub idds_swap_sets: bool,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed_size: usize,
    pub pool_cap: usize,
    pub rng_seed: u64,
    pub corpus: PathBuf,
    pub logprobs: Option<LogprobSource>,
    pub embeddings: Option<PathBuf>,
    pub fallback_dim: usize,
    pub lambda_sweep: Option<Vec<f64>>,
}

impl SimulationConfig {
    pub fn new(strategy: Strategy, corpus: impl Into<PathBuf>) -> Self {
        SimulationConfig {
            strategy,
            huds: HudsParams::default(),
            alpha: DEFAULT_ALPHA,
            uncertainty_kind: UncertaintyKind::Nnll,
            idds_swap_sets: false,
            batch_size: DEFAULT_K,
            iterations: DEFAULT_ITERATIONS,
            seed_size: DEFAULT_SEED_SIZE,
            pool_cap: DEFAULT_POOL_CAP,
            rng_seed: 0,
            corpus: corpus.into(),
            logprobs: None,
            embeddings: None,
            fallback_dim: DEFAULT_FALLBACK_DIM,
            lambda_sweep: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {x}")))
            }
        };
        unit("lambda", self.huds.lambda)?;
        unit("alpha", self.alpha)?;
        for &l in self.lambda_sweep.iter().flatten() {
            unit("lambda sweep value", l)?;
        }
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::Config("batch size and iterations must be >= 1".into()));
        }
        if self.huds.strata == 0 || self.huds.clusters == 0 {
            return Err(Error::Config("strata and cluster counts must be >= 1".into()));
        }
        if self.pool_cap == 0 {
            return Err(Error::Config("pool cap must be >= 1".into()));
        }
        Ok(())
    }

    /// Uncertainty kind actually scored: NSP is forced for the NSP baseline.
    pub fn score_kind(&self) -> UncertaintyKind {
        match self.strategy {
            Strategy::Nsp => UncertaintyKind::Nsp,
            _ => self.uncertainty_kind,
        }
    }

    pub fn budget(&self) -> usize {
        self.seed_size + self.batch_size * self.iterations
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON config.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))[..16].to_string()
    }
}

/// Loaded inputs shared by every iteration of a run.
pub struct SimulationInputs {
    pub corpus: Corpus,
    pub embeddings: Option<EmbeddingStore>,
    logprobs: Option<LogprobSource>,
    cache: HashMap<PathBuf, LogprobTable>,
}

impl SimulationInputs {
    pub fn load(config: &SimulationConfig) -> Result<Self> {
        let corpus = load_corpus(&config.corpus, CorpusFormat::from_path(&config.corpus))?;
        let embeddings = match &config.embeddings {
            Some(p) => Some(EmbeddingStore::load(p)?),
            None if config.logprobs.is_some() || config.strategy.needs_embeddings() => {
                Some(EmbeddingStore::fallback(&corpus, config.fallback_dim)?)
            }
            None => None,
        };
        let mut inputs = SimulationInputs {
            corpus,
            embeddings,
            logprobs: config.logprobs.clone(),
            cache: HashMap::new(),
        };
        if let Some(LogprobSource::Static(p)) = &config.logprobs {
            let table = LogprobTable::load(p)?;
            inputs.cache.insert(p.clone(), table);
        }
        Ok(inputs)
    }

    /// In-memory inputs; `logprobs` is used as a static source for every iteration.
    pub fn from_parts(
        corpus: Corpus,
        logprobs: Option<LogprobTable>,
        embeddings: Option<EmbeddingStore>,
    ) -> Self {
        let key = PathBuf::from("<memory>");
        let mut cache = HashMap::new();
        let source = logprobs.map(|t| {
            cache.insert(key.clone(), t);
            LogprobSource::Static(key)
        });
        SimulationInputs {
            corpus,
            embeddings,
            logprobs: source,
            cache,
        }
    }

    fn logprobs_for(&mut self, iteration: usize) -> Result<Option<&LogprobTable>> {
        let Some(src) = &self.logprobs else {
            return Ok(None);
        };
        let path = src.path_for(iteration);
        if !self.cache.contains_key(&path) {
            let table = LogprobTable::load(&path)?;
            // per-iteration files are read once and dropped with the next one
            self.cache.clear();
            self.cache.insert(path.clone(), table);
        }
        Ok(self.cache.get(&path))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Strategy that made the selection (random on iteration 1).
    pub strategy: Strategy,
    pub selected_ids: Vec<String>,
    /// `(labeled, unlabeled)` after the transfer.
    pub pool_sizes: (usize, usize),
    pub candidates: usize,
    pub strategy_diagnostics: BTreeMap<String, Diagnostics>,
    pub wall_time: Duration,
}

impl IterationRecord {
    pub fn selection(&self) -> SelectionResult {
        SelectionResult {
            strategy: self.strategy,
            iteration: self.iteration,
            selected_ids: self.selected_ids.clone(),
            diagnostics: self.strategy_diagnostics.clone(),
            config_digest: String::new(),
        }
    }
}

/// Seed of the random streams used in iteration `t`.
pub fn iteration_seed(config: &SimulationConfig, iteration: usize) -> u64 {
    config.rng_seed.wrapping_add(iteration as u64)
}

pub fn run_iteration(
    state: &PoolState,
    config: &SimulationConfig,
    inputs: &mut SimulationInputs,
    iteration: usize,
) -> Result<(PoolState, IterationRecord)> {
    let started = Instant::now();
    if state.unlabeled.is_empty() {
        return Err(Error::Exhausted { iteration });
    }
    let seed = iteration_seed(config, iteration);
    let kind = config.score_kind();

    let scores: Option<ScoreTable> = match inputs.logprobs_for(iteration)? {
        Some(table) => Some(score_pool(&state.unlabeled, table, kind, config.pool_cap, seed)?),
        None => None,
    };
    let candidates: BTreeSet<String> = match &scores {
        Some(s) => s.ids().cloned().collect(),
        None => cap_pool(&state.unlabeled, config.pool_cap, seed)
            .into_iter()
            .cloned()
            .collect(),
    };
    let store = inputs.embeddings.as_ref();
    let hybrid = match (&scores, store) {
        (Some(s), Some(e)) => Some(huds_scores(s, e, &config.huds, seed)?),
        _ => None,
    };

    let strategy = if iteration == 1 { Strategy::Random } else { config.strategy };
    let missing = |what: &str| Error::Config(format!("strategy {strategy} needs {what}"));
    let k = config.batch_size;
    let mut selection = match strategy {
        Strategy::Random => select_random(&candidates, k, seed)?,
        Strategy::Uncertainty | Strategy::Nsp => {
            select_uncertainty(scores.as_ref().ok_or_else(|| missing("log-probabilities"))?, k)?
        }
        Strategy::Diversity => {
            let (_, div) = hybrid.as_ref().ok_or_else(|| missing("log-probabilities and embeddings"))?;
            select_diversity(div, k)?
        }
        Strategy::Idds => select_idds_with(
            &candidates,
            &state.labeled,
            store.ok_or_else(|| missing("embeddings"))?,
            config.alpha,
            k,
            config.idds_swap_sets,
        )?,
        Strategy::Huds => select_huds(
            scores.as_ref().ok_or_else(|| missing("log-probabilities"))?,
            store.ok_or_else(|| missing("embeddings"))?,
            &config.huds,
            k,
            seed,
        )?,
    };

    if let Some((table, _)) = &hybrid {
        for id in &selection.selected_ids {
            let e = table.entries[id];
            let diag = selection.diagnostics.entry(id.clone()).or_default();
            diag.u = Some(e.u);
            diag.u_norm = Some(e.u_norm);
            diag.d = Some(e.d);
        }
    }
    selection.iteration = iteration;

    for id in &selection.selected_ids {
        if inputs.corpus.get(id).is_some_and(|r| r.target.is_none()) {
            log::warn!("iteration {iteration}: selected `{id}` has no target to reveal");
        }
    }

    let next = state.transfer(&selection.selected_ids)?;
    let record = IterationRecord {
        iteration,
        strategy,
        pool_sizes: (next.labeled.len(), next.unlabeled.len()),
        candidates: candidates.len(),
        selected_ids: selection.selected_ids,
        strategy_diagnostics: selection.diagnostics,
        wall_time: started.elapsed(),
    };
    Ok((next, record))
}

/// Outcome of one run (one λ value).
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: SimulationConfig,
    pub seed_state: PoolState,
    pub records: Vec<IterationRecord>,
    pub final_state: PoolState,
    /// Iteration at which the unlabeled pool ran dry, if it did.
    pub exhausted_at: Option<usize>,
    pub corpus: Corpus,
}

impl RunReport {
    /// Raw uncertainty and diversity of every selected id at selection time.
    /// `None` when the run had no scores to report.
    pub fn selection_tables(&self) -> Option<(ScoreTable, DiversityTable)> {
        let mut u = BTreeMap::new();
        let mut d = BTreeMap::new();
        for rec in &self.records {
            for id in &rec.selected_ids {
                let diag = rec.strategy_diagnostics.get(id)?;
                u.insert(id.clone(), diag.u?);
                d.insert(id.clone(), diag.d?);
            }
        }
        Some((
            ScoreTable::from_scores(self.config.score_kind(), u),
            DiversityTable { entries: d },
        ))
    }
}

/// Everything a simulation produced: one run, or one run per swept λ.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ReportBundle {
    Single(RunReport),
    Sweep(Vec<(f64, RunReport)>),
}

impl ReportBundle {
    pub fn exhausted(&self) -> bool {
        match self {
            ReportBundle::Single(r) => r.exhausted_at.is_some(),
            ReportBundle::Sweep(runs) => runs.iter().any(|(_, r)| r.exhausted_at.is_some()),
        }
    }
}

pub fn run_simulation(config: &SimulationConfig) -> Result<ReportBundle> {
    config.validate()?;
    if config.strategy.needs_logprobs() && config.logprobs.is_none() {
        return Err(Error::Config(format!("strategy {} needs log-probabilities", config.strategy)));
    }
    let mut inputs = SimulationInputs::load(config)?;
    run_with_inputs(config, &mut inputs)
}

pub fn run_with_inputs(config: &SimulationConfig, inputs: &mut SimulationInputs) -> Result<ReportBundle> {
    config.validate()?;
    match &config.lambda_sweep {
        None => Ok(ReportBundle::Single(run_single(config, inputs)?)),
        Some(lambdas) => {
            let mut runs = Vec::with_capacity(lambdas.len());
            for &lambda in lambdas {
                let mut sub = config.clone();
                sub.lambda_sweep = None;
                sub.huds.lambda = lambda;
                runs.push((lambda, run_single(&sub, inputs)?));
            }
            Ok(ReportBundle::Sweep(runs))
        }
    }
}

fn run_single(config: &SimulationConfig, inputs: &mut SimulationInputs) -> Result<RunReport> {
    let corpus_len = inputs.corpus.len();
    if config.budget() > corpus_len {
        log::warn!(
            "budget {} exceeds corpus size {corpus_len}; the pool will run out early",
            config.budget()
        );
    }
    let seed_state = init_pools(&inputs.corpus, config.seed_size, config.rng_seed)?;
    let mut state = seed_state.clone();
    let mut records = Vec::with_capacity(config.iterations);
    let mut exhausted_at = None;
    for t in 1..=config.iterations {
        match run_iteration(&state, config, inputs, t) {
            Ok((next, rec)) => {
                state = next;
                records.push(rec);
            }
            Err(Error::Exhausted { iteration }) => {
                exhausted_at = Some(iteration);
                break;
            }
            Err(e) => {
                return Err(Error::Iteration {
                    iteration: t,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(RunReport {
        config: config.clone(),
        seed_state,
        records,
        final_state: state,
        exhausted_at,
        corpus: inputs.corpus.clone(),
    })
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn input_digests(config: &SimulationConfig, iterations: usize) -> Result<serde_json::Value> {
    let mut logprobs = Vec::new();
    match &config.logprobs {
        Some(LogprobSource::Static(p)) => logprobs.push(json!({"path": p, "sha256": file_digest(p)?})),
        Some(src @ LogprobSource::PerIteration(_)) => {
            for t in 1..=iterations {
                let p = src.path_for(t);
                logprobs.push(json!({"iteration": t, "path": p, "sha256": file_digest(&p)?}));
            }
        }
        None => {}
    }
    let embeddings = match &config.embeddings {
        Some(p) => json!({"path": p, "sha256": file_digest(p)?}),
        None => json!({"fallback_dim": config.fallback_dim}),
    };
    Ok(json!({
        "corpus": {"path": config.corpus, "sha256": file_digest(&config.corpus)?},
        "logprobs": logprobs,
        "embeddings": embeddings,
    }))
}

fn write_run(report: &RunReport, dir: &Path) -> Result<serde_json::Value> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = &report.config;
    let digest = config.digest();
    write(&dir.join("pool_seed.json"), report.seed_state.to_json())?;

    let mut labeled: Vec<&str> = report.seed_state.labeled.iter().map(String::as_str).collect();
    let mut iterations = Vec::new();
    for rec in &report.records {
        let name = format!("iter_{:03}", rec.iteration);
        let sub = dir.join(&name);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let header = SelectionHeader {
            strategy: rec.strategy,
            iteration: rec.iteration,
            lambda: config.huds.lambda,
            n: config.huds.strata,
            k: config.batch_size,
            seed: config.rng_seed,
            iteration_seed: iteration_seed(config, rec.iteration),
            config_digest: digest.clone(),
        };
        let mut selection = rec.selection();
        selection.config_digest = digest.clone();
        selection.write(&header, &sub.join("selection.jsonl"))?;

        labeled.extend(rec.selected_ids.iter().map(String::as_str));
        let mut sorted = labeled.clone();
        sorted.sort_unstable();
        write_records(
            &sub.join("labeled.jsonl"),
            sorted.iter().filter_map(|id| report.corpus.get(id)),
        )?;
        iterations.push(json!({
            "iteration": rec.iteration,
            "strategy": rec.strategy,
            "candidates": rec.candidates,
            "selected": rec.selected_ids.len(),
            "labeled": rec.pool_sizes.0,
            "unlabeled": rec.pool_sizes.1,
            "selection": format!("{name}/selection.jsonl"),
            "labeled_set": format!("{name}/labeled.jsonl"),
        }));
    }
    write(&dir.join("pool_final.json"), report.final_state.to_json())?;

    let scatter = match report.selection_tables() {
        Some((u, d)) if !report.records.is_empty() => {
            let rows = scatter_export(&report.records, &u, &d)?;
            write(&dir.join("scatter.csv"), scatter_csv(&rows)?)?;
            Some("scatter.csv")
        }
        _ => None,
    };

    let score_mode = match &config.logprobs {
        Some(LogprobSource::Static(_)) => {
            "static: scores computed once from a single log-probability file and reused every iteration (approximation of per-iteration model re-scoring)"
        }
        Some(LogprobSource::PerIteration(_)) => "per-iteration: one log-probability file per iteration",
        None => "none",
    };
    Ok(json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "config_digest": digest,
        "seeds": {
            "seed": config.rng_seed,
            "derivation": "seed set: (seed, stream 1); iteration t pool cap: (seed+t, stream 2); iteration t random pick: (seed+t, stream 3); iteration t stratum i k-means: (seed+t+i, stream 4)",
        },
        "inputs": input_digests(config, report.records.len())?,
        "embedding_source": if config.embeddings.is_some() { "file" } else { "fallback" },
        "score_mode": score_mode,
        "seed_pool": "pool_seed.json",
        "iterations": iterations,
        "final_pool": "pool_final.json",
        "scatter": scatter,
        "exhausted_at": report.exhausted_at,
    }))
}

/// Write the bundle under `out`: `manifest.json` plus per-run artifacts.
/// A sweep puts each run in `lambda_<value>/` and lists them in the top manifest.
pub fn write_bundle(bundle: &ReportBundle, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest = match bundle {
        ReportBundle::Single(r) => write_run(r, out)?,
        ReportBundle::Sweep(runs) => {
            let mut subs = Vec::new();
            for (lambda, r) in runs {
                let name = format!("lambda_{lambda}");
                let dir = out.join(&name);
                let sub = write_run(r, &dir)?;
                write(&dir.join("manifest.json"), serde_json::to_string_pretty(&sub)? + "\n")?;
                subs.push(json!({"lambda": lambda, "dir": name, "manifest": format!("{name}/manifest.json")}));
            }
            let base = runs.first().map(|(_, r)| {
                let mut c = r.config.clone();
                c.lambda_sweep = Some(runs.iter().map(|(l, _)| *l).collect());
                c
            });
            json!({
                "tool": env!("CARGO_PKG_NAME"),
                "version": env!("CARGO_PKG_VERSION"),
                "config": base,
                "config_digest": base.as_ref().map(SimulationConfig::digest),
                "sweep": subs,
            })
        }
    };
    write(&out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")
}

/// Read the config back out of a run manifest for replay.
pub fn config_from_manifest(path: &Path) -> Result<SimulationConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let config = value
        .get("config")
        .cloned()
        .ok_or_else(|| Error::Format(format!("{}: manifest has no config", path.display())))?;
    Ok(serde_json::from_value(config)?)
}

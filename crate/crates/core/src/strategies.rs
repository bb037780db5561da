//! Acquisition functions. Each one ranks a candidate pool and keeps the top k.
//!
//! Ties are broken by ascending id everywhere, so every strategy is a pure
//! function of its inputs and seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, norm, EmbeddingStore};
use crate::rng;
use crate::scoring::{ScoreTable, UncertaintyKind};
use crate::stratify::{diversity_scores_with, stratify, ClusterParams, DiversityTable, DEFAULT_STRATA};
use crate::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_K: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Uncertainty,
    Nsp,
    Diversity,
    Idds,
    Huds,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Random,
        Strategy::Uncertainty,
        Strategy::Nsp,
        Strategy::Diversity,
        Strategy::Idds,
        Strategy::Huds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Uncertainty => "uncertainty",
            Strategy::Nsp => "nsp",
            Strategy::Diversity => "diversity",
            Strategy::Idds => "idds",
            Strategy::Huds => "huds",
        }
    }

    pub fn needs_logprobs(self) -> bool {
        matches!(
            self,
            Strategy::Uncertainty | Strategy::Nsp | Strategy::Diversity | Strategy::Huds
        )
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, Strategy::Diversity | Strategy::Idds | Strategy::Huds)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Ids of the `k` largest scores, descending, ties by ascending id.
pub fn top_k(scored: &BTreeMap<String, f64>, k: usize) -> Vec<String> {
    let mut ranked: Vec<(&String, f64)> = scored.iter().map(|(id, &s)| (id, s)).collect();
    let by_rank = |a: &(&String, f64), b: &(&String, f64)| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0));
    if k < ranked.len() {
        if k == 0 {
            return Vec::new();
        }
        ranked.select_nth_unstable_by(k - 1, by_rank);
        ranked.truncate(k);
    }
    ranked.sort_unstable_by(by_rank);
    ranked.into_iter().map(|(id, _)| id.clone()).collect()
}

/// Per-id values behind a selection. Fields a strategy does not compute are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub u: Option<f64>,
    pub u_norm: Option<f64>,
    pub d: Option<f64>,
    pub h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub strategy: Strategy,
    pub iteration: usize,
    pub selected_ids: Vec<String>,
    pub diagnostics: BTreeMap<String, Diagnostics>,
    pub config_digest: String,
}

impl SelectionResult {
    fn new(strategy: Strategy, selected_ids: Vec<String>) -> Self {
        SelectionResult {
            strategy,
            iteration: 0,
            selected_ids,
            diagnostics: BTreeMap::new(),
            config_digest: String::new(),
        }
    }

    fn with_scores(mut self, field: fn(&mut Diagnostics) -> &mut Option<f64>, scores: &BTreeMap<String, f64>) -> Self {
        for id in &self.selected_ids {
            *field(self.diagnostics.entry(id.clone()).or_default()) = scores.get(id).copied();
        }
        self
    }

    /// Selection JSONL: a header object followed by one row per rank.
    pub fn to_jsonl(&self, header: &SelectionHeader) -> String {
        let mut out = serde_json::to_string(header).expect("header serializes");
        out.push('\n');
        for (rank, id) in self.selected_ids.iter().enumerate() {
            let d = self.diagnostics.get(id).copied().unwrap_or_default();
            let row = SelectionRow {
                rank: rank + 1,
                id,
                u_norm: d.u_norm,
                d: d.d,
                h: d.h,
            };
            out.push_str(&serde_json::to_string(&row).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, header: &SelectionHeader, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl(header).as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize)]
struct SelectionRow<'a> {
    rank: usize,
    id: &'a str,
    u_norm: Option<f64>,
    d: Option<f64>,
    h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionHeader {
    pub strategy: Strategy,
    pub iteration: usize,
    pub lambda: f64,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub iteration_seed: u64,
    pub config_digest: String,
}

pub fn select_random(pool: &BTreeSet<String>, k: usize, rng_seed: u64) -> Result<SelectionResult> {
    if pool.is_empty() {
        return Err(Error::Degenerate("random selection from an empty pool".into()));
    }
    let ids: Vec<&String> = pool.iter().collect();
    let chosen = rng::sample(&ids, k, &mut rng::stream(rng_seed, rng::RANDOM));
    Ok(SelectionResult::new(
        Strategy::Random,
        chosen.into_iter().cloned().collect(),
    ))
}

/// Top-k by raw uncertainty; the NSP baseline when `scores.kind` is NSP.
pub fn select_uncertainty(scores: &ScoreTable, k: usize) -> Result<SelectionResult> {
    if scores.is_empty() {
        return Err(Error::Degenerate("no uncertainty scores".into()));
    }
    let strategy = match scores.kind {
        UncertaintyKind::Nnll => Strategy::Uncertainty,
        UncertaintyKind::Nsp => Strategy::Nsp,
    };
    Ok(SelectionResult::new(strategy, top_k(&scores.entries, k)).with_scores(|d| &mut d.u, &scores.entries))
}

pub fn select_diversity(diversity: &DiversityTable, k: usize) -> Result<SelectionResult> {
    if diversity.is_empty() {
        return Err(Error::Degenerate("no diversity scores".into()));
    }
    Ok(SelectionResult::new(Strategy::Diversity, top_k(&diversity.entries, k))
        .with_scores(|d| &mut d.d, &diversity.entries))
}

fn unit(v: &[f64], id: &str) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::Degenerate(format!("zero embedding for `{id}`")));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Mean of unit vectors; `v̂ · mean` is the mean cosine similarity to the set.
fn mean_direction<'a>(ids: impl Iterator<Item = &'a String>, store: &EmbeddingStore) -> Result<Option<Vec<f64>>> {
    let mut acc = vec![0.0; store.dim()];
    let mut count = 0usize;
    for id in ids {
        let u = unit(&store.vector(id)?, id)?;
        acc.iter_mut().zip(&u).for_each(|(a, x)| *a += x);
        count += 1;
    }
    if count == 0 {
        return Ok(None);
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    Ok(Some(acc))
}

/// In-domain diversity scores:
/// `alpha * mean_sim(v, unlabeled) - (1 - alpha) * mean_sim(v, labeled)`.
///
/// With `swap_sets` the two sets trade places. An empty set contributes 0.
pub fn idds_scores(
    pool: &BTreeSet<String>,
    labeled: &BTreeSet<String>,
    store: &EmbeddingStore,
    alpha: f64,
    swap_sets: bool,
) -> Result<BTreeMap<String, f64>> {
    check_unit_interval("alpha", alpha)?;
    if pool.is_empty() {
        return Err(Error::Degenerate("IDDS over an empty pool".into()));
    }
    let to_pool = mean_direction(pool.iter(), store)?;
    let to_labeled = mean_direction(labeled.iter(), store)?;
    let (first, second) = if swap_sets {
        (to_labeled, to_pool)
    } else {
        (to_pool, to_labeled)
    };
    pool.par_iter()
        .map(|id| {
            let v = unit(&store.vector(id)?, id)?;
            let a = first.as_ref().map_or(0.0, |m| dot(&v, m));
            let b = second.as_ref().map_or(0.0, |m| dot(&v, m));
            Ok((id.clone(), alpha * a - (1.0 - alpha) * b))
        })
        .collect()
}

pub fn select_idds(
    pool: &BTreeSet<String>,
    labeled: &BTreeSet<String>,
    store: &EmbeddingStore,
    alpha: f64,
    k: usize,
) -> Result<SelectionResult> {
    select_idds_with(pool, labeled, store, alpha, k, false)
}

pub fn select_idds_with(
    pool: &BTreeSet<String>,
    labeled: &BTreeSet<String>,
    store: &EmbeddingStore,
    alpha: f64,
    k: usize,
    swap_sets: bool,
) -> Result<SelectionResult> {
    let scores = idds_scores(pool, labeled, store, alpha, swap_sets)?;
    Ok(SelectionResult::new(Strategy::Idds, top_k(&scores, k)).with_scores(|d| &mut d.h, &scores))
}

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {x}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HudsParams {
    pub lambda: f64,
    pub strata: usize,
    /// Min-max normalize uncertainty and diversity over the pool before mixing.
    pub normalize: bool,
    pub clusters: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for HudsParams {
    fn default() -> Self {
        let c = ClusterParams::default();
        HudsParams {
            lambda: DEFAULT_LAMBDA,
            strata: DEFAULT_STRATA,
            normalize: true,
            clusters: c.k,
            max_iter: c.max_iter,
            tol: c.tol,
        }
    }
}

impl HudsParams {
    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            k: self.clusters,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridEntry {
    pub u: f64,
    pub u_norm: f64,
    pub d: f64,
    pub d_norm: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridScoreTable {
    pub lambda: f64,
    pub entries: BTreeMap<String, HybridEntry>,
}

impl HybridScoreTable {
    pub fn scores(&self) -> BTreeMap<String, f64> {
        self.entries.iter().map(|(id, e)| (id.clone(), e.h)).collect()
    }
}

/// Min-max scale to `[0, 1]`; a constant column maps to 0.
pub fn min_max(values: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let (lo, hi) = values
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    values
        .iter()
        .map(|(id, &x)| {
            let scaled = if range > 0.0 { (x - lo) / range } else { 0.0 };
            (id.clone(), scaled)
        })
        .collect()
}

/// Stratify, cluster each stratum, and mix uncertainty with diversity.
pub fn huds_scores(
    scores: &ScoreTable,
    store: &EmbeddingStore,
    params: &HudsParams,
    rng_seed: u64,
) -> Result<(HybridScoreTable, DiversityTable)> {
    check_unit_interval("lambda", params.lambda)?;
    let strata = stratify(scores, params.strata)?;
    let diversity = diversity_scores_with(&strata, store, params.cluster_params(), rng_seed)?;
    let (u_norm, d_norm) = if params.normalize {
        (min_max(&scores.entries), min_max(&diversity.entries))
    } else {
        (scores.entries.clone(), diversity.entries.clone())
    };
    let lambda = params.lambda;
    let entries = scores
        .entries
        .iter()
        .map(|(id, &u)| {
            let (un, d, dn) = (u_norm[id], diversity.entries[id], d_norm[id]);
            let h = lambda * dn + (1.0 - lambda) * un;
            (id.clone(), HybridEntry { u, u_norm: un, d, d_norm: dn, h })
        })
        .collect();
    Ok((HybridScoreTable { lambda, entries }, diversity))
}

pub fn select_huds(
    scores: &ScoreTable,
    store: &EmbeddingStore,
    params: &HudsParams,
    k: usize,
    rng_seed: u64,
) -> Result<SelectionResult> {
    let (table, _) = huds_scores(scores, store, params, rng_seed)?;
    let selected = top_k(&table.scores(), k);
    let mut result = SelectionResult::new(Strategy::Huds, selected);
    for id in &result.selected_ids {
        let e = table.entries[id];
        result.diagnostics.insert(
            id.clone(),
            Diagnostics {
                u: Some(e.u),
                u_norm: Some(e.u_norm),
                d: Some(e.d),
                h: Some(e.h),
            },
        );
    }
    Ok(result)
}

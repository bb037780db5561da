//! Shared fixtures and independent reference computations for integration tests.
//!
//! The oracles here deliberately share no code with the crate's selection path:
//! they only read plain maps and recompute everything with straight loops.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use huds::corpus::{Corpus, SentenceRecord};
use huds::embedding::EmbeddingStore;
use huds::scoring::{LogprobTable, ScoreTable, TokenLogProbs, UncertaintyKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn id(i: usize) -> String {
    format!("s{i:05}")
}

/// Random uncertainty scores in `[0, 5)` plus random vectors in `[-1, 1)^dim`.
pub fn synthetic_pool(seed: u64, size: usize, dim: usize) -> (ScoreTable, EmbeddingStore) {
    let mut r = rng(seed);
    let mut entries = BTreeMap::new();
    let mut store = EmbeddingStore::new(dim, "file").unwrap();
    for i in 0..size {
        entries.insert(id(i), r.gen_range(0.0..5.0));
        let v: Vec<f32> = (0..dim).map(|_| r.gen_range(-1.0f32..1.0)).collect();
        store.insert(id(i), v).unwrap();
    }
    (ScoreTable::from_scores(UncertaintyKind::Nnll, entries), store)
}

pub fn vectors_of(store: &EmbeddingStore) -> BTreeMap<String, Vec<f64>> {
    store
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().map(|&x| x as f64).collect()))
        .collect()
}

fn cos_sim(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Stratum (1-based) of `s` under equal-width strata over `[lo, hi]`.
fn oracle_stratum(s: f64, lo: f64, hi: f64, n: usize) -> usize {
    let r = hi - lo;
    if r == 0.0 {
        return 1;
    }
    for i in 1..=n {
        let low = lo + ((i - 1) as f64 / n as f64) * r;
        let high = lo + (i as f64 / n as f64) * r;
        if i == n {
            if s >= low {
                return n;
            }
        } else if s >= low && s < high {
            return i;
        }
    }
    unreachable!("score {s} outside [{lo}, {hi}]")
}

/// Diversity per id: cosine distance to the mean vector of its uncertainty stratum.
pub fn oracle_diversity(
    scores: &BTreeMap<String, f64>,
    vectors: &BTreeMap<String, Vec<f64>>,
    n: usize,
) -> BTreeMap<String, f64> {
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for &s in scores.values() {
        if s < lo {
            lo = s;
        }
        if s > hi {
            hi = s;
        }
    }
    let mut groups: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
    for (id, &s) in scores {
        groups.entry(oracle_stratum(s, lo, hi, n)).or_default().push(id);
    }
    let mut out = BTreeMap::new();
    for members in groups.values() {
        let dim = vectors[members[0]].len();
        let mut centroid = vec![0.0; dim];
        for id in members {
            for j in 0..dim {
                centroid[j] += vectors[*id][j];
            }
        }
        for c in centroid.iter_mut() {
            *c /= members.len() as f64;
        }
        for id in members {
            out.insert((*id).clone(), 1.0 - cos_sim(&vectors[*id], &centroid));
        }
    }
    out
}

fn oracle_minmax(m: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let lo = m.values().cloned().fold(f64::MAX, f64::min);
    let hi = m.values().cloned().fold(f64::MIN, f64::max);
    m.iter()
        .map(|(k, &v)| (k.clone(), if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }))
        .collect()
}

/// Straight-line single HUDS iteration: stratify, mean centroid per stratum,
/// cosine distance, min-max normalize, mix, full sort, truncate.
pub fn oracle_huds(
    scores: &BTreeMap<String, f64>,
    vectors: &BTreeMap<String, Vec<f64>>,
    lambda: f64,
    n: usize,
    k: usize,
) -> Vec<String> {
    let d = oracle_diversity(scores, vectors, n);
    let un = oracle_minmax(scores);
    let dn = oracle_minmax(&d);
    let mut h: Vec<(String, f64)> = scores
        .keys()
        .map(|id| (id.clone(), lambda * dn[id] + (1.0 - lambda) * un[id]))
        .collect();
    oracle_rank(&mut h, k)
}

/// Full sort by descending score then ascending id, truncated to `k`.
pub fn oracle_rank(items: &mut [(String, f64)], k: usize) -> Vec<String> {
    items.sort_by(|a, b| {
        if a.1 > b.1 {
            std::cmp::Ordering::Less
        } else if a.1 < b.1 {
            std::cmp::Ordering::Greater
        } else {
            a.0.cmp(&b.0)
        }
    });
    items.iter().take(k).map(|(id, _)| id.clone()).collect()
}

/// IDDS by explicit double loops over both sets.
pub fn oracle_idds(
    pool: &BTreeSet<String>,
    labeled: &BTreeSet<String>,
    vectors: &BTreeMap<String, Vec<f64>>,
    alpha: f64,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for v in pool {
        let mut sum_pool = 0.0;
        for m in pool {
            sum_pool += cos_sim(&vectors[v], &vectors[m]);
        }
        let mut sum_lab = 0.0;
        for j in labeled {
            sum_lab += cos_sim(&vectors[v], &vectors[j]);
        }
        let lab_term = if labeled.is_empty() { 0.0 } else { sum_lab / labeled.len() as f64 };
        out.insert(
            v.clone(),
            alpha * sum_pool / pool.len() as f64 - (1.0 - alpha) * lab_term,
        );
    }
    out
}

const WORDS: &[&str] = &[
    "patient", "dose", "tablet", "daily", "court", "appeal", "regulation", "member", "state",
    "file", "click", "server", "install", "kidney", "liver", "reaction", "nausea", "headache",
    "article", "directive", "window", "menu", "option", "treatment", "study", "trial", "result",
    "the", "a", "of", "with", "for", "and", "to", "in", "shall", "may", "should", "is", "was",
];

/// Corpus of `n` pseudo-sentences with targets, plus matching log-probabilities.
pub fn text_fixture(seed: u64, n: usize) -> (Corpus, LogprobTable) {
    let mut r = rng(seed);
    let mut records = Vec::with_capacity(n);
    let mut lps = Vec::with_capacity(n);
    for i in 0..n {
        let len = r.gen_range(4..14);
        let words: Vec<&str> = (0..len).map(|_| WORDS[r.gen_range(0..WORDS.len())]).collect();
        let source = format!("{} {i}.", words.join(" "));
        let target = format!("ziel {} {i}", words.iter().rev().cloned().collect::<Vec<_>>().join(" "));
        let logprobs: Vec<f64> = (0..len + 1).map(|_| r.gen_range(0.01f64..1.0).ln()).collect();
        lps.push(TokenLogProbs::new(id(i), logprobs).unwrap());
        records.push(SentenceRecord {
            id: id(i),
            source,
            target: Some(target),
        });
    }
    (
        Corpus::new("fixture", records).unwrap(),
        LogprobTable::from_entries(lps).unwrap(),
    )
}

pub struct FixtureFiles {
    pub corpus: PathBuf,
    pub logprobs: PathBuf,
    pub embeddings: PathBuf,
}

/// Write a text fixture to disk: corpus JSONL, logprob JSONL, fallback ALEMB1.
pub fn write_fixture(dir: &Path, seed: u64, n: usize) -> FixtureFiles {
    let (corpus, lps) = text_fixture(seed, n);
    let files = FixtureFiles {
        corpus: dir.join("corpus.jsonl"),
        logprobs: dir.join("logprobs.jsonl"),
        embeddings: dir.join("embeddings.alemb"),
    };
    corpus.write_jsonl(&files.corpus).unwrap();
    lps.write(&files.logprobs).unwrap();
    EmbeddingStore::fallback(&corpus, 64)
        .unwrap()
        .write_alemb1(&files.embeddings)
        .unwrap();
    files
}

/// Every file under `dir`, relative path → bytes.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

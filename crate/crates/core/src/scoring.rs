//! Uncertainty scores from externally exported token log-probabilities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_POOL_CAP: usize = 20_000;

/// Natural-log token probabilities for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLogProbs {
    pub id: String,
    logprobs: Vec<f64>,
}

impl TokenLogProbs {
    /// Rejects empty vectors and positive or non-finite entries.
    pub fn new(id: impl Into<String>, logprobs: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if logprobs.is_empty() {
            return Err(Error::Degenerate(format!("empty log-probabilities for `{id}`")));
        }
        if let Some(bad) = logprobs.iter().find(|lp| !lp.is_finite() || **lp > 0.0) {
            return Err(Error::Format(format!(
                "log-probability {bad} for `{id}` is not a finite value <= 0"
            )));
        }
        Ok(TokenLogProbs { id, logprobs })
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn nnll(&self) -> f64 {
        nnll(&self.logprobs).expect("validated non-empty")
    }

    pub fn nsp(&self) -> f64 {
        nsp(&self.logprobs).expect("validated non-empty")
    }

    pub fn score(&self, kind: UncertaintyKind) -> f64 {
        match kind {
            UncertaintyKind::Nnll => self.nnll(),
            UncertaintyKind::Nsp => self.nsp(),
        }
    }
}

/// Normalized negative log-likelihood: the negated mean token log-probability.
pub fn nnll(logprobs: &[f64]) -> Result<f64> {
    if logprobs.is_empty() {
        return Err(Error::Degenerate("empty log-probabilities".into()));
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    // -0.0 for the all-certain case
    Ok((-mean).max(0.0))
}

/// Normalized sequence probability: one minus the geometric-mean token probability.
pub fn nsp(logprobs: &[f64]) -> Result<f64> {
    Ok(-(-nnll(logprobs)?).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyKind {
    Nnll,
    Nsp,
}

impl fmt::Display for UncertaintyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UncertaintyKind::Nnll => "nnll",
            UncertaintyKind::Nsp => "nsp",
        })
    }
}

impl FromStr for UncertaintyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nnll" => Ok(UncertaintyKind::Nnll),
            "nsp" => Ok(UncertaintyKind::Nsp),
            other => Err(Error::Config(format!("unknown uncertainty kind `{other}`"))),
        }
    }
}

/// Log-probabilities keyed by sentence id, as loaded from an exporter file.
#[derive(Debug, Clone, Default)]
pub struct LogprobTable {
    entries: BTreeMap<String, TokenLogProbs>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    log_base: String,
}

#[derive(Deserialize)]
struct Line {
    id: String,
    logprobs: Vec<f64>,
}

impl LogprobTable {
    pub fn from_entries(items: impl IntoIterator<Item = TokenLogProbs>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for t in items {
            if entries.contains_key(&t.id) {
                return Err(Error::DuplicateId(t.id));
            }
            entries.insert(t.id.clone(), t);
        }
        Ok(LogprobTable { entries })
    }

    pub fn get(&self, id: &str) -> Option<&TokenLogProbs> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TokenLogProbs> {
        self.entries.values()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let header: Header = match lines.next() {
            Some((_, l)) => serde_json::from_str(l).map_err(|e| parse_err(1, e.to_string()))?,
            None => return Err(parse_err(1, "missing header".into())),
        };
        if header.format != "al-logprobs" || header.version != 1 {
            return Err(parse_err(
                1,
                format!("unsupported format {} v{}", header.format, header.version),
            ));
        }
        if header.log_base != "e" {
            return Err(parse_err(
                1,
                format!("log_base must be \"e\", found {:?}", header.log_base),
            ));
        }
        let mut items = Vec::new();
        for (i, l) in lines {
            let line: Line = serde_json::from_str(l).map_err(|e| parse_err(i + 1, e.to_string()))?;
            items.push(
                TokenLogProbs::new(line.id, line.logprobs)
                    .map_err(|e| parse_err(i + 1, e.to_string()))?,
            );
        }
        Self::from_entries(items)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, r#"{{"format":"al-logprobs","version":1,"log_base":"e"}}"#).map_err(io)?;
        for t in self.entries.values() {
            serde_json::to_writer(&mut out, &serde_json::json!({"id": t.id, "logprobs": t.logprobs}))?;
            out.write_all(b"\n").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Uncertainty scores over a (possibly capped) candidate pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub kind: UncertaintyKind,
    pub entries: BTreeMap<String, f64>,
    pub pool_cap: Option<usize>,
    pub rng_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ScoreLine<'a> {
    id: &'a str,
    score: f64,
    kind: UncertaintyKind,
}

impl ScoreTable {
    pub fn from_scores(kind: UncertaintyKind, entries: BTreeMap<String, f64>) -> Self {
        ScoreTable {
            kind,
            entries,
            pool_cap: None,
            rng_seed: 0,
        }
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// JSONL dump sorted by id.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for (id, &score) in &self.entries {
            let line = ScoreLine {
                id,
                score,
                kind: self.kind,
            };
            s.push_str(&serde_json::to_string(&line).expect("finite scores serialize"));
            s.push('\n');
        }
        s
    }
}

/// Uniform subsample of `cap` ids when the pool is larger, else the whole pool.
pub fn cap_pool(pool: &BTreeSet<String>, cap: usize, rng_seed: u64) -> Vec<&String> {
    let ids: Vec<&String> = pool.iter().collect();
    if ids.len() > cap {
        rng::sample(&ids, cap, &mut rng::stream(rng_seed, rng::POOL_CAP))
    } else {
        ids
    }
}

/// Score the unlabeled pool, first subsampling `cap` ids when the pool is larger.
pub fn score_pool(
    pool: &BTreeSet<String>,
    source: &LogprobTable,
    kind: UncertaintyKind,
    cap: usize,
    rng_seed: u64,
) -> Result<ScoreTable> {
    let sampled = cap_pool(pool, cap, rng_seed);
    let entries = sampled
        .par_iter()
        .map(|id| {
            source
                .get(id)
                .map(|t| ((*id).clone(), t.score(kind)))
                .ok_or_else(|| Error::coverage("log-probabilities", id.as_str()))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(ScoreTable {
        kind,
        entries,
        pool_cap: Some(cap),
        rng_seed,
    })
}

//! Sentence pools: records, ingestion, and the labeled/unlabeled partition.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// Guess from the file extension; anything but `.tsv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: String,
    records: Vec<SentenceRecord>,
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct JsonlLine {
    id: Option<String>,
    source: String,
    target: Option<String>,
}

/// Synthesized id for a record without one: zero-padded 0-based line index.
pub fn line_id(index: usize) -> String {
    format!("{index:06}")
}

impl Corpus {
    /// Build from records, rejecting duplicate ids and blank sources.
    pub fn new(name: impl Into<String>, records: Vec<SentenceRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        let mut cleaned = Vec::with_capacity(records.len());
        for (i, mut rec) in records.into_iter().enumerate() {
            if rec.source.trim().is_empty() {
                return Err(Error::Format(format!("record `{}` has empty source", rec.id)));
            }
            if rec.target.as_deref().is_some_and(str::is_empty) {
                rec.target = None;
            }
            if index.insert(rec.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(rec.id));
            }
            cleaned.push(rec);
        }
        Ok(Corpus {
            name: name.into(),
            records: cleaned,
            index,
        })
    }

    pub fn records(&self) -> &[SentenceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SentenceRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        write_records(path, &self.records)
    }
}

pub fn write_records<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a SentenceRecord>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut records = Vec::new();
    let mut seen = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let lineno = i + 1;
        let rec = match format {
            CorpusFormat::Jsonl => {
                let parsed: JsonlLine =
                    serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
                SentenceRecord {
                    id: parsed.id.unwrap_or_else(|| line_id(i)),
                    source: parsed.source,
                    target: parsed.target,
                }
            }
            CorpusFormat::Tsv => {
                let mut fields = line.split('\t');
                let source = fields.next().unwrap_or_default().to_string();
                let target = fields.next().map(str::to_string);
                if fields.next().is_some() {
                    return Err(parse_err(lineno, "more than two tab-separated fields".into()));
                }
                SentenceRecord {
                    id: line_id(i),
                    source,
                    target,
                }
            }
        };
        if rec.source.trim().is_empty() {
            return Err(parse_err(lineno, "empty source".into()));
        }
        if seen.insert(rec.id.clone(), lineno).is_some() {
            return Err(Error::DuplicateId(rec.id));
        }
        records.push(rec);
    }
    Corpus::new(name, records)
}

/// Labeled/unlabeled partition of a corpus, tracked by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    pub labeled: BTreeSet<String>,
    pub unlabeled: BTreeSet<String>,
    #[serde(skip)]
    pub corpus_ref: String,
}

impl PoolState {
    /// Everything unlabeled.
    pub fn all_unlabeled(corpus: &Corpus) -> Self {
        PoolState {
            labeled: BTreeSet::new(),
            unlabeled: corpus.ids().map(str::to_string).collect(),
            corpus_ref: corpus.name.clone(),
        }
    }

    /// Move `ids` from unlabeled to labeled.
    pub fn transfer<S: AsRef<str>>(&self, ids: &[S]) -> Result<PoolState> {
        let mut next = self.clone();
        for id in ids {
            let id = id.as_ref();
            if !next.unlabeled.remove(id) {
                return Err(Error::NotUnlabeled(id.to_string()));
            }
            next.labeled.insert(id.to_string());
        }
        Ok(next)
    }

    /// JSON snapshot `{"labeled": [...], "unlabeled": [...]}` with sorted ids.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("id sets serialize")
    }

    pub fn from_json(text: &str, corpus: &Corpus) -> Result<Self> {
        let mut state: PoolState = serde_json::from_str(text)?;
        state.corpus_ref = corpus.name.clone();
        if let Some(id) = state.labeled.intersection(&state.unlabeled).next() {
            return Err(Error::Format(format!("id `{id}` is both labeled and unlabeled")));
        }
        if let Some(id) = state
            .labeled
            .iter()
            .chain(&state.unlabeled)
            .find(|id| !corpus.contains(id))
        {
            return Err(Error::coverage("corpus record", id.clone()));
        }
        Ok(state)
    }
}

/// Draw a uniform random labeled seed set of `seed_size` ids.
pub fn init_pools(corpus: &Corpus, seed_size: usize, rng_seed: u64) -> Result<PoolState> {
    if seed_size > corpus.len() {
        return Err(Error::Bounds {
            what: "seed size",
            value: seed_size,
            limit: corpus.len(),
        });
    }
    let mut ids: Vec<&str> = corpus.ids().collect();
    ids.sort_unstable();
    let chosen = rng::sample(&ids, seed_size, &mut rng::stream(rng_seed, rng::SEED_POOL));
    PoolState::all_unlabeled(corpus).transfer(&chosen)
}

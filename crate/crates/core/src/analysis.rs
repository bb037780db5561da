//! Post-hoc analyses of selections: unigram coverage of a reference set and
//! uncertainty-vs-diversity scatter rows.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_categories::UnicodeCategories;

use crate::corpus::SentenceRecord;
use crate::scoring::ScoreTable;
use crate::simulator::IterationRecord;
use crate::strategies::Strategy;
use crate::stratify::DiversityTable;
use crate::{Error, Result};

pub const TOKENIZATION: &str = "lowercase, whitespace split, strip punctuation at token edges";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
    Combined,
}

impl Side {
    pub const ALL: [Side; 3] = [Side::Source, Side::Target, Side::Combined];
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Source => "source",
            Side::Target => "target",
            Side::Combined => "combined",
        })
    }
}

impl FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Side::ALL
            .into_iter()
            .find(|side| side.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown side `{s}`")))
    }
}

/// Unigram types of `text`.
pub fn unigrams(text: &str) -> BTreeSet<String> {
    text.split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| c.is_punctuation()).to_lowercase())
        .filter(|tok| !tok.is_empty())
        .collect()
}

fn vocabulary(records: &[SentenceRecord], side: Side) -> Result<BTreeSet<String>> {
    let mut vocab = BTreeSet::new();
    for r in records {
        if side != Side::Target {
            vocab.extend(unigrams(&r.source));
        }
        match (&r.target, side) {
            (Some(t), Side::Target | Side::Combined) => vocab.extend(unigrams(t)),
            (None, Side::Target) => return Err(Error::coverage("target text", r.id.clone())),
            _ => {}
        }
    }
    Ok(vocab)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    pub side: Side,
    pub overlap_pct: f64,
    pub selected_unigrams: usize,
    pub reference_unigrams: usize,
    pub shared_unigrams: usize,
    pub tokenization: String,
}

/// Percentage of the reference vocabulary that also occurs in `selected`.
pub fn unigram_overlap(
    selected: &[SentenceRecord],
    reference: &[SentenceRecord],
    side: Side,
) -> Result<OverlapReport> {
    if reference.is_empty() {
        return Err(Error::Degenerate("empty reference set".into()));
    }
    let sel = vocabulary(selected, side)?;
    let refv = vocabulary(reference, side)?;
    if refv.is_empty() {
        return Err(Error::Degenerate("reference set has no unigrams".into()));
    }
    let shared = sel.intersection(&refv).count();
    Ok(OverlapReport {
        strategy: None,
        side,
        overlap_pct: 100.0 * shared as f64 / refv.len() as f64,
        selected_unigrams: sel.len(),
        reference_unigrams: refv.len(),
        shared_unigrams: shared,
        tokenization: TOKENIZATION.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub id: String,
    pub iteration: usize,
    pub u: f64,
    pub d: f64,
    pub strategy: Strategy,
}

/// One row per selected id per iteration, sorted by `(iteration, id)`.
pub fn scatter_export(
    records: &[IterationRecord],
    scores: &ScoreTable,
    diversity: &DiversityTable,
) -> Result<Vec<ScatterRow>> {
    let mut rows = Vec::new();
    for rec in records {
        for id in &rec.selected_ids {
            let u = scores.get(id).ok_or_else(|| Error::Coverage {
                what: "uncertainty score",
                id: id.clone(),
                context: format!(" (iteration {})", rec.iteration),
            })?;
            let d = diversity.get(id).ok_or_else(|| Error::Coverage {
                what: "diversity score",
                id: id.clone(),
                context: format!(" (iteration {})", rec.iteration),
            })?;
            rows.push(ScatterRow {
                id: id.clone(),
                iteration: rec.iteration,
                u,
                d,
                strategy: rec.strategy,
            });
        }
    }
    rows.sort_by(|a, b| a.iteration.cmp(&b.iteration).then_with(|| a.id.cmp(&b.id)));
    Ok(rows)
}

/// CSV with header `id,iteration,u,d,strategy`.
pub fn scatter_csv(rows: &[ScatterRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::Format(format!("scatter row: {e}")))?;
    }
    if rows.is_empty() {
        w.write_record(["id", "iteration", "u", "d", "strategy"])
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

//! Uncertainty strata, per-stratum k-means, and centroid-distance diversity.
//!
//! Stratum `i` of `n` spans `[s_min + (i-1)/n * r, s_min + i/n * r)` with
//! `r = s_max - s_min`; the last stratum is closed on the right so that every
//! scored id lands somewhere. Stratum indices are 1-based.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{cosine_distance, EmbeddingStore};
use crate::rng;
use crate::scoring::ScoreTable;
use crate::{Error, Result};

pub const DEFAULT_STRATA: usize = 10;
pub const DEFAULT_CLUSTERS: usize = 1;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumSet {
    pub n: usize,
    pub boundaries: Vec<(f64, f64)>,
    pub assignment: BTreeMap<String, usize>,
}

impl StratumSet {
    /// Member ids per stratum, index 0 holding stratum 1. Ids are sorted.
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.n];
        for (id, &s) in &self.assignment {
            out[s - 1].push(id.as_str());
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("strata serialize")
    }
}

pub fn stratify(scores: &ScoreTable, n: usize) -> Result<StratumSet> {
    if scores.is_empty() {
        return Err(Error::Degenerate("cannot stratify an empty score table".into()));
    }
    if n == 0 {
        return Err(Error::Config("stratum count must be >= 1".into()));
    }
    let (s_min, s_max) = scores
        .entries
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let r = s_max - s_min;

    if r == 0.0 {
        return Ok(StratumSet {
            n,
            boundaries: vec![(s_min, s_max); n],
            assignment: scores.ids().map(|id| (id.clone(), 1)).collect(),
        });
    }

    let edge = |i: usize| s_min + (i as f64 / n as f64) * r;
    let lows: Vec<f64> = (0..n).map(edge).collect();
    let mut boundaries: Vec<(f64, f64)> = (0..n).map(|i| (lows[i], edge(i + 1))).collect();
    boundaries[n - 1].1 = s_max;

    let assignment = scores
        .entries
        .iter()
        .map(|(id, &s)| {
            // count of lower edges <= s; lows[0] == s_min so this is >= 1
            let i = lows.partition_point(|&low| low <= s).clamp(1, n);
            (id.clone(), i)
        })
        .collect();
    Ok(StratumSet {
        n,
        boundaries,
        assignment,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// id -> 0-based cluster index.
    pub assignment: BTreeMap<String, usize>,
    pub inertia: f64,
    /// Inertia after every assignment step; non-increasing.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Arithmetic mean of the rows.
pub fn mean(rows: &[&[f64]]) -> Vec<f64> {
    let dim = rows[0].len();
    let mut acc = vec![0.0; dim];
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r.iter()) {
            *a += x;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Sum of squared Euclidean distances from each row to its centroid.
pub fn inertia(rows: &[&[f64]], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(r, &c)| sq_dist(r, &centroids[c]))
        .sum()
}

fn assign(rows: &[&[f64]], centroids: &[Vec<f64>]) -> Vec<usize> {
    rows.iter()
        .map(|r| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(r, centroid);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

fn plus_plus_seeds<R: Rng>(rows: &[&[f64]], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![rows[rng.gen_range(0..rows.len())].to_vec()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every remaining point coincides with a chosen centroid
            Err(_) => rng.gen_range(0..rows.len()),
        };
        centroids.push(rows[next].to_vec());
        let c = centroids.last().unwrap();
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, c));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding; `k = 1` is the closed-form mean.
///
/// Stops after `max_iter` update steps or once no centroid moves more than
/// `tol` (Euclidean).
pub fn kmeans(
    vectors: &BTreeMap<String, Vec<f64>>,
    k: usize,
    rng_seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterResult> {
    if vectors.is_empty() {
        return Err(Error::Degenerate("k-means on an empty set".into()));
    }
    if k == 0 {
        return Err(Error::Config("cluster count must be >= 1".into()));
    }
    if k > vectors.len() {
        return Err(Error::Bounds {
            what: "cluster count",
            value: k,
            limit: vectors.len(),
        });
    }
    let ids: Vec<&String> = vectors.keys().collect();
    let rows: Vec<&[f64]> = vectors.values().map(Vec::as_slice).collect();
    let dim = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
        return Err(Error::Format(format!("vector `{}` has the wrong dimension", ids[bad])));
    }

    let (centroids, labels, trace, iterations) = if k == 1 {
        let c = vec![mean(&rows)];
        let labels = vec![0; rows.len()];
        let i = inertia(&rows, &labels, &c);
        (c, labels, vec![i], 0)
    } else {
        let mut rng = rng::stream(rng_seed, rng::KMEANS);
        let mut centroids = plus_plus_seeds(&rows, k, &mut rng);
        let mut labels = assign(&rows, &centroids);
        let mut trace = vec![inertia(&rows, &labels, &centroids)];
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            let mut shift: f64 = 0.0;
            for (c, centroid) in centroids.iter_mut().enumerate() {
                let members: Vec<&[f64]> = rows
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == c)
                    .map(|(r, _)| *r)
                    .collect();
                // an emptied cluster keeps its previous centroid
                if members.is_empty() {
                    continue;
                }
                let updated = mean(&members);
                shift = shift.max(sq_dist(centroid, &updated).sqrt());
                *centroid = updated;
            }
            labels = assign(&rows, &centroids);
            trace.push(inertia(&rows, &labels, &centroids));
            if shift < tol {
                break;
            }
        }
        (centroids, labels, trace, iterations)
    };

    Ok(ClusterResult {
        k,
        assignment: ids.into_iter().cloned().zip(labels).collect(),
        inertia: *trace.last().unwrap(),
        inertia_trace: trace,
        centroids,
        iterations,
    })
}

/// Cosine distance of each stratified id to its own stratum's centroid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiversityTable {
    pub entries: BTreeMap<String, f64>,
}

impl DiversityTable {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterParams {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            k: DEFAULT_CLUSTERS,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

pub fn diversity_scores(
    strata: &StratumSet,
    store: &EmbeddingStore,
    rng_seed: u64,
) -> Result<DiversityTable> {
    diversity_scores_with(strata, store, ClusterParams::default(), rng_seed)
}

/// As [`diversity_scores`] with explicit clustering parameters. Strata smaller
/// than `params.k` are clustered with one cluster per member.
pub fn diversity_scores_with(
    strata: &StratumSet,
    store: &EmbeddingStore,
    params: ClusterParams,
    rng_seed: u64,
) -> Result<DiversityTable> {
    let per_stratum: Vec<Result<Vec<(String, f64)>>> = strata
        .members()
        .into_par_iter()
        .enumerate()
        .filter(|(_, ids)| !ids.is_empty())
        .map(|(i, ids)| {
            let stratum = i + 1;
            let vectors = ids
                .iter()
                .map(|&id| {
                    let v = store.vector(id).map_err(|_| Error::Coverage {
                        what: "embedding",
                        id: id.to_string(),
                        context: format!(" in stratum {stratum}"),
                    })?;
                    Ok((id.to_string(), v))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            let k = params.k.min(vectors.len());
            let clusters = kmeans(
                &vectors,
                k,
                rng_seed.wrapping_add(stratum as u64),
                params.max_iter,
                params.tol,
            )?;
            vectors
                .iter()
                .map(|(id, v)| {
                    let c = &clusters.centroids[clusters.assignment[id]];
                    let d = cosine_distance(v, c)
                        .map_err(|e| Error::Degenerate(format!("stratum {stratum}: {e}")))?;
                    Ok((id.clone(), d))
                })
                .collect()
        })
        .collect();

    let mut entries = BTreeMap::new();
    for part in per_stratum {
        entries.extend(part?);
    }
    Ok(DiversityTable { entries })
}

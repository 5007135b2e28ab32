//! Seeded k-means (k-means++ initialization, Lloyd iterations).
//!
//! Points are always processed in ascending `ad_id` order and the RNG is
//! seeded from the seed together with that id list, so results do not
//! depend on the order vectors are passed in.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bic::bic_parts;
use super::embed::EmbeddingVector;
use crate::util::finite_or_null;

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("no vectors to cluster")]
    EmptyInput,
    #[error("need at least {needed} distinct points, have {available}")]
    TooFewPoints { needed: usize, available: usize },
    #[error("vector {ad_id} has dimension {actual}, expected {expected}")]
    DimensionMismatch { ad_id: String, expected: usize, actual: usize },
    #[error("duplicate ad id {0}")]
    DuplicateId(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: BTreeMap<String, usize>,
    /// Null in JSON when the fit is degenerate (zero residual variance).
    #[serde(with = "finite_or_null")]
    pub bic: f64,
    #[serde(default)]
    pub bic_degenerate: bool,
    pub seed: u64,
    pub iterations: usize,
}

impl Clustering {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in self.assignments.values() {
            sizes[c] += 1;
        }
        sizes
    }

    /// Member ids of cluster `index`, ascending.
    pub fn members(&self, index: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &c)| c == index)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Vectors in canonical order, borrowed.
pub(crate) struct Points<'a> {
    pub ids: Vec<&'a str>,
    pub rows: Vec<&'a [f64]>,
}

impl<'a> Points<'a> {
    pub fn new(vectors: &'a [EmbeddingVector]) -> Result<Self, ClusterError> {
        let first = vectors.first().ok_or(ClusterError::EmptyInput)?;
        let dim = first.values.len();
        let mut order: Vec<&EmbeddingVector> = vectors.iter().collect();
        order.sort_by(|a, b| a.ad_id.cmp(&b.ad_id));
        for pair in order.windows(2) {
            if pair[0].ad_id == pair[1].ad_id {
                return Err(ClusterError::DuplicateId(pair[0].ad_id.clone()));
            }
        }
        for v in &order {
            if v.values.len() != dim {
                return Err(ClusterError::DimensionMismatch {
                    ad_id: v.ad_id.clone(),
                    expected: dim,
                    actual: v.values.len(),
                });
            }
        }
        Ok(Points {
            ids: order.iter().map(|v| v.ad_id.as_str()).collect(),
            rows: order.iter().map(|v| v.values.as_slice()).collect(),
        })
    }

    pub fn subset(&self, indices: &[usize]) -> Points<'a> {
        Points {
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    /// Number of distinct rows, counting no further than `cap`.
    pub fn distinct_at_least(&self, cap: usize) -> usize {
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        for row in &self.rows {
            seen.insert(row.iter().map(|x| canonical_bits(*x)).collect());
            if seen.len() >= cap {
                break;
            }
        }
        seen.len()
    }

    pub fn rng(&self, seed: u64) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        for id in &self.ids {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

fn canonical_bits(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub(crate) fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub(crate) fn inertia(points: &Points<'_>, labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .rows
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

pub(crate) fn means(points: &Points<'_>, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.rows.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    sums
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance from the nearest chosen centre.
fn plus_plus(points: &Points<'_>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points.rows[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.rows.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    chosen = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            chosen.expect("positive total has a positive entry")
        } else {
            rng.random_range(0..n)
        };
        let c = points.rows[pick].to_vec();
        for (d, p) in d2.iter_mut().zip(&points.rows) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

pub(crate) struct LloydOutcome {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub iterations: usize,
    /// Inertia after the initial assignment and after every iteration.
    pub trace: Vec<f64>,
}

fn assign(points: &Points<'_>, centroids: &[Vec<f64>]) -> Vec<usize> {
    points.rows.iter().map(|p| nearest(p, centroids).0).collect()
}

/// Moves the point farthest from its centroid into each empty cluster and
/// recentres that cluster on it. Donors come from clusters with at least two
/// members. Returns whether anything moved.
fn repair_empty(points: &Points<'_>, labels: &mut [usize], centroids: &mut [Vec<f64>]) -> bool {
    let k = centroids.len();
    let mut moved = false;
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return moved;
        };
        let donor = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (i, sq_dist(points.rows[i], &centroids[labels[i]])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = donor else {
            return moved;
        };
        labels[i] = empty;
        centroids[empty] = points.rows[i].to_vec();
        moved = true;
    }
}

/// Nearest-centroid assignment with empty clusters repaired; the returned
/// labels are always a nearest-centroid assignment for `centroids`.
fn settle(points: &Points<'_>, centroids: &mut [Vec<f64>]) -> Vec<usize> {
    let mut labels = assign(points, centroids);
    for _ in 0..=centroids.len() {
        if !repair_empty(points, &mut labels, centroids) {
            break;
        }
        labels = assign(points, centroids);
    }
    labels
}

pub(crate) fn lloyd(points: &Points<'_>, init: Vec<Vec<f64>>, max_iter: usize) -> LloydOutcome {
    let k = init.len();
    let mut centroids = init;
    let mut labels = settle(points, &mut centroids);
    let mut trace = vec![inertia(points, &labels, &centroids)];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        centroids = means(points, &labels, k);
        let next = settle(points, &mut centroids);
        let converged = next == labels;
        labels = next;
        trace.push(inertia(points, &labels, &centroids));
        if converged {
            break;
        }
    }
    LloydOutcome {
        centroids,
        labels,
        iterations,
        trace,
    }
}

pub(crate) fn kmeans_points(
    points: &Points<'_>,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<LloydOutcome, ClusterError> {
    if k == 0 {
        return Err(ClusterError::InvalidParameters("k must be at least 1".into()));
    }
    let available = points.distinct_at_least(k);
    if points.len() < k || available < k {
        return Err(ClusterError::TooFewPoints {
            needed: k,
            available,
        });
    }
    let mut rng = points.rng(seed);
    let init = plus_plus(points, k, &mut rng);
    Ok(lloyd(points, init, max_iter))
}

pub(crate) fn into_clustering(points: &Points<'_>, outcome: LloydOutcome, seed: u64) -> Clustering {
    let score = bic_parts(&points.rows, &outcome.labels, &outcome.centroids);
    Clustering {
        k: outcome.centroids.len(),
        assignments: points
            .ids
            .iter()
            .zip(&outcome.labels)
            .map(|(id, &l)| (id.to_string(), l))
            .collect(),
        centroids: outcome.centroids,
        bic: score.value,
        bic_degenerate: score.degenerate,
        seed,
        iterations: outcome.iterations,
    }
}

pub fn kmeans(vectors: &[EmbeddingVector], k: usize, seed: u64) -> Result<Clustering, ClusterError> {
    kmeans_with_trace(vectors, k, seed, DEFAULT_MAX_ITER).map(|(c, _)| c)
}

/// k-means plus the inertia after each Lloyd iteration.
pub fn kmeans_with_trace(
    vectors: &[EmbeddingVector],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(Clustering, Vec<f64>), ClusterError> {
    let points = Points::new(vectors)?;
    let outcome = kmeans_points(&points, k, seed, max_iter)?;
    let trace = outcome.trace.clone();
    Ok((into_clustering(&points, outcome, seed), trace))
}

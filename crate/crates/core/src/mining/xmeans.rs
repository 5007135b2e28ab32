//! X-means: grow `k` by BIC-guided two-way splits.

use super::bic::bic_parts;
use super::embed::EmbeddingVector;
use super::kmeans::{into_clustering, kmeans_points, lloyd, means, ClusterError, Clustering, Points, DEFAULT_MAX_ITER};

/// `min(20, floor(sqrt(n)))`, at least 1.
pub fn default_k_max(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).clamp(1, 20)
}

struct Split {
    cluster: usize,
    gain: f64,
    children: Vec<Vec<f64>>,
}

/// A perfect fit only counts when every component is a real group.
fn degenerate_ok(labels: &[usize], k: usize) -> bool {
    (0..k).all(|j| labels.iter().filter(|&&l| l == j).count() >= 2)
}

/// Tries a 2-means split of cluster `j`; `Some` when BIC favours it.
///
/// When the two children alone do not beat the parent, each child is split
/// once more and the resulting three- or four-way model is scored against
/// the parent instead. Only the two-way split is applied; the children are
/// examined again in the next round.
fn try_split(points: &Points<'_>, labels: &[usize], j: usize, seed: u64) -> Option<Split> {
    let members: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == j).collect();
    if members.len() < 2 {
        return None;
    }
    let sub = points.subset(&members);
    if sub.distinct_at_least(2) < 2 {
        return None;
    }
    let parent_labels = vec![0; sub.len()];
    let parent = bic_parts(&sub.rows, &parent_labels, &means(&sub, &parent_labels, 1));

    let child = kmeans_points(&sub, 2, seed, DEFAULT_MAX_ITER).ok()?;
    let score = bic_parts(&sub.rows, &child.labels, &child.centroids);
    let accepted = if score.degenerate {
        degenerate_ok(&child.labels, 2)
    } else {
        score.value > parent.value
    };
    if accepted {
        return Some(Split {
            cluster: j,
            gain: score.value - parent.value,
            children: child.centroids,
        });
    }
    if score.degenerate {
        return None;
    }

    let mut deep_labels = vec![0usize; sub.len()];
    let mut deep_centroids: Vec<Vec<f64>> = Vec::new();
    for c in 0..2 {
        let idx: Vec<usize> = (0..sub.len()).filter(|&i| child.labels[i] == c).collect();
        let part = sub.subset(&idx);
        let base = deep_centroids.len();
        match kmeans_points(&part, 2, seed, DEFAULT_MAX_ITER) {
            Ok(grand) => {
                for (&i, &l) in idx.iter().zip(&grand.labels) {
                    deep_labels[i] = base + l;
                }
                deep_centroids.extend(grand.centroids);
            }
            Err(_) => {
                idx.iter().for_each(|&i| deep_labels[i] = base);
                deep_centroids.push(child.centroids[c].clone());
            }
        }
    }
    if deep_centroids.len() == 2 {
        return None;
    }
    let deep = bic_parts(&sub.rows, &deep_labels, &deep_centroids);
    let accepted = if deep.degenerate {
        degenerate_ok(&deep_labels, deep_centroids.len())
    } else {
        deep.value > parent.value
    };
    accepted.then_some(Split {
        cluster: j,
        gain: deep.value - parent.value,
        children: child.centroids,
    })
}

/// Runs X-means with `k` in `[k_min, k_max]`.
///
/// Starts from k-means at `k_min`. Each round scores every cluster's 2-means
/// split with a local BIC over that cluster's members (see [`try_split`]),
/// accepts improving splits in decreasing order of gain while `k` stays
/// within `k_max`, and re-runs Lloyd globally from the enlarged centroid
/// set. Stops when a round accepts nothing, then does one final global
/// refinement.
pub fn xmeans(
    vectors: &[EmbeddingVector],
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<Clustering, ClusterError> {
    if k_min == 0 || k_min > k_max {
        return Err(ClusterError::InvalidParameters(format!(
            "need 1 <= k_min <= k_max, got k_min={k_min} k_max={k_max}"
        )));
    }
    let points = Points::new(vectors)?;
    let mut outcome = kmeans_points(&points, k_min, seed, DEFAULT_MAX_ITER)?;

    loop {
        let k = outcome.centroids.len();
        if k >= k_max {
            break;
        }
        let mut splits: Vec<Split> = (0..k)
            .filter_map(|j| try_split(&points, &outcome.labels, j, seed))
            .collect();
        if splits.is_empty() {
            break;
        }
        splits.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.cluster.cmp(&b.cluster)));
        splits.truncate(k_max - k);

        let mut centroids = Vec::with_capacity(k + splits.len());
        for (j, c) in outcome.centroids.iter().enumerate() {
            match splits.iter().find(|s| s.cluster == j) {
                Some(split) => centroids.extend(split.children.iter().cloned()),
                None => centroids.push(c.clone()),
            }
        }
        outcome = lloyd(&points, centroids, DEFAULT_MAX_ITER);
    }

    let refined = lloyd(&points, outcome.centroids, DEFAULT_MAX_ITER);
    Ok(into_clustering(&points, refined, seed))
}

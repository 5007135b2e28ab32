//! Bayesian information criterion for spherical Gaussian clusterings.
//!
//! Each cluster is a spherical Gaussian with its own maximum-likelihood
//! variance `SSE_j / (n_j·d)`; the log-likelihood sums the per-cluster
//! terms, including the `n_j·ln(n_j/n)` mixing contribution. The penalty
//! counts `k·(d+1)` free parameters (centroid coordinates plus one variance
//! per cluster). Higher is better.

use serde::{Deserialize, Serialize};

use super::embed::EmbeddingVector;
use super::kmeans::{sq_dist, ClusterError, Clustering, Points};
use crate::util::finite_or_null;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicScore {
    /// `log_likelihood - penalty`; `+inf` when degenerate.
    #[serde(with = "finite_or_null")]
    pub value: f64,
    #[serde(with = "finite_or_null")]
    pub log_likelihood: f64,
    pub penalty: f64,
    pub params: usize,
    /// Some cluster has zero variance (a singleton, or identical points).
    pub degenerate: bool,
}

pub(crate) fn bic_parts(rows: &[&[f64]], labels: &[usize], centroids: &[Vec<f64>]) -> BicScore {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let k = centroids.len();
    let params = k * (d + 1);
    let penalty = params as f64 / 2.0 * (n as f64).ln();

    let mut sizes = vec![0usize; k];
    let mut sse = vec![0.0f64; k];
    for (p, &l) in rows.iter().zip(labels) {
        sizes[l] += 1;
        sse[l] += sq_dist(p, &centroids[l]);
    }
    let mut log_likelihood = 0.0;
    for (&m, &e) in sizes.iter().zip(&sse) {
        if m == 0 {
            continue;
        }
        let m_d = (m * d) as f64;
        let variance = e / m_d;
        if variance.is_nan() || variance <= 0.0 {
            return BicScore {
                value: f64::INFINITY,
                log_likelihood: f64::INFINITY,
                penalty,
                params,
                degenerate: true,
            };
        }
        log_likelihood += m as f64 * (m as f64 / n as f64).ln()
            - m_d / 2.0 * (2.0 * std::f64::consts::PI * variance).ln()
            - m_d / 2.0;
    }

    BicScore {
        value: log_likelihood - penalty,
        log_likelihood,
        penalty,
        params,
        degenerate: false,
    }
}

/// Scores `clustering` against `vectors`, which must cover exactly the
/// clustered ids.
pub fn bic_score(vectors: &[EmbeddingVector], clustering: &Clustering) -> Result<BicScore, ClusterError> {
    let points = Points::new(vectors)?;
    if points.len() != clustering.assignments.len() {
        return Err(ClusterError::InvalidParameters(format!(
            "{} vectors for a clustering of {}",
            points.len(),
            clustering.assignments.len()
        )));
    }
    let mut labels = Vec::with_capacity(points.len());
    for id in &points.ids {
        let label = *clustering
            .assignments
            .get(*id)
            .ok_or_else(|| ClusterError::InvalidParameters(format!("{id} is not in the clustering")))?;
        if label >= clustering.centroids.len() {
            return Err(ClusterError::InvalidParameters(format!("{id} assigned to missing cluster {label}")));
        }
        labels.push(label);
    }
    if clustering.centroids.iter().any(|c| c.len() != points.dim()) {
        return Err(ClusterError::DimensionMismatch {
            ad_id: "centroid".into(),
            expected: points.dim(),
            actual: clustering.centroids[0].len(),
        });
    }
    Ok(bic_parts(&points.rows, &labels, &clustering.centroids))
}

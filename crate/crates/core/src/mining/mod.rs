//! Insight mining: embeddings, X-means clustering, archetype labeling and
//! persona × challenge coverage.

pub mod ari;
pub mod archetype;
pub mod bic;
pub mod coverage;
pub mod embed;
pub mod kmeans;
pub mod xmeans;

pub use ari::adjusted_rand_index;
pub use archetype::{synthesize_all, synthesize_archetype, Archetype, Challenge, Member, PillarField, Persona};
pub use bic::{bic_score, BicScore};
pub use coverage::{coverage_matrix, detect_gaps, CoverageMatrix, Gap};
pub use embed::{
    embed_texts, embed_with_cache, EmbedError, Embedder, EmbeddingCache, EmbeddingVector, OfflineEmbedder,
    DEFAULT_EMBEDDING_DIM,
};
pub use kmeans::{kmeans, kmeans_with_trace, ClusterError, Clustering, DEFAULT_MAX_ITER};
pub use xmeans::{default_k_max, xmeans};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MiningError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("persona and challenge clusterings share no ads")]
    DisjointUniverses,
}

/// Checks the structural invariants of a clustering against its input:
/// every vector assigned once, no empty cluster, and every point assigned
/// to its nearest centroid (ties to the lowest index). Returns the first
/// violation found.
pub fn validate_clustering(vectors: &[EmbeddingVector], clustering: &Clustering) -> Result<(), String> {
    if clustering.centroids.len() != clustering.k {
        return Err(format!("k={} but {} centroids", clustering.k, clustering.centroids.len()));
    }
    if vectors.len() != clustering.assignments.len() {
        return Err(format!("{} vectors, {} assignments", vectors.len(), clustering.assignments.len()));
    }
    let mut sizes = vec![0usize; clustering.k];
    for v in vectors {
        let &label = clustering
            .assignments
            .get(&v.ad_id)
            .ok_or_else(|| format!("{} unassigned", v.ad_id))?;
        if label >= clustering.k {
            return Err(format!("{} assigned to {label} >= k", v.ad_id));
        }
        sizes[label] += 1;
        let dists: Vec<f64> = clustering.centroids.iter().map(|c| kmeans::sq_dist(&v.values, c)).collect();
        let best = dists
            .iter()
            .enumerate()
            .fold(0, |b, (j, d)| if *d < dists[b] { j } else { b });
        if best != label {
            return Err(format!(
                "{} assigned to {label} (d²={}) but nearest is {best} (d²={})",
                v.ad_id, dists[label], dists[best]
            ));
        }
    }
    if let Some(j) = sizes.iter().position(|&s| s == 0) {
        return Err(format!("cluster {j} is empty"));
    }
    Ok(())
}

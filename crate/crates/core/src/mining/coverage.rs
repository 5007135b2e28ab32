//! Persona × challenge coverage counts and gap ranking.

use serde::{Deserialize, Serialize};

use super::archetype::PillarField;
use super::kmeans::Clustering;
use super::MiningError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    /// Persona ids, in cluster order.
    pub personas: Vec<String>,
    /// Challenge ids, in cluster order.
    pub challenges: Vec<String>,
    /// `counts[p][c]`: ads assigned to persona `p` and challenge `c`.
    pub counts: Vec<Vec<usize>>,
    /// Ads clustered on the persona side only.
    pub persona_only: usize,
    /// Ads clustered on the challenge side only.
    pub challenge_only: usize,
}

impl CoverageMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub rank: usize,
    pub persona_index: usize,
    pub challenge_index: usize,
    pub persona: String,
    pub challenge: String,
    pub count: usize,
}

/// Counts ads per (persona, challenge) over the ids both clusterings share.
pub fn coverage_matrix(persona: &Clustering, challenge: &Clustering) -> Result<CoverageMatrix, MiningError> {
    let mut counts = vec![vec![0usize; challenge.k]; persona.k];
    let mut common = 0;
    for (id, &p) in &persona.assignments {
        if let Some(&c) = challenge.assignments.get(id) {
            counts[p][c] += 1;
            common += 1;
        }
    }
    if common == 0 {
        return Err(MiningError::DisjointUniverses);
    }
    Ok(CoverageMatrix {
        personas: (0..persona.k).map(|i| PillarField::Audience.archetype_id(i)).collect(),
        challenges: (0..challenge.k).map(|i| PillarField::Insight.archetype_id(i)).collect(),
        counts,
        persona_only: persona.assignments.len() - common,
        challenge_only: challenge.assignments.len() - common,
    })
}

/// The `top_n` lowest-count cells, ascending; ties by (persona, challenge).
pub fn detect_gaps(matrix: &CoverageMatrix, top_n: usize) -> Vec<Gap> {
    let mut cells: Vec<(usize, usize, usize)> = matrix
        .counts
        .iter()
        .enumerate()
        .flat_map(|(p, row)| row.iter().enumerate().map(move |(c, &n)| (n, p, c)))
        .collect();
    cells.sort_unstable();
    cells
        .into_iter()
        .take(top_n)
        .enumerate()
        .map(|(rank, (count, p, c))| Gap {
            rank,
            persona_index: p,
            challenge_index: c,
            persona: matrix.personas[p].clone(),
            challenge: matrix.challenges[c].clone(),
            count,
        })
        .collect()
}

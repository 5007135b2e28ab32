//! Persona and challenge synthesis from clusters of pillar records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kmeans::{sq_dist, Clustering};
use super::MiningError;
use crate::gateway::{field_str, Bindings, CompletionRequest, Gateway};
use crate::pillars::ContentPillars;

pub const ARCHETYPE_SCHEMA: &str = "archetype_label";
const EXEMPLARS: usize = 5;
const PROMPT_SAMPLES: usize = 12;
const FALLBACK_TOKENS: usize = 5;

const STOPWORDS: &[&str] = &[
    "and", "are", "but", "for", "from", "has", "have", "into", "its", "not", "our", "that", "the",
    "their", "them", "they", "this", "was", "who", "with", "you", "your",
];

/// Which pillar a clustering was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PillarField {
    Audience,
    Insight,
}

impl PillarField {
    pub fn text<'a>(&self, pillars: &'a ContentPillars) -> &'a str {
        match self {
            PillarField::Audience => &pillars.audience,
            PillarField::Insight => &pillars.insight,
        }
    }

    pub fn template_id(&self) -> &'static str {
        match self {
            PillarField::Audience => "persona_label",
            PillarField::Insight => "challenge_label",
        }
    }

    pub fn id_prefix(&self) -> &'static str {
        match self {
            PillarField::Audience => "persona",
            PillarField::Insight => "challenge",
        }
    }

    pub fn archetype_id(&self, cluster_index: usize) -> String {
        format!("{}-{cluster_index}", self.id_prefix())
    }
}

/// An LLM-labeled cluster: a persona (audience clusters) or a challenge
/// theme (insight clusters).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Archetype {
    pub id: String,
    pub field: PillarField,
    pub name: String,
    pub description: String,
    pub size: usize,
    pub cluster_index: usize,
    pub exemplar_ad_ids: Vec<String>,
    /// Set when the gateway could not label the cluster.
    pub auto_labeled: bool,
    /// Image-generation prompt for a persona avatar; never executed here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avatar_prompt: Option<String>,
}

pub type Persona = Archetype;
pub type Challenge = Archetype;

/// One cluster member: its pillar record and embedding.
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub pillars: &'a ContentPillars,
    pub vector: &'a [f64],
}

/// Members ordered by distance to `centroid`, ties by ad id.
fn by_proximity<'a>(members: &[Member<'a>], centroid: &[f64]) -> Vec<Member<'a>> {
    let mut sorted = members.to_vec();
    sorted.sort_by(|a, b| {
        sq_dist(a.vector, centroid)
            .total_cmp(&sq_dist(b.vector, centroid))
            .then_with(|| a.pillars.ad_id.cmp(&b.pillars.ad_id))
    });
    sorted
}

fn top_tokens(texts: &[&str]) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        let lower = text.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()) {
            if token.chars().count() >= 3 && !STOPWORDS.contains(&token) {
                *counts.entry(token.to_string()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(FALLBACK_TOKENS).map(|(t, _)| t).collect()
}

pub fn label_request(field: PillarField, members_by_proximity: &[Member<'_>]) -> CompletionRequest {
    let samples: Vec<String> = members_by_proximity
        .iter()
        .take(PROMPT_SAMPLES)
        .map(|m| format!("- {}", field.text(m.pillars)))
        .collect();
    let mut bindings = Bindings::new();
    bindings.insert("cluster_size".into(), members_by_proximity.len().to_string());
    bindings.insert("samples".into(), samples.join("\n"));
    CompletionRequest::new(field.template_id(), ARCHETYPE_SCHEMA, bindings)
}

/// Labels one cluster. Size and exemplars are computed locally; name and
/// description come from the gateway, or from token frequencies when the
/// gateway fails.
pub fn synthesize_archetype(
    gateway: &Gateway,
    field: PillarField,
    cluster_index: usize,
    centroid: &[f64],
    members: &[Member<'_>],
) -> Result<Archetype, MiningError> {
    if members.is_empty() {
        return Err(MiningError::EmptyCluster(cluster_index));
    }
    let ordered = by_proximity(members, centroid);
    let exemplar_ad_ids = ordered
        .iter()
        .take(EXEMPLARS)
        .map(|m| m.pillars.ad_id.clone())
        .collect();

    let labeled = gateway
        .complete_structured(&label_request(field, &ordered))
        .map_err(|e| e.to_string())
        .and_then(|r| match r.parsed {
            Some(map) if !r.validation_failed => {
                match (field_str(&map, "name"), field_str(&map, "description")) {
                    (Some(name), Some(description)) => Ok((name, description)),
                    _ => Err("empty name or description".to_string()),
                }
            }
            _ => Err(r.errors.join("; ")),
        });
    let (name, description, auto_labeled) = match labeled {
        Ok((name, description)) => (name, description, false),
        Err(reason) => {
            log::warn!("{} {cluster_index}: falling back to automatic label ({reason})", field.id_prefix());
            let texts: Vec<&str> = members.iter().map(|m| field.text(m.pillars)).collect();
            let tokens = top_tokens(&texts);
            let description = if tokens.is_empty() {
                format!("{} ads without a dominant term", members.len())
            } else {
                format!("Frequent terms: {}", tokens.join(", "))
            };
            (format!("Cluster {cluster_index}"), description, true)
        }
    };

    let avatar_prompt = (field == PillarField::Audience)
        .then(|| format!("Portrait of a typical member of the \"{name}\" audience. {description}"));
    Ok(Archetype {
        id: field.archetype_id(cluster_index),
        field,
        name,
        description,
        size: members.len(),
        cluster_index,
        exemplar_ad_ids,
        auto_labeled,
        avatar_prompt,
    })
}

/// Labels every cluster of `clustering`, in cluster order. Ads without a
/// pillar row or vector are skipped.
pub fn synthesize_all(
    gateway: &Gateway,
    field: PillarField,
    clustering: &Clustering,
    pillars: &[ContentPillars],
    vectors: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<Archetype>, MiningError> {
    let by_id: BTreeMap<&str, &ContentPillars> = pillars.iter().map(|p| (p.ad_id.as_str(), p)).collect();
    (0..clustering.k)
        .map(|j| {
            let members: Vec<Member<'_>> = clustering
                .members(j)
                .into_iter()
                .filter_map(|id| {
                    Some(Member {
                        pillars: by_id.get(id)?,
                        vector: vectors.get(id)?.as_slice(),
                    })
                })
                .collect();
            synthesize_archetype(gateway, field, j, &clustering.centroids[j], &members)
        })
        .collect()
}

//! Content pillar extraction: one structured record per ad.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ads::AdCreative;
use crate::gateway::{field_str, Bindings, CompletionRequest, Gateway, GatewayError};

pub const PILLAR_TEMPLATE: &str = "pillar_extraction";
pub const PILLAR_SCHEMA: &str = "content_pillars";
pub const UNKNOWN: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentPillars {
    pub ad_id: String,
    pub audience: String,
    pub insight: String,
    pub need: String,
    pub product: String,
    pub value_proposition: String,
    pub emotional_appeal: String,
    pub tone: String,
    pub archetype: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PillarError {
    #[error("extraction failed for {ad_id}: {reason}")]
    ExtractionFailed { ad_id: String, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PillarFailure {
    pub ad_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PillarTable {
    /// Sorted by `ad_id`, ids unique.
    pub rows: Vec<ContentPillars>,
    pub failures: Vec<PillarFailure>,
}

impl PillarTable {
    pub fn get(&self, ad_id: &str) -> Option<&ContentPillars> {
        self.rows
            .binary_search_by(|r| r.ad_id.as_str().cmp(ad_id))
            .ok()
            .map(|i| &self.rows[i])
    }

    /// Folds `newer` into `self`; newer rows and failures win per ad id.
    pub fn merge(&mut self, newer: PillarTable) {
        let mut rows: BTreeMap<String, ContentPillars> =
            self.rows.drain(..).map(|r| (r.ad_id.clone(), r)).collect();
        let mut failures: BTreeMap<String, PillarFailure> =
            self.failures.drain(..).map(|f| (f.ad_id.clone(), f)).collect();
        for f in newer.failures {
            rows.remove(&f.ad_id);
            failures.insert(f.ad_id.clone(), f);
        }
        for r in newer.rows {
            failures.remove(&r.ad_id);
            rows.insert(r.ad_id.clone(), r);
        }
        self.rows = rows.into_values().collect();
        self.failures = failures.into_values().collect();
    }

    /// One JSON object per row, field names as in [`ContentPillars`].
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for row in &self.rows {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> std::io::Result<Vec<ContentPillars>> {
        let mut rows = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
        }
        rows.sort_by(|a: &ContentPillars, b| a.ad_id.cmp(&b.ad_id));
        Ok(rows)
    }
}

pub fn pillar_request(ad: &AdCreative) -> CompletionRequest {
    let mut bindings = Bindings::new();
    bindings.insert("brand".into(), ad.brand.clone());
    bindings.insert("headline".into(), ad.headline.clone().unwrap_or_default());
    bindings.insert("body_text".into(), ad.body_text.clone());
    CompletionRequest::new(PILLAR_TEMPLATE, PILLAR_SCHEMA, bindings)
}

fn require_core_fields(map: &serde_json::Map<String, serde_json::Value>) -> Result<(), String> {
    for field in ["audience", "insight"] {
        if field_str(map, field).is_none() {
            return Err(format!("{field} empty"));
        }
    }
    Ok(())
}

pub fn extract_pillars(gateway: &Gateway, ad: &AdCreative) -> Result<ContentPillars, PillarError> {
    let result = gateway.complete_checked(&pillar_request(ad), require_core_fields)?;
    let map = match result.parsed {
        Some(map) if !result.validation_failed => map,
        _ => {
            return Err(PillarError::ExtractionFailed {
                ad_id: ad.id.clone(),
                reason: result.errors.join("; "),
            })
        }
    };
    let get = |name: &str| field_str(&map, name).unwrap_or_else(|| UNKNOWN.to_string());
    Ok(ContentPillars {
        ad_id: ad.id.clone(),
        audience: get("audience"),
        insight: get("insight"),
        need: get("need"),
        product: get("product"),
        value_proposition: get("value_proposition"),
        emotional_appeal: get("emotional_appeal"),
        tone: get("tone"),
        archetype: get("archetype"),
    })
}

/// Extracts every ad in parallel; per-ad failures are collected, not raised.
pub fn batch_extract(gateway: &Gateway, ads: &[AdCreative]) -> PillarTable {
    let outcomes: Vec<(String, Result<ContentPillars, PillarError>)> = ads
        .par_iter()
        .map(|ad| (ad.id.clone(), extract_pillars(gateway, ad)))
        .collect();
    let mut table = PillarTable::default();
    for (ad_id, outcome) in outcomes {
        match outcome {
            Ok(row) => table.rows.push(row),
            Err(PillarError::ExtractionFailed { reason, .. }) => table.failures.push(PillarFailure { ad_id, reason }),
            Err(e) => table.failures.push(PillarFailure {
                ad_id,
                reason: e.to_string(),
            }),
        }
    }
    table.rows.sort_by(|a, b| a.ad_id.cmp(&b.ad_id));
    table.rows.dedup_by(|a, b| a.ad_id == b.ad_id);
    table.failures.sort_by(|a, b| a.ad_id.cmp(&b.ad_id));
    table.failures.dedup_by(|a, b| a.ad_id == b.ad_id);
    table
}

//! Recommended actions parsed from an analysis reply.

use std::io::Write;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::TelemetryError;
use crate::gateway::extract_first_object;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Budget,
    Creative,
    Targeting,
    Pacing,
    Monitoring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendedAction {
    pub kind: ActionKind,
    pub description: String,
    pub confidence: Confidence,
    pub evidence_refs: Vec<String>,
}

static KIND_PATTERNS: LazyLock<Vec<(ActionKind, Regex)>> = LazyLock::new(|| {
    [
        (ActionKind::Budget, r"(?i)\b(budget|bid)"),
        (ActionKind::Creative, r"(?i)(\bcreative|\bvisual|\ba/b\b)"),
        (ActionKind::Targeting, r"(?i)\b(audience|retarget)"),
        (ActionKind::Pacing, r"(?i)\b(pacing|schedul)"),
        (ActionKind::Monitoring, r"(?i)\b(monitor|track)"),
    ]
    .into_iter()
    .map(|(k, p)| (k, Regex::new(p).expect("static pattern")))
    .collect()
});

static METRIC_PATTERN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(cpr|cpm|ctr|cr|spend|reach|frequency|results?)\b").expect("static pattern")
});

static BULLET: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)])\s+(.*\S)\s*$").expect("static pattern"));

/// First kind whose keywords occur in `text`, checked in declaration order.
pub fn classify(text: &str) -> Option<ActionKind> {
    KIND_PATTERNS.iter().find(|(_, re)| re.is_match(text)).map(|(k, _)| *k)
}

/// Metric names mentioned in `text`, lowercased, in first-mention order.
pub fn mentioned_metrics(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in METRIC_PATTERN.find_iter(text) {
        let mut name = m.as_str().to_ascii_lowercase();
        if name == "result" {
            name = "results".into();
        }
        if !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

fn action_from_value(v: &Value) -> Option<RecommendedAction> {
    let obj = v.as_object()?;
    let description = obj.get("description")?.as_str()?.trim().to_string();
    if description.is_empty() {
        return None;
    }
    let kind = obj
        .get("kind")
        .and_then(|k| serde_json::from_value::<ActionKind>(Value::String(k.as_str()?.trim().to_lowercase())).ok())
        .or_else(|| classify(&description))?;
    let confidence = obj
        .get("confidence")
        .and_then(|c| serde_json::from_value::<Confidence>(Value::String(c.as_str()?.trim().to_lowercase())).ok())
        .unwrap_or(Confidence::Low);
    let evidence_refs = obj
        .get("evidence")
        .or_else(|| obj.get("evidence_refs"))
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(|e| e.as_str()).map(|s| s.trim().to_lowercase()).collect())
        .unwrap_or_else(|| mentioned_metrics(&description));
    Some(RecommendedAction {
        kind,
        description,
        confidence,
        evidence_refs,
    })
}

fn structured(text: &str) -> Option<Vec<RecommendedAction>> {
    let items = match extract_first_object(text) {
        Some(obj) => obj.get("actions")?.as_array()?.clone(),
        None => {
            let (start, end) = (text.find('[')?, text.rfind(']')?);
            serde_json::from_str::<Vec<Value>>(text.get(start..=end)?).ok()?
        }
    };
    let actions: Vec<_> = items.iter().filter_map(action_from_value).collect();
    (!actions.is_empty()).then_some(actions)
}

fn candidate_lines(text: &str) -> Vec<String> {
    let bullets: Vec<String> = text
        .lines()
        .filter_map(|l| BULLET.captures(l).map(|c| c[1].to_string()))
        .collect();
    if !bullets.is_empty() {
        return bullets;
    }
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        current.push(c);
        if matches!(c, '.' | '!' | '?' | '\n') {
            let s = current.trim().trim_end_matches(['.', '!', '?']).trim().to_string();
            if !s.is_empty() {
                out.push(s);
            }
            current.clear();
        }
    }
    let tail = current.trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

/// Parses a reply's actions: a JSON `{"actions": [...]}` object (or bare
/// array) when present, otherwise keyword-matched bullet lines or
/// sentences, each with low confidence.
pub fn parse_recommendations(text: &str) -> Result<Vec<RecommendedAction>, TelemetryError> {
    if text.trim().is_empty() {
        return Err(TelemetryError::NoActionsFound);
    }
    if let Some(actions) = structured(text) {
        return Ok(actions);
    }
    let actions: Vec<_> = candidate_lines(text)
        .into_iter()
        .filter_map(|line| {
            Some(RecommendedAction {
                kind: classify(&line)?,
                evidence_refs: mentioned_metrics(&line),
                description: line,
                confidence: Confidence::Low,
            })
        })
        .collect();
    if actions.is_empty() {
        Err(TelemetryError::NoActionsFound)
    } else {
        Ok(actions)
    }
}

/// One JSON record per line.
pub fn write_actions_jsonl<W: Write>(mut writer: W, actions: &[RecommendedAction]) -> Result<(), TelemetryError> {
    for a in actions {
        let line = serde_json::to_string(a).map_err(|e| TelemetryError::Io(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| TelemetryError::Io(e.to_string()))?;
    }
    Ok(())
}

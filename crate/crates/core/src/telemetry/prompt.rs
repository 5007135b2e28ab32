//! The campaign analysis prompt and creative image encoding.

use std::io::Cursor;
use std::path::Path;

use base64::Engine;
use image::imageops::FilterType;
use image::{DynamicImage, GenericImageView, ImageFormat};
use serde::{Deserialize, Serialize};

use super::metrics::{MetricRow, TrendSeries, METRICS};
use super::TelemetryError;
use crate::gateway::{builtin_template, Bindings, CompletionRequest, ImagePayload};
use crate::util::round_to;

pub const ANALYSIS_TEMPLATE: &str = "campaign_analysis";
pub const CREATIVE_SIDE: u32 = 512;

pub const GUIDING_QUESTIONS: [&str; 6] = [
    "How did CPR and Spend evolve?",
    "What were the corresponding changes in CTR, CPM, and CR?",
    "Were these changes causally connected?",
    "Which secondary metrics influenced CPR the most?",
    "What creative-level insights explain these shifts?",
    "What actions should be taken?",
];

pub const DEFAULT_KNOWLEDGE: &str = "\
Metric definitions:
- Reach: unique people who saw at least one ad.
- Frequency: impressions divided by reach; rising values signal fatigue.
- Results: conversions counted toward the campaign objective.
- CPR (cost per result): spend divided by results.
- Spend: amount spent in the period.
- CPM: spend per 1,000 impressions; a proxy for auction pressure.
- CTR: clicks divided by impressions.
- CR click-to-view: landing-page views divided by clicks.
- CR click-to-result: results divided by clicks.
Percentage changes compare each period with the one before it. n/a marks a value whose denominator was zero.";

pub const DEFAULT_ROLE: &str = "\
You lead performance marketing for this account. Give firm, specific recommendations and state your reasoning plainly; do not hedge.";

pub const DEFAULT_TASK: &str = "\
Lower the cost per result. Read the CPR and spend trends against CTR, CPM and the conversion rates, and find the shifts that explain them. \
Answer each guiding question, then list your recommended actions as one JSON object: \
{\"actions\": [{\"kind\": \"budget|creative|targeting|pacing|monitoring\", \"description\": \"...\", \"confidence\": \"low|medium|high\", \"evidence\": [\"metric names\"]}]}";

/// Replaceable prompt texts. The guiding questions must number six.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTexts {
    pub knowledge: String,
    pub role: String,
    pub task: String,
    pub guiding_questions: Vec<String>,
}

impl Default for PromptTexts {
    fn default() -> Self {
        PromptTexts {
            knowledge: DEFAULT_KNOWLEDGE.into(),
            role: DEFAULT_ROLE.into(),
            task: DEFAULT_TASK.into(),
            guiding_questions: GUIDING_QUESTIONS.iter().map(|q| q.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisPrompt {
    pub knowledge: String,
    pub role: String,
    pub task: String,
    pub guiding_questions: Vec<String>,
    pub data: String,
    pub image_payloads: Vec<ImagePayload>,
}

impl AnalysisPrompt {
    fn bindings(&self) -> Bindings {
        let questions = self
            .guiding_questions
            .iter()
            .enumerate()
            .map(|(i, q)| format!("{}. {q}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        Bindings::from([
            ("knowledge".to_string(), self.knowledge.clone()),
            ("role".to_string(), self.role.clone()),
            ("task".to_string(), self.task.clone()),
            ("guiding_questions".to_string(), questions),
            ("data".to_string(), self.data.clone()),
        ])
    }

    /// Plain text with `## Knowledge` … `## Data` sections.
    pub fn render(&self) -> String {
        builtin_template(ANALYSIS_TEMPLATE)
            .expect("analysis template is built in")
            .render(&self.bindings())
            .expect("all analysis bindings supplied")
    }

    /// A free-text completion request carrying the creatives as images.
    pub fn completion_request(&self) -> CompletionRequest {
        CompletionRequest {
            template_id: ANALYSIS_TEMPLATE.into(),
            bindings: self.bindings(),
            schema_id: None,
            images: self.image_payloads.clone(),
        }
    }
}

fn cell(value: Option<f64>, fmt: fn(f64) -> String) -> String {
    value.map_or_else(|| "n/a".to_string(), fmt)
}

fn money(v: f64) -> String {
    format!("{:.2}", round_to(v, 2))
}

fn percent(v: f64) -> String {
    format!("{:.2}%", round_to(100.0 * v, 2))
}

fn format_metric(row: &MetricRow, name: &str) -> String {
    let v = row.metric(name).flatten();
    match name {
        "reach" | "results" => cell(v, |x| format!("{x:.0}")),
        "frequency" => cell(v, |x| format!("{:.2}", round_to(x, 2))),
        "ctr" | "cr_click_to_view" | "cr_click_to_result" => cell(v, percent),
        _ => cell(v, money),
    }
}

const KEY_WIDTH: usize = 12;
const COL_WIDTH: usize = 19;

fn table_line(first: &str, cells: impl Iterator<Item = String>) -> String {
    let mut line = format!("{first:<KEY_WIDTH$}");
    for c in cells {
        line.push_str(&format!(" {c:>COL_WIDTH$}"));
    }
    line.trim_end().to_string()
}

fn render_series(series: &TrendSeries) -> String {
    let mut out = format!("### {} metrics\n", series.granularity);
    out.push_str(&table_line("period", METRICS.iter().map(|m| m.to_string())));
    out.push('\n');
    for p in &series.points {
        out.push_str(&table_line(&p.period_key, METRICS.iter().map(|m| format_metric(p, m))));
        out.push('\n');
    }
    if !series.pct_changes.is_empty() {
        out.push_str(&format!("\n### {} percentage changes\n", series.granularity));
        out.push_str(&table_line("period", METRICS.iter().map(|m| m.to_string())));
        out.push('\n');
        for ch in &series.pct_changes {
            let cells = METRICS
                .iter()
                .map(|m| cell(ch.values.get(*m).copied().flatten(), |x| format!("{:+.2}%", round_to(x, 2))));
            out.push_str(&table_line(&ch.to, cells));
            out.push('\n');
        }
    }
    out
}

/// Assembles the analysis prompt. Byte-deterministic in its inputs.
pub fn build_analysis_prompt(
    series: &[TrendSeries],
    creatives: Vec<ImagePayload>,
    texts: &PromptTexts,
) -> Result<AnalysisPrompt, TelemetryError> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(TelemetryError::EmptySeries);
    }
    if texts.guiding_questions.len() != GUIDING_QUESTIONS.len() {
        return Err(TelemetryError::GuidingQuestions(texts.guiding_questions.len()));
    }
    for (name, text) in [("knowledge", &texts.knowledge), ("role", &texts.role), ("task", &texts.task)] {
        if text.trim().is_empty() {
            return Err(TelemetryError::EmptySection(name));
        }
    }
    if texts.guiding_questions.iter().any(|q| q.trim().is_empty()) {
        return Err(TelemetryError::EmptySection("guiding_questions"));
    }
    let mut data = series.iter().map(render_series).collect::<Vec<_>>().join("\n");
    if !creatives.is_empty() {
        data.push_str("\n### Creatives\n");
        for c in &creatives {
            data.push_str(&format!("- {}: attached image {}x{}\n", c.creative_id, c.width, c.height));
        }
    }
    Ok(AnalysisPrompt {
        knowledge: texts.knowledge.trim().to_string(),
        role: texts.role.trim().to_string(),
        task: texts.task.trim().to_string(),
        guiding_questions: texts.guiding_questions.iter().map(|q| q.trim().to_string()).collect(),
        data: data.trim_end().to_string(),
        image_payloads: creatives,
    })
}

/// Decodes an image, resizes it (bilinear) to exactly 512×512 and encodes
/// it as base64 PNG. Aspect ratio is not preserved. Images already 512×512
/// pass through unresampled.
pub fn encode_creative(creative_id: &str, bytes: &[u8]) -> Result<ImagePayload, TelemetryError> {
    let img = image::load_from_memory(bytes).map_err(|e| TelemetryError::UndecodableImage(e.to_string()))?;
    let img = if img.dimensions() == (CREATIVE_SIDE, CREATIVE_SIDE) {
        img
    } else {
        DynamicImage::ImageRgba8(image::imageops::resize(&img, CREATIVE_SIDE, CREATIVE_SIDE, FilterType::Triangle))
    };
    let mut png = Vec::new();
    img.write_to(&mut Cursor::new(&mut png), ImageFormat::Png)
        .map_err(|e| TelemetryError::UndecodableImage(e.to_string()))?;
    Ok(ImagePayload {
        creative_id: creative_id.to_string(),
        media_type: "image/png".into(),
        width: CREATIVE_SIDE,
        height: CREATIVE_SIDE,
        data_base64: base64::engine::general_purpose::STANDARD.encode(png),
    })
}

/// [`encode_creative`] on a file; the creative id is the file stem.
pub fn encode_creative_file(path: &Path) -> Result<ImagePayload, TelemetryError> {
    let bytes = std::fs::read(path).map_err(|e| TelemetryError::Io(format!("{}: {e}", path.display())))?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("creative");
    encode_creative(id, &bytes)
}

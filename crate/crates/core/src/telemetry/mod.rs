//! Campaign telemetry: metrics, trends, analysis prompts, recommendations.

mod actions;
mod metrics;
mod prompt;
mod rows;

pub use actions::{
    classify, mentioned_metrics, parse_recommendations, write_actions_jsonl, ActionKind, Confidence, RecommendedAction,
};
pub use metrics::{
    aggregate, daily_to_weekly, derive_metrics, iso_week_key, pct_change, summarize_ranges, Granularity, MetricRange,
    MetricRow, PctChange, TrendSeries, METRICS,
};
pub use prompt::{
    build_analysis_prompt, encode_creative, encode_creative_file, AnalysisPrompt, PromptTexts, ANALYSIS_TEMPLATE,
    CREATIVE_SIDE, GUIDING_QUESTIONS,
};
pub use rows::{read_telemetry_csv, write_telemetry_csv, RawTelemetryRow, TELEMETRY_HEADER};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TelemetryError {
    #[error("no telemetry rows")]
    EmptyInput,
    #[error("series has no points")]
    EmptySeries,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unknown granularity {0:?}")]
    UnknownGranularity(String),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("metric {0} is undefined in every period")]
    AllUndefined(String),
    #[error("expected 6 guiding questions, got {0}")]
    GuidingQuestions(usize),
    #[error("prompt section {0} is empty")]
    EmptySection(&'static str),
    #[error("cannot decode image: {0}")]
    UndecodableImage(String),
    #[error("no actionable recommendations found")]
    NoActionsFound,
    #[error("io error: {0}")]
    Io(String),
}

//! Creative optimization: salient regions, ablation variants, degradation.

mod ablation;
mod heatmap;

pub use ablation::{
    degradation_report, funnel_rates, plan_ablation, raw_ratios, read_variant_stats, summarize_drops,
    write_report_csv, write_variant_stats, AblationReport, AblationRow, Drop, F1Formula, FunnelRates, RawRatios,
    VariantSpec, VariantStats,
};
pub use heatmap::{load_heatmap, parse_heatmap, rank_regions, AttentionHeatmap, SalientRegion};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CreativeError {
    #[error("heatmap is {width}x{height} but has {len} weights")]
    ShapeMismatch { width: usize, height: usize, len: usize },
    #[error("heatmap has no positive weight")]
    AllZero,
    #[error("heatmap weight {0} is negative or not finite")]
    InvalidWeight(usize),
    #[error("threshold {0} is outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("variant {0} has zero impressions")]
    ZeroImpressions(String),
    #[error("zero denominator for {metric} in {variant}")]
    ZeroDenominator { metric: &'static str, variant: String },
    #[error("invalid variant stats: {0}")]
    InvalidStats(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

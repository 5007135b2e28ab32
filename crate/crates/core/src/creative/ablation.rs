//! Ablation plans, funnel rates and degradation reports.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::heatmap::SalientRegion;
use super::CreativeError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub variant_id: String,
    pub removed_region_ids: Vec<String>,
    /// Human labels of the removed elements; the region id when unlabeled.
    pub removed_elements: Vec<String>,
}

/// Cumulative removal plan: variant `i` drops the top `i` regions.
pub fn plan_ablation(
    regions: &[SalientRegion],
    element_labels: &BTreeMap<String, String>,
    max_variants: usize,
) -> Vec<VariantSpec> {
    (1..=regions.len().min(max_variants))
        .map(|i| {
            let removed = &regions[..i];
            VariantSpec {
                variant_id: format!("v{i}"),
                removed_region_ids: removed.iter().map(|r| r.region_id.clone()).collect(),
                removed_elements: removed
                    .iter()
                    .map(|r| element_labels.get(&r.region_id).cloned().unwrap_or_else(|| r.region_id.clone()))
                    .collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantStats {
    pub variant_id: String,
    pub label: String,
    pub impressions: u64,
    pub clicks: u64,
    pub lpv: u64,
    pub results: u64,
    pub removed_elements: Vec<String>,
}

impl VariantStats {
    pub fn validate(&self) -> Result<(), CreativeError> {
        let bad = |why: &str| Err(CreativeError::InvalidStats(format!("{}: {why}", self.variant_id)));
        if self.clicks > self.impressions {
            return bad("clicks exceed impressions");
        }
        if self.lpv > self.clicks {
            return bad("landing-page views exceed clicks");
        }
        if self.results > self.clicks {
            return bad("results exceed clicks");
        }
        Ok(())
    }

    /// The element column used in drop summaries.
    pub fn element(&self) -> String {
        if self.removed_elements.is_empty() {
            self.label.clone()
        } else {
            self.removed_elements.join(" + ")
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsRecord {
    variant_id: String,
    label: String,
    impressions: u64,
    clicks: u64,
    lpv: u64,
    results: u64,
    #[serde(default)]
    removed_elements: String,
}

/// Reads variant stats CSV (`removed_elements` is `;`-separated).
pub fn read_variant_stats<R: Read>(reader: R) -> Result<Vec<VariantStats>, CreativeError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.deserialize::<StatsRecord>() {
        let r = record.map_err(|e| CreativeError::Parse(e.to_string()))?;
        let stats = VariantStats {
            variant_id: r.variant_id,
            label: r.label,
            impressions: r.impressions,
            clicks: r.clicks,
            lpv: r.lpv,
            results: r.results,
            removed_elements: r
                .removed_elements
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        };
        stats.validate()?;
        out.push(stats);
    }
    Ok(out)
}

pub fn write_variant_stats<W: Write>(writer: W, stats: &[VariantStats]) -> Result<(), CreativeError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CreativeError::Io(e.to_string());
    for s in stats {
        wtr.serialize(StatsRecord {
            variant_id: s.variant_id.clone(),
            label: s.label.clone(),
            impressions: s.impressions,
            clicks: s.clicks,
            lpv: s.lpv,
            results: s.results,
            removed_elements: s.removed_elements.join(";"),
        })
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| CreativeError::Io(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunnelRates {
    pub ctr: f64,
    pub lpv_per_click: f64,
    pub result_per_click: f64,
}

pub fn funnel_rates(stats: &VariantStats) -> Result<FunnelRates, CreativeError> {
    if stats.impressions == 0 {
        return Err(CreativeError::ZeroImpressions(stats.variant_id.clone()));
    }
    let per_click = |n: u64| if stats.clicks == 0 { 0.0 } else { n as f64 / stats.clicks as f64 };
    Ok(FunnelRates {
        ctr: stats.clicks as f64 / stats.impressions as f64,
        lpv_per_click: per_click(stats.lpv),
        result_per_click: per_click(stats.results),
    })
}

/// Which pair of ratios the `f1` column takes the harmonic mean of.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Formula {
    #[default]
    CtrLpvAndCtr,
    LpvAndCtr,
}

/// Unrounded variant/original ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRatios {
    pub lpv: f64,
    pub ctr_lpv: f64,
    pub ctr: f64,
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant_id: String,
    pub label: String,
    pub element: String,
    pub lpv_ratio: f64,
    pub ctr_lpv_ratio: f64,
    pub ctr_ratio: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub f1_formula: F1Formula,
    /// The original against itself: every ratio 1.
    pub original: AblationRow,
    pub rows: Vec<AblationRow>,
    /// Mean of the rounded per-variant values, rounded again; `None` with no variants.
    pub overall: Option<AblationRow>,
}

/// Variant rates over the original's, before rounding.
pub fn raw_ratios(original: &VariantStats, variant: &VariantStats) -> Result<RawRatios, CreativeError> {
    let zero = |metric: &'static str, who: &VariantStats| CreativeError::ZeroDenominator {
        metric,
        variant: who.variant_id.clone(),
    };
    if original.impressions == 0 {
        return Err(zero("ctr", original));
    }
    if original.clicks == 0 {
        return Err(zero("ctr_lpv", original));
    }
    if original.lpv == 0 {
        return Err(zero("lpv", original));
    }
    if variant.impressions == 0 {
        return Err(zero("ctr", variant));
    }
    let o = funnel_rates(original)?;
    let v = funnel_rates(variant)?;
    let lpv_rate = |s: &VariantStats| s.lpv as f64 / s.impressions as f64;
    Ok(RawRatios {
        lpv: lpv_rate(variant) / lpv_rate(original),
        ctr_lpv: v.lpv_per_click / o.lpv_per_click,
        ctr: v.ctr / o.ctr,
    })
}

fn row_for(variant: &VariantStats, r: RawRatios, formula: F1Formula) -> AblationRow {
    let f1 = match formula {
        F1Formula::CtrLpvAndCtr => harmonic(r.ctr_lpv, r.ctr),
        F1Formula::LpvAndCtr => harmonic(r.lpv, r.ctr),
    };
    AblationRow {
        variant_id: variant.variant_id.clone(),
        label: variant.label.clone(),
        element: variant.element(),
        lpv_ratio: round3(r.lpv),
        ctr_lpv_ratio: round3(r.ctr_lpv),
        ctr_ratio: round3(r.ctr),
        f1: round3(f1),
    }
}

pub fn degradation_report(
    original: &VariantStats,
    variants: &[VariantStats],
    formula: F1Formula,
) -> Result<AblationReport, CreativeError> {
    let original_row = row_for(original, raw_ratios(original, original)?, formula);
    let rows = variants
        .iter()
        .map(|v| Ok(row_for(v, raw_ratios(original, v)?, formula)))
        .collect::<Result<Vec<_>, CreativeError>>()?;
    let overall = (!rows.is_empty()).then(|| {
        let mean = |f: fn(&AblationRow) -> f64| round3(rows.iter().map(f).sum::<f64>() / rows.len() as f64);
        AblationRow {
            variant_id: "overall".into(),
            label: "Overall".into(),
            element: String::new(),
            lpv_ratio: mean(|r| r.lpv_ratio),
            ctr_lpv_ratio: mean(|r| r.ctr_lpv_ratio),
            ctr_ratio: mean(|r| r.ctr_ratio),
            f1: mean(|r| r.f1),
        }
    });
    Ok(AblationReport {
        f1_formula: formula,
        original: original_row,
        rows,
        overall,
    })
}

/// Writes `layout,lpv,ctr_lpv,ctr,f1` rows followed by `Overall`.
pub fn write_report_csv<W: Write>(writer: W, report: &AblationReport) -> Result<(), CreativeError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| CreativeError::Io(e.to_string());
    wtr.write_record(["layout", "lpv", "ctr_lpv", "ctr", "f1"]).map_err(err)?;
    for row in report.rows.iter().chain(report.overall.iter()) {
        wtr.write_record([
            row.label.clone(),
            format!("{:.3}", row.lpv_ratio),
            format!("{:.3}", row.ctr_lpv_ratio),
            format!("{:.3}", row.ctr_ratio),
            format!("{:.3}", row.f1),
        ])
        .map_err(err)?;
    }
    wtr.flush().map_err(|e| CreativeError::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drop {
    pub variant_id: String,
    pub element: String,
    pub metric: String,
    /// The reported ratio, in thousandths.
    pub ratio_milli: i64,
    /// `1 − ratio`, in thousandths; exact.
    pub drop_milli: i64,
    /// `100·(1 − ratio)` rounded half-up to a whole percent.
    pub drop_pct: i64,
}

impl Drop {
    pub fn drop_fraction(&self) -> f64 {
        self.drop_milli as f64 / 1000.0
    }
}

/// One row per (variant, metric), metrics in column order.
pub fn summarize_drops(report: &AblationReport) -> Vec<Drop> {
    let mut out = Vec::new();
    for row in &report.rows {
        for (metric, ratio) in [
            ("lpv", row.lpv_ratio),
            ("ctr_lpv", row.ctr_lpv_ratio),
            ("ctr", row.ctr_ratio),
            ("f1", row.f1),
        ] {
            let ratio_milli = (ratio * 1000.0).round() as i64;
            let drop_milli = 1000 - ratio_milli;
            out.push(Drop {
                variant_id: row.variant_id.clone(),
                element: row.element.clone(),
                metric: metric.into(),
                ratio_milli,
                drop_milli,
                // drop_milli / 10, half-up
                drop_pct: (drop_milli + 5).div_euclid(10),
            });
        }
    }
    out
}

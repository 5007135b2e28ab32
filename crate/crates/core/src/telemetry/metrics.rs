//! Derived campaign metrics, period bucketing and percentage-change trends.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::rows::RawTelemetryRow;
use super::TelemetryError;

/// Metric names in table order.
pub const METRICS: [&str; 9] = [
    "reach",
    "frequency",
    "results",
    "cpr",
    "spend",
    "cpm",
    "ctr",
    "cr_click_to_view",
    "cr_click_to_result",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Weekly,
    Daily,
    Creative,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Weekly => "weekly",
            Granularity::Daily => "daily",
            Granularity::Creative => "creative",
        })
    }
}

impl FromStr for Granularity {
    type Err = TelemetryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weekly" => Ok(Granularity::Weekly),
            "daily" => Ok(Granularity::Daily),
            "creative" => Ok(Granularity::Creative),
            other => Err(TelemetryError::UnknownGranularity(other.to_string())),
        }
    }
}

/// ISO-week key such as `2023-W41`.
pub fn iso_week_key(date: NaiveDate) -> String {
    let w = date.iso_week();
    format!("{}-W{:02}", w.year(), w.week())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Totals {
    impressions: u64,
    clicks: u64,
    lpv: u64,
    results: u64,
    reach: u64,
    spend: Decimal,
}

impl Totals {
    fn add_row(&mut self, r: &RawTelemetryRow) {
        self.impressions += r.impressions;
        self.clicks += r.clicks;
        self.lpv += r.lpv;
        self.results += r.results;
        self.reach += r.reach;
        self.spend += r.spend;
    }

    fn add(&mut self, o: &MetricRow) {
        self.impressions += o.impressions;
        self.clicks += o.clicks;
        self.lpv += o.lpv;
        self.results += o.results;
        self.reach += o.reach;
        self.spend += o.spend;
    }
}

/// Metrics for one period. Counts are sums over the period's rows; ratios
/// are `None` where their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub period_key: String,
    pub impressions: u64,
    pub clicks: u64,
    pub lpv: u64,
    pub reach: u64,
    pub results: u64,
    pub spend: Decimal,
    pub frequency: Option<f64>,
    pub cpr: Option<f64>,
    pub cpm: Option<f64>,
    pub ctr: Option<f64>,
    pub cr_click_to_view: Option<f64>,
    pub cr_click_to_result: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricRow {
    fn from_totals(period_key: String, t: Totals) -> Self {
        MetricRow {
            period_key,
            impressions: t.impressions,
            clicks: t.clicks,
            lpv: t.lpv,
            reach: t.reach,
            results: t.results,
            spend: t.spend,
            frequency: ratio(t.impressions, t.reach),
            cpr: (t.results > 0).then(|| (t.spend / Decimal::from(t.results)).to_f64()).flatten(),
            cpm: (t.impressions > 0)
                .then(|| (t.spend * Decimal::ONE_THOUSAND / Decimal::from(t.impressions)).to_f64())
                .flatten(),
            ctr: ratio(t.clicks, t.impressions),
            cr_click_to_view: ratio(t.lpv, t.clicks),
            cr_click_to_result: ratio(t.results, t.clicks),
        }
    }

    /// A metric by name: `None` for an unknown name, `Some(None)` when undefined.
    pub fn metric(&self, name: &str) -> Option<Option<f64>> {
        Some(match name {
            "reach" => Some(self.reach as f64),
            "frequency" => self.frequency,
            "results" => Some(self.results as f64),
            "cpr" => self.cpr,
            "spend" => self.spend.to_f64(),
            "cpm" => self.cpm,
            "ctr" => self.ctr,
            "cr_click_to_view" => self.cr_click_to_view,
            "cr_click_to_result" => self.cr_click_to_result,
            _ => return None,
        })
    }
}

/// Sums a period's rows and derives its metrics; never divides by zero.
pub fn derive_metrics(period_key: &str, rows: &[RawTelemetryRow]) -> MetricRow {
    let mut t = Totals::default();
    rows.iter().for_each(|r| t.add_row(r));
    MetricRow::from_totals(period_key.to_string(), t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PctChange {
    pub from: String,
    pub to: String,
    /// Percentage change per metric; `None` when the base is zero or undefined.
    pub values: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub granularity: Granularity,
    pub points: Vec<MetricRow>,
    pub pct_changes: Vec<PctChange>,
}

/// `100·(x[i+1] − x[i]) / x[i]`, `None` where `x[i]` is zero.
pub fn pct_change(series: &[f64]) -> Vec<Option<f64>> {
    series
        .windows(2)
        .map(|w| (w[0] != 0.0).then(|| 100.0 * (w[1] - w[0]) / w[0]))
        .collect()
}

fn changes(points: &[MetricRow]) -> Vec<PctChange> {
    points
        .windows(2)
        .map(|w| PctChange {
            from: w[0].period_key.clone(),
            to: w[1].period_key.clone(),
            values: METRICS
                .iter()
                .map(|&m| {
                    let pair = (w[0].metric(m).flatten(), w[1].metric(m).flatten());
                    let v = match pair {
                        (Some(a), Some(b)) => pct_change(&[a, b])[0],
                        _ => None,
                    };
                    (m.to_string(), v)
                })
                .collect(),
        })
        .collect()
}

fn series_from(granularity: Granularity, buckets: BTreeMap<String, Totals>) -> TrendSeries {
    let points: Vec<MetricRow> = buckets.into_iter().map(|(k, t)| MetricRow::from_totals(k, t)).collect();
    let pct_changes = match granularity {
        Granularity::Creative => Vec::new(),
        _ => changes(&points),
    };
    TrendSeries {
        granularity,
        points,
        pct_changes,
    }
}

/// Buckets rows by ISO week, by date or by creative id (keys sort
/// lexicographically, which is chronological for the first two).
pub fn aggregate(rows: &[RawTelemetryRow], granularity: Granularity) -> Result<TrendSeries, TelemetryError> {
    if rows.is_empty() {
        return Err(TelemetryError::EmptyInput);
    }
    let mut buckets: BTreeMap<String, Totals> = BTreeMap::new();
    for r in rows {
        let key = match granularity {
            Granularity::Weekly => iso_week_key(r.date),
            Granularity::Daily => r.date.format("%Y-%m-%d").to_string(),
            Granularity::Creative => r.creative_id.clone(),
        };
        buckets.entry(key).or_default().add_row(r);
    }
    Ok(series_from(granularity, buckets))
}

/// Re-buckets a daily series into ISO weeks from its per-day sums.
pub fn daily_to_weekly(daily: &TrendSeries) -> Result<TrendSeries, TelemetryError> {
    if daily.granularity != Granularity::Daily {
        return Err(TelemetryError::UnknownGranularity(format!(
            "expected a daily series, got {}",
            daily.granularity
        )));
    }
    let mut buckets: BTreeMap<String, Totals> = BTreeMap::new();
    for p in &daily.points {
        let date = NaiveDate::parse_from_str(&p.period_key, "%Y-%m-%d")
            .map_err(|e| TelemetryError::Parse { line: 0, reason: format!("{}: {e}", p.period_key) })?;
        buckets.entry(iso_week_key(date)).or_default().add(p);
    }
    Ok(series_from(Granularity::Weekly, buckets))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRange {
    pub min: f64,
    pub max: f64,
}

/// Min and max over the defined values of each named metric.
pub fn summarize_ranges(
    series: &TrendSeries,
    metric_names: &[&str],
) -> Result<BTreeMap<String, MetricRange>, TelemetryError> {
    if series.points.is_empty() {
        return Err(TelemetryError::EmptySeries);
    }
    let mut out = BTreeMap::new();
    for &name in metric_names {
        let mut range: Option<MetricRange> = None;
        for p in &series.points {
            let value = p.metric(name).ok_or_else(|| TelemetryError::UnknownMetric(name.to_string()))?;
            if let Some(v) = value {
                let r = range.get_or_insert(MetricRange { min: v, max: v });
                r.min = r.min.min(v);
                r.max = r.max.max(v);
            }
        }
        out.insert(name.to_string(), range.ok_or_else(|| TelemetryError::AllUndefined(name.to_string()))?);
    }
    Ok(out)
}

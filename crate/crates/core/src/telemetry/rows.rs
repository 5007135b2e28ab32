//! Raw campaign telemetry rows and their CSV form.

use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::TelemetryError;

pub const TELEMETRY_HEADER: [&str; 8] =
    ["date", "creative_id", "impressions", "clicks", "lpv", "results", "spend", "reach"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTelemetryRow {
    pub date: NaiveDate,
    pub creative_id: String,
    pub impressions: u64,
    pub clicks: u64,
    pub lpv: u64,
    pub results: u64,
    pub spend: Decimal,
    pub reach: u64,
}

impl RawTelemetryRow {
    pub fn validate(&self) -> Result<(), String> {
        if self.creative_id.trim().is_empty() {
            return Err("empty creative_id".into());
        }
        if self.clicks > self.impressions {
            return Err("clicks exceed impressions".into());
        }
        if self.reach > self.impressions {
            return Err("reach exceeds impressions".into());
        }
        if self.spend.is_sign_negative() && !self.spend.is_zero() {
            return Err("negative spend".into());
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct Record {
    date: String,
    creative_id: String,
    impressions: u64,
    clicks: u64,
    lpv: u64,
    results: u64,
    spend: String,
    reach: u64,
}

/// Parses telemetry CSV; the header must be exactly [`TELEMETRY_HEADER`].
/// Errors carry the 1-based data line number.
pub fn read_telemetry_csv<R: Read>(reader: R) -> Result<Vec<RawTelemetryRow>, TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| TelemetryError::Parse { line: 0, reason: e.to_string() })?;
    if header.iter().ne(TELEMETRY_HEADER) {
        return Err(TelemetryError::Parse {
            line: 0,
            reason: format!("expected header {}", TELEMETRY_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.deserialize::<Record>().enumerate() {
        let line = i + 1;
        let bad = |reason: String| TelemetryError::Parse { line, reason };
        let r = record.map_err(|e| bad(e.to_string()))?;
        let row = RawTelemetryRow {
            date: NaiveDate::parse_from_str(&r.date, "%Y-%m-%d").map_err(|e| bad(format!("date: {e}")))?,
            creative_id: r.creative_id,
            impressions: r.impressions,
            clicks: r.clicks,
            lpv: r.lpv,
            results: r.results,
            spend: Decimal::from_str(&r.spend).map_err(|e| bad(format!("spend: {e}")))?,
            reach: r.reach,
        };
        row.validate().map_err(bad)?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_telemetry_csv<W: Write>(writer: W, rows: &[RawTelemetryRow]) -> Result<(), TelemetryError> {
    let io = |e: csv::Error| TelemetryError::Io(e.to_string());
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(Record {
            date: r.date.format("%Y-%m-%d").to_string(),
            creative_id: r.creative_id.clone(),
            impressions: r.impressions,
            clicks: r.clicks,
            lpv: r.lpv,
            results: r.results,
            spend: r.spend.to_string(),
            reach: r.reach,
        })
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| TelemetryError::Io(e.to_string()))
}

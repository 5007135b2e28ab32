//! Ad record store.
//!
//! Ads arrive as line-delimited JSON exports from an ad library. Each
//! accepted record is normalized, keyed by a content hash and appended to
//! `ads.jsonl` inside the store directory. The id index is rebuilt from the
//! log on open.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::util::{normalize_whitespace, short_hash};

const LOG_FILE: &str = "ads.jsonl";
const EXPORT_KEYS: [&str; 7] = [
    "brand",
    "body_text",
    "headline",
    "media_refs",
    "first_seen",
    "last_seen",
    "platform",
];

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store record at {path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("ad not found: {0}")]
    NotFound(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Facebook,
    Instagram,
    Other,
}

impl Platform {
    fn parse(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "facebook" => Platform::Facebook,
            "instagram" => Platform::Instagram,
            _ => Platform::Other,
        }
    }
}

/// One normalized advertisement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdCreative {
    pub id: String,
    pub brand: String,
    pub body_text: String,
    pub headline: Option<String>,
    pub media_refs: Vec<String>,
    pub first_seen: NaiveDate,
    pub last_seen: NaiveDate,
    pub platform: Platform,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl AdCreative {
    /// Content id over brand, whitespace-normalized body and sorted media refs.
    pub fn content_id(brand: &str, body_text: &str, media_refs: &[String]) -> String {
        let mut media: Vec<&str> = media_refs.iter().map(String::as_str).collect();
        media.sort_unstable();
        let key = format!(
            "{}\u{1f}{}\u{1f}{}",
            brand,
            normalize_whitespace(body_text),
            media.join("\u{1e}")
        );
        format!("ad-{}", short_hash(key.as_bytes(), 16))
    }

    /// Body and headline, lowercased, for keyword matching.
    fn searchable_text(&self) -> String {
        let mut text = self.body_text.to_lowercase();
        if let Some(headline) = &self.headline {
            text.push('\n');
            text.push_str(&headline.to_lowercase());
        }
        text
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub read: usize,
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: usize,
    pub reject_reasons: Vec<RejectReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectReason {
    pub line_no: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

/// Conjunctive filter over the store. Absent clauses match everything.
///
/// A date range matches ads whose `[first_seen, last_seen]` window overlaps it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(default)]
    pub brands: Option<Vec<String>>,
    #[serde(default)]
    pub date_range: Option<DateRange>,
    #[serde(default)]
    pub keyword_any: Option<Vec<String>>,
    #[serde(default)]
    pub keyword_all: Option<Vec<String>>,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), StoreError> {
        if let Some(range) = &self.date_range {
            if range.from > range.to {
                return Err(StoreError::InvalidFilter(format!(
                    "date range from {} is after to {}",
                    range.from, range.to
                )));
            }
        }
        Ok(())
    }

    pub fn matches(&self, ad: &AdCreative) -> bool {
        if let Some(brands) = &self.brands {
            if !brands.iter().any(|b| b == &ad.brand) {
                return false;
            }
        }
        if let Some(range) = &self.date_range {
            if ad.last_seen < range.from || ad.first_seen > range.to {
                return false;
            }
        }
        if self.keyword_any.is_none() && self.keyword_all.is_none() {
            return true;
        }
        let text = ad.searchable_text();
        if let Some(any) = &self.keyword_any {
            if !any.iter().any(|k| text.contains(&k.to_lowercase())) {
                return false;
            }
        }
        if let Some(all) = &self.keyword_all {
            if !all.iter().all(|k| text.contains(&k.to_lowercase())) {
                return false;
            }
        }
        true
    }
}

/// Append-only ad log with an in-memory id index.
#[derive(Debug)]
pub struct AdStore {
    log_path: PathBuf,
    records: BTreeMap<String, AdCreative>,
}

impl AdStore {
    /// Opens (creating if needed) the store rooted at `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        let log_path = dir.join(LOG_FILE);
        let mut records = BTreeMap::new();
        if log_path.exists() {
            let file = File::open(&log_path).map_err(|e| StoreError::io(&log_path, e))?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| StoreError::io(&log_path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let ad: AdCreative =
                    serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                        path: log_path.clone(),
                        line: idx + 1,
                        reason: e.to_string(),
                    })?;
                records.insert(ad.id.clone(), ad);
            }
        }
        Ok(AdStore { log_path, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All records ordered by id.
    pub fn all(&self) -> impl Iterator<Item = &AdCreative> {
        self.records.values()
    }

    pub fn ingest_file(
        &mut self,
        source: impl AsRef<Path>,
        brand_hint: Option<&str>,
    ) -> Result<IngestReport, StoreError> {
        let source = source.as_ref();
        let file = File::open(source).map_err(|e| StoreError::io(source, e))?;
        self.ingest_reader(file, brand_hint)
    }

    /// Ingests line-delimited export records. Malformed lines are rejected
    /// individually; only I/O failures abort. Blank lines are not counted.
    pub fn ingest_reader(
        &mut self,
        reader: impl Read,
        brand_hint: Option<&str>,
    ) -> Result<IngestReport, StoreError> {
        let mut report = IngestReport::default();
        let mut fresh: Vec<AdCreative> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();

        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| StoreError::io(&self.log_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            report.read += 1;
            match parse_export_line(&line, brand_hint) {
                Ok(ad) => {
                    if self.records.contains_key(&ad.id) || !seen.insert(ad.id.clone()) {
                        report.duplicates += 1;
                    } else {
                        report.accepted += 1;
                        fresh.push(ad);
                    }
                }
                Err(reason) => {
                    report.rejected += 1;
                    report.reject_reasons.push(RejectReason {
                        line_no: idx + 1,
                        reason,
                    });
                }
            }
        }

        if !fresh.is_empty() {
            self.append(&fresh)?;
            for ad in fresh {
                self.records.insert(ad.id.clone(), ad);
            }
        }
        Ok(report)
    }

    fn append(&self, ads: &[AdCreative]) -> Result<(), StoreError> {
        let path = &self.log_path;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| StoreError::io(path, e))?;
        let mut buf = String::new();
        for ad in ads {
            buf.push_str(&serde_json::to_string(ad).expect("ad records always serialize"));
            buf.push('\n');
        }
        file.write_all(buf.as_bytes())
            .and_then(|_| file.sync_all())
            .map_err(|e| StoreError::io(path, e))
    }

    /// Records satisfying every present clause, sorted by `(brand, id)`.
    pub fn filter_ads(&self, spec: &FilterSpec) -> Result<Vec<AdCreative>, StoreError> {
        spec.validate()?;
        let mut out: Vec<AdCreative> = self
            .records
            .values()
            .filter(|ad| spec.matches(ad))
            .cloned()
            .collect();
        out.sort_by(|a, b| (&a.brand, &a.id).cmp(&(&b.brand, &b.id)));
        Ok(out)
    }

    pub fn get_ad(&self, id: &str) -> Result<&AdCreative, StoreError> {
        self.records
            .get(id)
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }
}

fn parse_export_line(line: &str, brand_hint: Option<&str>) -> Result<AdCreative, String> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    let Value::Object(obj) = value else {
        return Err("malformed record: expected an object".into());
    };
    for key in obj.keys() {
        if !EXPORT_KEYS.contains(&key.as_str()) {
            log::warn!("ignoring unknown key {key:?} in ad export");
        }
    }

    let brand = match optional_string(&obj, "brand")? {
        Some(b) if !b.trim().is_empty() => b.trim().to_string(),
        _ => match brand_hint {
            Some(hint) if !hint.trim().is_empty() => hint.trim().to_string(),
            _ => return Err("missing brand".into()),
        },
    };
    let body_text = optional_string(&obj, "body_text")?
        .map(|b| normalize_whitespace(&b))
        .filter(|b| !b.is_empty())
        .ok_or("missing body_text")?;
    let headline = optional_string(&obj, "headline")?
        .map(|h| normalize_whitespace(&h))
        .filter(|h| !h.is_empty());
    let media_refs = match obj.get("media_refs") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .ok_or("media_refs must be a list of strings")?,
        Some(_) => return Err("media_refs must be a list of strings".into()),
    };
    let first_seen = required_date(&obj, "first_seen")?;
    let last_seen = required_date(&obj, "last_seen")?;
    if first_seen > last_seen {
        return Err("first_seen after last_seen".into());
    }
    let platform = optional_string(&obj, "platform")?
        .map(|p| Platform::parse(&p))
        .unwrap_or(Platform::Other);

    Ok(AdCreative {
        id: AdCreative::content_id(&brand, &body_text, &media_refs),
        brand,
        body_text,
        headline,
        media_refs,
        first_seen,
        last_seen,
        platform,
        tags: Vec::new(),
    })
}

fn optional_string(obj: &Map<String, Value>, key: &str) -> Result<Option<String>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(format!("{key} must be a string")),
    }
}

fn required_date(obj: &Map<String, Value>, key: &str) -> Result<NaiveDate, String> {
    let raw = optional_string(obj, key)?.ok_or_else(|| format!("missing {key}"))?;
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").map_err(|_| format!("invalid {key}: {raw}"))
}

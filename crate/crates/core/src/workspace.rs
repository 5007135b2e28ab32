//! A store directory and the pipeline steps that read and write it.
//!
//! Layout under the root:
//!
//! | file | contents |
//! |------|----------|
//! | `ads.jsonl` | ad log |
//! | `pillars.jsonl`, `pillar_failures.jsonl` | extracted pillars |
//! | `embeddings.bin` | embedding cache |
//! | `personas.json`, `challenges.json` | clustering runs |
//! | `offerings.json` | offering catalogue |
//! | `briefs.jsonl` | brief log |
//! | `telemetry.csv` | campaign telemetry |
//! | `annotations.jsonl` | accept/dismiss decisions on recommendations |
//! | `heatmaps/<creative_id>.json` | attention heatmaps |
//!
//! The CLI and the HTTP service both go through this type, so they produce
//! identical results for identical inputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ads::{AdCreative, AdStore, FilterSpec, IngestReport, StoreError};
use crate::config::{Config, ConfigError};
use crate::creative::{
    degradation_report, parse_heatmap, rank_regions, read_variant_stats, summarize_drops, AblationReport,
    AttentionHeatmap, CreativeError, Drop, F1Formula, SalientRegion, VariantStats,
};
use crate::gateway::{Gateway, GatewayError};
use crate::mining::{
    coverage_matrix, default_k_max, detect_gaps, embed_with_cache, synthesize_all, xmeans, Archetype, Clustering,
    CoverageMatrix, EmbedError, Embedder, EmbeddingCache, Gap, MiningError, PillarField,
};
use crate::narrative::{
    distill_insight, parse_offerings, propose_briefs, BriefEdit, BriefStore, CampaignBrief, Clock, NarrativeError,
    Offering,
};
use crate::pillars::{batch_extract, ContentPillars, PillarFailure, PillarTable};
use crate::telemetry::{
    aggregate, build_analysis_prompt, encode_creative_file, parse_recommendations, read_telemetry_csv,
    summarize_ranges, write_telemetry_csv, AnalysisPrompt, Granularity, MetricRange, PromptTexts,
    RawTelemetryRow, RecommendedAction, TelemetryError, TrendSeries,
};

const PILLARS_FILE: &str = "pillars.jsonl";
const PILLAR_FAILURES_FILE: &str = "pillar_failures.jsonl";
const EMBEDDINGS_FILE: &str = "embeddings.bin";
const OFFERINGS_FILE: &str = "offerings.json";
const BRIEFS_FILE: &str = "briefs.jsonl";
const TELEMETRY_FILE: &str = "telemetry.csv";
const HEATMAP_DIR: &str = "heatmaps";
const ANNOTATIONS_FILE: &str = "annotations.jsonl";

/// How a failure should be reported to a caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The request itself is wrong or its precondition is unmet.
    Invalid,
    NotFound,
    /// The LLM provider could not be reached.
    Unavailable,
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error(transparent)]
    Narrative(#[from] NarrativeError),
    #[error(transparent)]
    Creative(#[from] CreativeError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("{kind} not found: {id}")]
    NotFound { kind: &'static str, id: String },
    #[error("no pillars; run pillar extraction first")]
    NoPillars,
    #[error("no clusterings; run personas and challenges first")]
    NoClusterings,
    #[error("no telemetry")]
    NoTelemetry,
    #[error("no offerings; import offerings first")]
    NoOfferings,
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("io error on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

fn gateway_class(e: &GatewayError) -> ErrorClass {
    match e {
        GatewayError::ProviderUnavailable(_) | GatewayError::Timeout(_) => ErrorClass::Unavailable,
        GatewayError::MissingBinding(_) => ErrorClass::Invalid,
        _ => ErrorClass::Internal,
    }
}

impl WorkspaceError {
    pub fn class(&self) -> ErrorClass {
        use WorkspaceError as W;
        match self {
            W::NotFound { .. } | W::Store(StoreError::NotFound(_)) => ErrorClass::NotFound,
            W::Store(StoreError::InvalidFilter(_)) => ErrorClass::Invalid,
            W::Gateway(g) | W::Narrative(NarrativeError::Gateway(g)) => gateway_class(g),
            W::Mining(MiningError::Embed(EmbedError::ProviderUnavailable(_))) => ErrorClass::Unavailable,
            W::Narrative(NarrativeError::UnknownArchetype { .. }) => ErrorClass::NotFound,
            W::Narrative(NarrativeError::ExtractionFailed { .. }) => ErrorClass::Internal,
            W::Narrative(NarrativeError::Store(_)) => ErrorClass::Internal,
            W::Mining(_) | W::Narrative(_) | W::Creative(_) | W::Telemetry(_) => ErrorClass::Invalid,
            W::NoPillars | W::NoClusterings | W::NoTelemetry | W::NoOfferings | W::Invalid(_) => ErrorClass::Invalid,
            W::Store(_) | W::Config(_) | W::Io { .. } => ErrorClass::Internal,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> WorkspaceError + '_ {
    move |e| WorkspaceError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Writes via a sibling temp file and rename, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), WorkspaceError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PillarRun {
    pub requested: usize,
    pub extracted: usize,
    pub failed: usize,
    pub failures: Vec<PillarFailure>,
    /// Rows in the pillar table after merging.
    pub total_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub seed: u64,
    pub k_min: usize,
    /// `None` picks `min(20, floor(sqrt n))`.
    pub k_max: Option<usize>,
    /// Restricts clustering to pillars of matching ads.
    #[serde(default)]
    pub filter: FilterSpec,
}

impl ClusterParams {
    pub fn new(seed: u64) -> Self {
        ClusterParams {
            seed,
            k_min: 1,
            k_max: None,
            filter: FilterSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Dismiss,
}

/// A strategist's verdict on one recommended action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub action: RecommendedAction,
    pub decision: Decision,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub recorded_at: Option<chrono::DateTime<chrono::Utc>>,
}

/// A saved persona or challenge clustering with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeRun {
    pub field: PillarField,
    pub params: ClusterParams,
    pub k_max: usize,
    pub embedder_id: String,
    pub clustering: Clustering,
    pub archetypes: Vec<Archetype>,
}

/// An [`ArchetypeRun`] without centroids, for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub field: PillarField,
    pub k: usize,
    /// Cluster sizes by cluster index.
    pub sizes: Vec<usize>,
    /// Absent when the fit is degenerate.
    pub bic: Option<f64>,
    pub seed: u64,
    pub k_min: usize,
    pub k_max: usize,
    pub iterations: usize,
    pub embedder_id: String,
    pub archetypes: Vec<Archetype>,
}

impl ArchetypeRun {
    pub fn summary(&self) -> RunSummary {
        let c = &self.clustering;
        let mut sizes = vec![0; c.k];
        for &i in c.assignments.values() {
            sizes[i] += 1;
        }
        RunSummary {
            field: self.field,
            k: c.k,
            sizes,
            bic: (!c.bic_degenerate && c.bic.is_finite()).then_some(c.bic),
            seed: c.seed,
            k_min: self.params.k_min,
            k_max: self.k_max,
            iterations: c.iterations,
            embedder_id: self.embedder_id.clone(),
            archetypes: self.archetypes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub matrix: CoverageMatrix,
    pub gaps: Vec<Gap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeParams {
    pub granularities: Vec<Granularity>,
    pub creatives: Vec<PathBuf>,
    pub texts: PromptTexts,
    /// Send the prompt to the provider and parse its recommendations.
    pub recommend: bool,
}

impl Default for AnalyzeParams {
    fn default() -> Self {
        AnalyzeParams {
            granularities: vec![Granularity::Weekly],
            creatives: Vec::new(),
            texts: PromptTexts::default(),
            recommend: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryAnalysis {
    pub prompt: AnalysisPrompt,
    pub rendered: String,
    /// Ranges of the headline metrics over the first requested granularity.
    pub ranges: BTreeMap<String, MetricRange>,
    pub reply: Option<String>,
    pub actions: Option<Vec<RecommendedAction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub report: AblationReport,
    pub drops: Vec<Drop>,
}

/// Splits variant stats into the original and the rest: the row whose id
/// or label is `original` (case-insensitive), else the first row.
pub fn split_original(mut stats: Vec<VariantStats>) -> Result<(VariantStats, Vec<VariantStats>), WorkspaceError> {
    if stats.is_empty() {
        return Err(WorkspaceError::Invalid("no variant rows".into()));
    }
    let idx = stats
        .iter()
        .position(|s| s.variant_id.eq_ignore_ascii_case("original") || s.label.eq_ignore_ascii_case("original"))
        .unwrap_or(0);
    let original = stats.remove(idx);
    Ok((original, stats))
}

/// Degradation report plus drop summary for one original and its variants.
pub fn ablation(original: &VariantStats, variants: &[VariantStats], formula: F1Formula) -> Result<AblationOutcome, WorkspaceError> {
    let report = degradation_report(original, variants, formula)?;
    let drops = summarize_drops(&report);
    Ok(AblationOutcome { report, drops })
}

pub struct Workspace {
    root: PathBuf,
    gateway: Arc<Gateway>,
    embedder: Arc<dyn Embedder>,
    clock: Clock,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace")
            .field("root", &self.root)
            .field("gateway", &self.gateway)
            .field("embedder", &self.embedder.id())
            .finish()
    }
}

impl Workspace {
    /// Opens the store named by `config`, creating the directory if needed.
    /// Timestamps come from `SOURCE_DATE_EPOCH` when it is set.
    pub fn open(config: &Config) -> Result<Self, WorkspaceError> {
        Self::with_parts(
            &config.store_path,
            Arc::new(config.build_gateway()?),
            config.build_embedder(),
            Clock::from_env(),
        )
    }

    pub fn with_parts(
        root: impl AsRef<Path>,
        gateway: Arc<Gateway>,
        embedder: Arc<dyn Embedder>,
        clock: Clock,
    ) -> Result<Self, WorkspaceError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Workspace {
            root,
            gateway,
            embedder,
            clock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// True unless the provider is the offline mock.
    pub fn provider_is_live(&self) -> bool {
        self.gateway.provider_id() != "mock"
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    // ---- ads ----

    pub fn ingest_reader(&self, reader: impl Read, brand_hint: Option<&str>) -> Result<IngestReport, WorkspaceError> {
        Ok(AdStore::open(&self.root)?.ingest_reader(reader, brand_hint)?)
    }

    pub fn ingest_file(&self, path: &Path, brand_hint: Option<&str>) -> Result<IngestReport, WorkspaceError> {
        Ok(AdStore::open(&self.root)?.ingest_file(path, brand_hint)?)
    }

    pub fn ads(&self, filter: &FilterSpec) -> Result<Vec<AdCreative>, WorkspaceError> {
        Ok(AdStore::open(&self.root)?.filter_ads(filter)?)
    }

    // ---- pillars ----

    pub fn pillar_table(&self) -> Result<PillarTable, WorkspaceError> {
        let read = |name: &str| -> Result<Option<fs::File>, WorkspaceError> {
            let path = self.path(name);
            if path.exists() {
                Ok(Some(fs::File::open(&path).map_err(io_err(&path))?))
            } else {
                Ok(None)
            }
        };
        let mut table = PillarTable::default();
        if let Some(f) = read(PILLARS_FILE)? {
            table.rows = PillarTable::read_jsonl(BufReader::new(f)).map_err(io_err(&self.path(PILLARS_FILE)))?;
        }
        if let Some(mut f) = read(PILLAR_FAILURES_FILE)? {
            let mut text = String::new();
            f.read_to_string(&mut text).map_err(io_err(&self.path(PILLAR_FAILURES_FILE)))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                table.failures.push(serde_json::from_str(line).map_err(|e| WorkspaceError::Io {
                    path: self.path(PILLAR_FAILURES_FILE),
                    reason: e.to_string(),
                })?);
            }
        }
        Ok(table)
    }

    fn save_pillar_table(&self, table: &PillarTable) -> Result<(), WorkspaceError> {
        let mut rows = Vec::new();
        table.write_jsonl(&mut rows).map_err(io_err(&self.path(PILLARS_FILE)))?;
        write_atomic(&self.path(PILLARS_FILE), &rows)?;
        let failures: String = table
            .failures
            .iter()
            .map(|f| serde_json::to_string(f).expect("failures serialize") + "\n")
            .collect();
        write_atomic(&self.path(PILLAR_FAILURES_FILE), failures.as_bytes())
    }

    /// Extracts pillars for every ad matching `filter` and merges them into
    /// the stored table.
    pub fn extract_pillars(&self, filter: &FilterSpec) -> Result<PillarRun, WorkspaceError> {
        let ads = self.ads(filter)?;
        let fresh = batch_extract(&self.gateway, &ads);
        let run = PillarRun {
            requested: ads.len(),
            extracted: fresh.rows.len(),
            failed: fresh.failures.len(),
            failures: fresh.failures.clone(),
            total_rows: 0,
        };
        let mut table = self.pillar_table()?;
        table.merge(fresh);
        self.save_pillar_table(&table)?;
        Ok(PillarRun {
            total_rows: table.rows.len(),
            ..run
        })
    }

    pub fn pillars(&self) -> Result<Vec<ContentPillars>, WorkspaceError> {
        Ok(self.pillar_table()?.rows)
    }

    // ---- personas and challenges ----

    fn run_file(field: PillarField) -> &'static str {
        match field {
            PillarField::Audience => "personas.json",
            PillarField::Insight => "challenges.json",
        }
    }

    /// Embeds the chosen pillar field, runs X-means, labels each cluster and
    /// saves the run (replacing any earlier one for this field).
    pub fn cluster(&self, field: PillarField, params: ClusterParams) -> Result<ArchetypeRun, WorkspaceError> {
        let mut rows = self.pillars()?;
        if params.filter != FilterSpec::default() {
            let keep: std::collections::HashSet<String> =
                self.ads(&params.filter)?.into_iter().map(|a| a.id).collect();
            rows.retain(|p| keep.contains(&p.ad_id));
        }
        if rows.is_empty() {
            return Err(WorkspaceError::NoPillars);
        }
        let texts: Vec<(String, String)> =
            rows.iter().map(|p| (p.ad_id.clone(), field.text(p).to_string())).collect();
        let mut cache = EmbeddingCache::open(self.path(EMBEDDINGS_FILE)).map_err(MiningError::from)?;
        let vectors = embed_with_cache(self.embedder.as_ref(), Some(&mut cache), &texts).map_err(MiningError::from)?;
        let k_max = params.k_max.unwrap_or_else(|| default_k_max(vectors.len())).max(params.k_min);
        let clustering = xmeans(&vectors, params.k_min, k_max, params.seed).map_err(MiningError::from)?;
        let by_id: BTreeMap<String, Vec<f64>> = vectors.into_iter().map(|v| (v.ad_id, v.values)).collect();
        let archetypes = synthesize_all(&self.gateway, field, &clustering, &rows, &by_id)?;
        let run = ArchetypeRun {
            field,
            params: params.clone(),
            k_max,
            embedder_id: self.embedder.id().to_string(),
            clustering,
            archetypes,
        };
        let json = serde_json::to_vec_pretty(&run).expect("runs serialize");
        write_atomic(&self.path(Self::run_file(field)), &json)?;
        Ok(run)
    }

    pub fn archetype_run(&self, field: PillarField) -> Result<Option<ArchetypeRun>, WorkspaceError> {
        let path = self.path(Self::run_file(field));
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map(Some).map_err(|e| WorkspaceError::Io {
            path,
            reason: e.to_string(),
        })
    }

    fn both_runs(&self) -> Result<(ArchetypeRun, ArchetypeRun), WorkspaceError> {
        match (self.archetype_run(PillarField::Audience)?, self.archetype_run(PillarField::Insight)?) {
            (Some(p), Some(c)) => Ok((p, c)),
            _ => Err(WorkspaceError::NoClusterings),
        }
    }

    /// Coverage matrix and the `top_n` least-covered cells (all cells when `None`).
    pub fn gaps(&self, top_n: Option<usize>) -> Result<GapReport, WorkspaceError> {
        let (personas, challenges) = self.both_runs()?;
        let matrix = coverage_matrix(&personas.clustering, &challenges.clustering)?;
        let n = top_n.unwrap_or(matrix.personas.len() * matrix.challenges.len());
        let gaps = detect_gaps(&matrix, n);
        Ok(GapReport { matrix, gaps })
    }

    // ---- offerings and briefs ----

    /// Replaces the offering catalogue with `text` (JSON array or JSONL).
    pub fn import_offerings(&self, text: &str) -> Result<Vec<Offering>, WorkspaceError> {
        let offerings = parse_offerings(text)?;
        let json = serde_json::to_vec_pretty(&offerings).expect("offerings serialize");
        write_atomic(&self.path(OFFERINGS_FILE), &json)?;
        Ok(offerings)
    }

    pub fn offerings(&self) -> Result<Vec<Offering>, WorkspaceError> {
        let path = self.path(OFFERINGS_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(parse_offerings(&text)?)
    }

    fn brief_store(&self) -> Result<BriefStore, WorkspaceError> {
        Ok(BriefStore::open(self.path(BRIEFS_FILE), self.clock)?)
    }

    pub fn create_brief(&self, persona_id: &str, challenge_id: &str, offering_id: &str) -> Result<CampaignBrief, WorkspaceError> {
        let (personas, challenges) = self.both_runs()?;
        let find = |run: &ArchetypeRun, kind: &'static str, id: &str| {
            run.archetypes
                .iter()
                .find(|a| a.id == id)
                .cloned()
                .ok_or_else(|| WorkspaceError::NotFound { kind, id: id.to_string() })
        };
        let persona = find(&personas, "persona", persona_id)?;
        let challenge = find(&challenges, "challenge", challenge_id)?;
        let offering = self
            .offerings()?
            .into_iter()
            .find(|o| o.offering_id == offering_id)
            .ok_or_else(|| WorkspaceError::NotFound {
                kind: "offering",
                id: offering_id.to_string(),
            })?;
        let draft = crate::narrative::generate_brief(&self.gateway, &persona, &challenge, &offering)?;
        Ok(self.brief_store()?.persist(draft)?)
    }

    /// Most frequent brand among the clustered ads; ties go to the
    /// alphabetically first.
    fn corpus_brand(&self) -> Result<Option<String>, WorkspaceError> {
        let store = AdStore::open(&self.root)?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for p in self.pillars()? {
            if let Ok(ad) = store.get_ad(&p.ad_id) {
                *counts.entry(ad.brand.as_str()).or_default() += 1;
            }
        }
        let best = counts.iter().fold(None::<(&str, usize)>, |best, (&b, &n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((b, n)),
        });
        Ok(best.map(|(b, _)| b.to_string()))
    }

    /// Generates and stores briefs for the `top_n` gaps.
    pub fn propose(&self, top_n: usize, fan_out: usize, brand: Option<&str>) -> Result<Vec<CampaignBrief>, WorkspaceError> {
        let (personas, challenges) = self.both_runs()?;
        let matrix = coverage_matrix(&personas.clustering, &challenges.clustering)?;
        let offerings = self.offerings()?;
        if offerings.is_empty() && top_n > 0 {
            return Err(WorkspaceError::NoOfferings);
        }
        let brand = match brand {
            Some(b) => Some(b.to_string()),
            None => self.corpus_brand()?,
        };
        let drafts = propose_briefs(
            &self.gateway,
            &matrix,
            &personas.archetypes,
            &challenges.archetypes,
            &offerings,
            brand.as_deref(),
            top_n,
            fan_out,
        )?;
        let mut store = self.brief_store()?;
        drafts
            .into_iter()
            .map(|d| store.persist(d).map_err(WorkspaceError::from))
            .collect()
    }

    pub fn briefs(&self) -> Result<Vec<CampaignBrief>, WorkspaceError> {
        Ok(self.brief_store()?.list().to_vec())
    }

    pub fn brief(&self, brief_id: &str) -> Result<CampaignBrief, WorkspaceError> {
        self.brief_store()?
            .get(brief_id)
            .cloned()
            .ok_or_else(|| WorkspaceError::NotFound {
                kind: "brief",
                id: brief_id.to_string(),
            })
    }

    pub fn revise_brief(&self, brief_id: &str, edit: BriefEdit) -> Result<CampaignBrief, WorkspaceError> {
        self.brief_store()?
            .revise(brief_id, edit)?
            .ok_or_else(|| WorkspaceError::NotFound {
                kind: "brief",
                id: brief_id.to_string(),
            })
    }

    /// A fresh insight for an edited story; the brief itself is unchanged.
    pub fn redistill(&self, story: &str) -> Result<String, WorkspaceError> {
        Ok(distill_insight(&self.gateway, story)?)
    }

    // ---- telemetry ----

    pub fn trends(&self, granularity: Granularity) -> Result<TrendSeries, WorkspaceError> {
        let rows = self.telemetry_rows()?;
        if rows.is_empty() {
            return Err(WorkspaceError::NoTelemetry);
        }
        Ok(aggregate(&rows, granularity)?)
    }

    pub fn annotate(&self, mut annotation: Annotation) -> Result<Annotation, WorkspaceError> {
        if annotation.action.description.trim().is_empty() {
            return Err(WorkspaceError::Invalid("annotated action has no description".into()));
        }
        annotation.recorded_at.get_or_insert_with(|| self.clock.now());
        let path = self.path(ANNOTATIONS_FILE);
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let line = serde_json::to_string(&annotation).expect("annotations serialize");
        writeln!(file, "{line}").map_err(io_err(&path))?;
        Ok(annotation)
    }

    pub fn annotations(&self) -> Result<Vec<Annotation>, WorkspaceError> {
        let path = self.path(ANNOTATIONS_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| WorkspaceError::Io {
                    path: path.clone(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    pub fn telemetry_rows(&self) -> Result<Vec<RawTelemetryRow>, WorkspaceError> {
        let path = self.path(TELEMETRY_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let file = fs::File::open(&path).map_err(io_err(&path))?;
        Ok(read_telemetry_csv(file)?)
    }

    /// Validates and appends telemetry rows; returns how many were added.
    pub fn import_telemetry(&self, reader: impl Read) -> Result<usize, WorkspaceError> {
        let fresh = read_telemetry_csv(reader)?;
        let mut rows = self.telemetry_rows()?;
        let added = fresh.len();
        rows.extend(fresh);
        let mut buf = Vec::new();
        write_telemetry_csv(&mut buf, &rows)?;
        write_atomic(&self.path(TELEMETRY_FILE), &buf)?;
        Ok(added)
    }

    pub fn analyze(&self, params: &AnalyzeParams) -> Result<TelemetryAnalysis, WorkspaceError> {
        let rows = self.telemetry_rows()?;
        if rows.is_empty() {
            return Err(WorkspaceError::NoTelemetry);
        }
        if params.granularities.is_empty() {
            return Err(WorkspaceError::Invalid("no granularity requested".into()));
        }
        let series = params
            .granularities
            .iter()
            .map(|&g| aggregate(&rows, g))
            .collect::<Result<Vec<_>, _>>()?;
        let creatives = params
            .creatives
            .iter()
            .map(|p| encode_creative_file(p))
            .collect::<Result<Vec<_>, _>>()?;
        let prompt = build_analysis_prompt(&series, creatives, &params.texts)?;
        let mut ranges = BTreeMap::new();
        for metric in ["cpr", "spend", "ctr", "cpm"] {
            match summarize_ranges(&series[0], &[metric]) {
                Ok(r) => ranges.extend(r),
                Err(TelemetryError::AllUndefined(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let (reply, actions) = if params.recommend {
            let result = self.gateway.complete_structured(&prompt.completion_request())?;
            let actions = match parse_recommendations(&result.raw_text) {
                Ok(a) => a,
                Err(TelemetryError::NoActionsFound) => Vec::new(),
                Err(e) => return Err(e.into()),
            };
            (Some(result.raw_text), Some(actions))
        } else {
            (None, None)
        };
        Ok(TelemetryAnalysis {
            rendered: prompt.render(),
            prompt,
            ranges,
            reply,
            actions,
        })
    }

    // ---- creatives ----

    fn heatmap_path(&self, creative_id: &str) -> Result<PathBuf, WorkspaceError> {
        let ok = !creative_id.is_empty()
            && creative_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            && !creative_id.starts_with('.');
        if !ok {
            return Err(WorkspaceError::Invalid(format!("bad creative id {creative_id:?}")));
        }
        Ok(self.root.join(HEATMAP_DIR).join(format!("{creative_id}.json")))
    }

    /// Validates, normalizes and stores a heatmap under its creative id.
    pub fn put_heatmap(&self, json: &str) -> Result<AttentionHeatmap, WorkspaceError> {
        let heatmap = parse_heatmap(json)?;
        let path = self.heatmap_path(&heatmap.creative_id)?;
        let dir = self.root.join(HEATMAP_DIR);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomic(&path, &serde_json::to_vec(&heatmap).expect("heatmaps serialize"))?;
        Ok(heatmap)
    }

    pub fn heatmap(&self, creative_id: &str) -> Result<AttentionHeatmap, WorkspaceError> {
        let path = self.heatmap_path(creative_id)?;
        if !path.exists() {
            return Err(WorkspaceError::NotFound {
                kind: "heatmap",
                id: creative_id.to_string(),
            });
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(parse_heatmap(&text)?)
    }

    pub fn regions(&self, creative_id: &str, threshold: f64) -> Result<Vec<SalientRegion>, WorkspaceError> {
        Ok(rank_regions(&self.heatmap(creative_id)?, threshold)?)
    }

    /// Ablation report from variant CSV text that includes the original row.
    pub fn ablation_from_csv(&self, csv_text: &str) -> Result<AblationOutcome, WorkspaceError> {
        let (original, variants) = split_original(read_variant_stats(csv_text.as_bytes())?)?;
        ablation(&original, &variants, F1Formula::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockProvider;
    use crate::mining::OfflineEmbedder;

    fn workspace(dir: &Path) -> Workspace {
        Workspace::with_parts(
            dir,
            Arc::new(Gateway::new(Arc::new(MockProvider::new()))),
            Arc::new(OfflineEmbedder::default()),
            Clock::Fixed(chrono::DateTime::from_timestamp(1_700_000_000, 0).unwrap()),
        )
        .unwrap()
    }

    fn export_line(brand: &str, body: &str) -> String {
        serde_json::json!({
            "brand": brand,
            "body_text": body,
            "first_seen": "2023-10-01",
            "last_seen": "2023-10-20",
            "platform": "facebook",
        })
        .to_string()
    }

    #[test]
    fn empty_store_preconditions() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        assert!(matches!(ws.gaps(None), Err(WorkspaceError::NoClusterings)));
        assert!(matches!(ws.analyze(&AnalyzeParams::default()), Err(WorkspaceError::NoTelemetry)));
        assert!(matches!(ws.cluster(PillarField::Audience, ClusterParams::new(1)), Err(WorkspaceError::NoPillars)));
        assert_eq!(ws.gaps(None).unwrap_err().class(), ErrorClass::Invalid);
        assert_eq!(ws.brief("brief-9").unwrap_err().class(), ErrorClass::NotFound);
    }

    #[test]
    fn small_pipeline_runs_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        let bodies = [
            "Ride to every meeting on one company account",
            "Business rides billed monthly for your whole team",
            "Corporate travel made simple for finance teams",
            "Fresh groceries delivered to your door in an hour",
            "Weekly meal kits for busy families",
            "Order dinner tonight and skip the queue",
        ];
        let text: String = bodies.iter().map(|b| export_line("Gojek", b) + "\n").collect();
        assert_eq!(ws.ingest_reader(text.as_bytes(), None).unwrap().accepted, 6);
        let run = ws.extract_pillars(&FilterSpec::default()).unwrap();
        assert_eq!((run.extracted, run.total_rows), (6, 6));
        let personas = ws.cluster(PillarField::Audience, ClusterParams::new(3)).unwrap();
        let challenges = ws.cluster(PillarField::Insight, ClusterParams::new(3)).unwrap();
        assert_eq!(personas.archetypes.len(), personas.clustering.k);
        let summary = personas.summary();
        assert_eq!(summary.sizes.iter().sum::<usize>(), 6);
        assert_eq!(summary.archetypes.iter().map(|a| a.size).collect::<Vec<_>>(), summary.sizes);
        assert_eq!(ws.archetype_run(PillarField::Insight).unwrap().unwrap(), challenges);
        let gaps = ws.gaps(Some(1)).unwrap();
        assert_eq!(gaps.matrix.total(), 6);

        assert!(matches!(ws.propose(1, 1, None), Err(WorkspaceError::NoOfferings)));
        ws.import_offerings(r#"[{"offering_id":"o1","name":"Corporate rides","brand":"Gojek"}]"#).unwrap();
        let briefs = ws.propose(1, 1, None).unwrap();
        assert_eq!(briefs.len(), 1);
        assert_eq!(ws.brief(&briefs[0].brief_id).unwrap(), briefs[0]);
        let manual = ws.create_brief(&briefs[0].persona_ref, &briefs[0].challenge_ref, "o1").unwrap();
        assert_eq!(manual.story, briefs[0].story);
        assert_ne!(manual.brief_id, briefs[0].brief_id);
        assert_eq!(ws.briefs().unwrap().len(), 2);
        let edit = BriefEdit {
            idea: Some("A new idea.".into()),
            ..BriefEdit::default()
        };
        let revised = ws.revise_brief(&manual.brief_id, edit).unwrap();
        assert_eq!((revised.revision, ws.brief(&manual.brief_id).unwrap()), (1, revised.clone()));
        assert_eq!(ws.briefs().unwrap().len(), 2);
        assert!(!ws.redistill("Dewi gets there on time. Then rests.").unwrap().is_empty());

        let mut narrow = ClusterParams::new(3);
        narrow.filter.keyword_any = Some(vec!["groceries".into(), "dinner".into()]);
        let run = ws.cluster(PillarField::Audience, narrow).unwrap();
        assert_eq!(run.clustering.assignments.len(), 2);
        assert!(matches!(
            ws.create_brief("persona-99", &briefs[0].challenge_ref, "o1"),
            Err(WorkspaceError::NotFound { kind: "persona", .. })
        ));
    }

    #[test]
    fn telemetry_import_and_analysis() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        let csv = "date,creative_id,impressions,clicks,lpv,results,spend,reach\n\
                   2023-10-02,a,1000,30,12,2,12.50,800\n\
                   2023-10-09,a,1000,20,10,1,20.00,800\n";
        assert_eq!(ws.import_telemetry(csv.as_bytes()).unwrap(), 2);
        assert_eq!(ws.import_telemetry(csv.as_bytes()).unwrap(), 2);
        assert_eq!(ws.telemetry_rows().unwrap().len(), 4);
        let a = ws.analyze(&AnalyzeParams::default()).unwrap();
        assert_eq!(a.ranges["cpr"].min, 6.25);
        assert!(a.rendered.contains("## Guiding Questions"));
        assert!(a.actions.is_none());
        let b = ws
            .analyze(&AnalyzeParams {
                recommend: true,
                ..AnalyzeParams::default()
            })
            .unwrap();
        assert!(b.reply.is_some());
        assert_eq!(ws.trends(Granularity::Daily).unwrap().points.len(), 2);

        let action = RecommendedAction {
            kind: crate::telemetry::ActionKind::Budget,
            description: "Cap weekend bids".into(),
            confidence: crate::telemetry::Confidence::Low,
            evidence_refs: vec![],
        };
        let saved = ws
            .annotate(Annotation {
                action,
                decision: Decision::Dismiss,
                note: None,
                recorded_at: None,
            })
            .unwrap();
        assert!(saved.recorded_at.is_some());
        assert_eq!(ws.annotations().unwrap(), vec![saved]);
    }

    #[test]
    fn heatmaps_are_stored_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        let hm = ws.put_heatmap(r#"{"creative_id":"cr-1","width":2,"height":1,"weights":[1,4]}"#).unwrap();
        assert_eq!(hm.weights, vec![0.25, 1.0]);
        assert_eq!(ws.heatmap("cr-1").unwrap(), hm);
        assert_eq!(ws.heatmap("cr-2").unwrap_err().class(), ErrorClass::NotFound);
        assert_eq!(ws.heatmap("../x").unwrap_err().class(), ErrorClass::Invalid);
        assert_eq!(ws.regions("cr-1", 0.5).unwrap().len(), 1);
    }

    #[test]
    fn original_row_is_found_by_name() {
        let csv = "variant_id,label,impressions,clicks,lpv,results,removed_elements\n\
                   v1,Layout 1,100,3,1,0,logo\n\
                   orig,original,100,5,2,0,\n";
        let dir = tempfile::tempdir().unwrap();
        let out = workspace(dir.path()).ablation_from_csv(csv).unwrap();
        assert_eq!(out.report.rows.len(), 1);
        assert_eq!(out.report.rows[0].ctr_ratio, 0.6);
    }
}

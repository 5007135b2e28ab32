//! Campaign briefs: persona × challenge × offering → story, insight, idea.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gateway::{extract_first_object, field_str, Bindings, CompletionRequest, Gateway, GatewayError};
use crate::mining::{detect_gaps, Archetype, CoverageMatrix};
use crate::util::short_hash;

pub const INSIGHT_MAX_CHARS: usize = 280;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NarrativeError {
    #[error("{stage} generation failed: {reason}")]
    ExtractionFailed { stage: &'static str, reason: String },
    #[error("story is empty")]
    EmptyStory,
    #[error("brief {0} cannot be blank")]
    BlankField(&'static str),
    #[error("no offerings available")]
    NoOfferings,
    #[error("invalid offering: {0}")]
    InvalidOffering(String),
    #[error("gap references unknown {kind} {id}")]
    UnknownArchetype { kind: &'static str, id: String },
    #[error("brief store: {0}")]
    Store(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offering {
    pub offering_id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub brand: String,
}

impl Offering {
    pub fn validate(&self) -> Result<(), NarrativeError> {
        if self.offering_id.trim().is_empty() {
            return Err(NarrativeError::InvalidOffering("empty offering_id".into()));
        }
        if self.name.trim().is_empty() {
            return Err(NarrativeError::InvalidOffering(format!("{}: empty name", self.offering_id)));
        }
        Ok(())
    }
}

/// Parses offerings from a JSON array or from one JSON object per line.
pub fn parse_offerings(text: &str) -> Result<Vec<Offering>, NarrativeError> {
    let bad = |e: serde_json::Error| NarrativeError::InvalidOffering(e.to_string());
    let offerings: Vec<Offering> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(bad)?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(bad))
            .collect::<Result<_, _>>()?
    };
    offerings.iter().try_for_each(Offering::validate)?;
    Ok(offerings)
}

/// Brief content before it is stamped with an id and time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BriefDraft {
    pub persona_ref: String,
    pub challenge_ref: String,
    pub offering_ref: String,
    pub story: String,
    pub insight: String,
    pub idea: String,
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignBrief {
    pub brief_id: String,
    pub persona_ref: String,
    pub challenge_ref: String,
    pub offering_ref: String,
    pub story: String,
    pub insight: String,
    pub idea: String,
    pub created_at: DateTime<Utc>,
    pub provenance: BTreeMap<String, String>,
    /// 0 for the generated brief, incremented by each edit.
    #[serde(default)]
    pub revision: u32,
}

/// Replacement text for an existing brief; `None` keeps the current value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BriefEdit {
    pub story: Option<String>,
    pub insight: Option<String>,
    pub idea: Option<String>,
}

impl CampaignBrief {
    /// Plain-text rendering for pasting into decks.
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "Campaign brief {}\nPersona: {}\nChallenge: {}\nOffering: {}\n\nStory\n{}\n\nInsight\n{}\n\nIdea\n{}\n",
            self.brief_id, self.persona_ref, self.challenge_ref, self.offering_ref, self.story, self.insight, self.idea
        );
        if let Some(rank) = self.provenance.get("gap_rank") {
            out.push_str(&format!("\nProposed for coverage gap #{rank}\n"));
        }
        out
    }
}

/// First sentence of `text`: up to and including the first `.`, `!` or `?`
/// that ends the text or is followed by whitespace.
pub fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            match chars.peek() {
                None => return text,
                Some((_, next)) if next.is_whitespace() => return &text[..i + c.len_utf8()],
                _ => {}
            }
        }
    }
    text
}

fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((cut, _)) => text[..cut].trim_end().to_string(),
        None => text.to_string(),
    }
}

fn check_insight(map: &serde_json::Map<String, serde_json::Value>) -> Result<(), String> {
    let insight = field_str(map, "insight").ok_or("insight empty")?;
    if first_sentence(&insight) != insight {
        return Err("insight must be a single sentence".into());
    }
    if insight.chars().count() > INSIGHT_MAX_CHARS {
        return Err(format!("insight longer than {INSIGHT_MAX_CHARS} characters"));
    }
    Ok(())
}

/// Condenses a story into one sentence of at most 280 characters. After
/// retries are exhausted, the first sentence of the last reply is kept.
pub fn distill_insight(gateway: &Gateway, story: &str) -> Result<String, NarrativeError> {
    if story.trim().is_empty() {
        return Err(NarrativeError::EmptyStory);
    }
    let mut bindings = Bindings::new();
    bindings.insert("story".into(), story.trim().to_string());
    let result = gateway.complete_checked(
        &CompletionRequest::new("insight_distill", "campaign_insight", bindings),
        check_insight,
    )?;
    let insight = match result.parsed {
        Some(map) if !result.validation_failed => field_str(&map, "insight"),
        _ => extract_first_object(&result.raw_text).and_then(|m| field_str(&m, "insight")),
    };
    let insight = insight.ok_or_else(|| NarrativeError::ExtractionFailed {
        stage: "insight",
        reason: result.errors.join("; "),
    })?;
    Ok(truncate_chars(first_sentence(&insight), INSIGHT_MAX_CHARS))
}

fn require(field: &'static str) -> impl Fn(&serde_json::Map<String, serde_json::Value>) -> Result<(), String> {
    move |map| field_str(map, field).map(|_| ()).ok_or_else(|| format!("{field} empty"))
}

fn complete_field(
    gateway: &Gateway,
    template_id: &str,
    schema_id: &str,
    field: &'static str,
    bindings: Bindings,
) -> Result<String, NarrativeError> {
    let result = gateway.complete_checked(&CompletionRequest::new(template_id, schema_id, bindings), require(field))?;
    match result.parsed {
        Some(map) if !result.validation_failed => Ok(field_str(&map, field).unwrap_or_default()),
        _ => Err(NarrativeError::ExtractionFailed {
            stage: field,
            reason: result.errors.join("; "),
        }),
    }
}

/// Runs story → insight → idea for one pairing.
pub fn generate_brief(
    gateway: &Gateway,
    persona: &Archetype,
    challenge: &Archetype,
    offering: &Offering,
) -> Result<BriefDraft, NarrativeError> {
    offering.validate()?;
    let mut bindings = Bindings::new();
    bindings.insert("persona_name".into(), persona.name.clone());
    bindings.insert("persona_description".into(), persona.description.clone());
    bindings.insert("challenge_name".into(), challenge.name.clone());
    bindings.insert("challenge_description".into(), challenge.description.clone());
    bindings.insert("offering_name".into(), offering.name.clone());
    bindings.insert("offering_description".into(), offering.description.clone());
    bindings.insert("brand".into(), offering.brand.clone());
    let story = complete_field(gateway, "brief_story", "brief_story", "story", bindings)?;

    let insight = distill_insight(gateway, &story)?;

    let mut bindings = Bindings::new();
    bindings.insert("insight".into(), insight.clone());
    bindings.insert("challenge_name".into(), challenge.name.clone());
    bindings.insert("offering_name".into(), offering.name.clone());
    bindings.insert("offering_description".into(), offering.description.clone());
    bindings.insert("brand".into(), offering.brand.clone());
    let idea = complete_field(gateway, "campaign_idea", "campaign_idea", "idea", bindings)?;

    let mut provenance = BTreeMap::new();
    provenance.insert("provider_id".into(), gateway.provider_id().to_string());
    for template in ["brief_story", "insight_distill", "campaign_idea"] {
        provenance.insert(format!("template.{template}"), gateway.template(template)?.version.clone());
    }
    Ok(BriefDraft {
        persona_ref: persona.id.clone(),
        challenge_ref: challenge.id.clone(),
        offering_ref: offering.offering_id.clone(),
        story,
        insight,
        idea,
        provenance,
    })
}

/// Offerings for one gap: those whose brand matches `brand` (case-insensitive)
/// first, then the rest, `fan_out` in total.
pub fn choose_offerings<'a>(offerings: &'a [Offering], brand: Option<&str>, fan_out: usize) -> Vec<&'a Offering> {
    let matches = |o: &Offering| brand.is_some_and(|b| o.brand.eq_ignore_ascii_case(b.trim()));
    offerings
        .iter()
        .filter(|o| matches(o))
        .chain(offerings.iter().filter(|o| !matches(o)))
        .take(fan_out.max(1))
        .collect()
}

fn find<'a>(list: &'a [Archetype], kind: &'static str, id: &str) -> Result<&'a Archetype, NarrativeError> {
    list.iter()
        .find(|a| a.id == id)
        .ok_or_else(|| NarrativeError::UnknownArchetype { kind, id: id.to_string() })
}

/// Drafts briefs for the `top_n` lowest-coverage cells, in gap rank order.
#[allow(clippy::too_many_arguments)]
pub fn propose_briefs(
    gateway: &Gateway,
    matrix: &CoverageMatrix,
    personas: &[Archetype],
    challenges: &[Archetype],
    offerings: &[Offering],
    brand: Option<&str>,
    top_n: usize,
    fan_out: usize,
) -> Result<Vec<BriefDraft>, NarrativeError> {
    if top_n == 0 {
        return Ok(Vec::new());
    }
    if offerings.is_empty() {
        return Err(NarrativeError::NoOfferings);
    }
    let mut jobs = Vec::new();
    for gap in detect_gaps(matrix, top_n) {
        let persona = find(personas, "persona", &gap.persona)?;
        let challenge = find(challenges, "challenge", &gap.challenge)?;
        for offering in choose_offerings(offerings, brand, fan_out) {
            jobs.push((gap.clone(), persona, challenge, offering));
        }
    }
    jobs.par_iter()
        .map(|(gap, persona, challenge, offering)| {
            let mut draft = generate_brief(gateway, persona, challenge, offering)?;
            draft.provenance.insert("gap_rank".into(), (gap.rank + 1).to_string());
            draft.provenance.insert("gap_count".into(), gap.count.to_string());
            Ok(draft)
        })
        .collect()
}

/// Source of brief timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    /// Every reading returns this instant; the store still keeps
    /// timestamps strictly increasing.
    Fixed(DateTime<Utc>),
}

impl Clock {
    /// `Fixed` at `SOURCE_DATE_EPOCH` (seconds) when that variable is set,
    /// otherwise `System`.
    pub fn from_env() -> Self {
        std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse::<i64>().ok())
            .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
            .map_or(Clock::System, Clock::Fixed)
    }

    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
        }
    }
}

/// Append-only brief log (`briefs.jsonl`).
#[derive(Debug)]
pub struct BriefStore {
    path: PathBuf,
    briefs: Vec<CampaignBrief>,
    clock: Clock,
}

impl BriefStore {
    pub fn open(path: impl AsRef<Path>, clock: Clock) -> Result<Self, NarrativeError> {
        let path = path.as_ref().to_path_buf();
        let err = |e: String| NarrativeError::Store(format!("{}: {e}", path.display()));
        let mut briefs = Vec::new();
        if path.exists() {
            let file = fs::File::open(&path).map_err(|e| err(e.to_string()))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| err(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let brief: CampaignBrief =
                    serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", n + 1)))?;
                match briefs.iter_mut().find(|b: &&mut CampaignBrief| b.brief_id == brief.brief_id) {
                    Some(slot) => *slot = brief,
                    None => briefs.push(brief),
                }
            }
        }
        Ok(BriefStore { path, briefs, clock })
    }

    pub fn list(&self) -> &[CampaignBrief] {
        &self.briefs
    }

    pub fn get(&self, brief_id: &str) -> Option<&CampaignBrief> {
        self.briefs.iter().find(|b| b.brief_id == brief_id)
    }

    /// Assigns an id and a strictly increasing timestamp, then appends.
    pub fn persist(&mut self, draft: BriefDraft) -> Result<CampaignBrief, NarrativeError> {
        let seq = self.briefs.len() + 1;
        let digest = short_hash(
            format!(
                "{}\x1f{}\x1f{}\x1f{}\x1f{}\x1f{}",
                draft.persona_ref, draft.challenge_ref, draft.offering_ref, draft.story, draft.insight, draft.idea
            )
            .as_bytes(),
            8,
        );
        let mut created_at = self.clock.now();
        if let Some(last) = self.briefs.last() {
            if created_at <= last.created_at {
                created_at = last.created_at + Duration::milliseconds(1);
            }
        }
        let brief = CampaignBrief {
            brief_id: format!("brief-{seq:04}-{digest}"),
            persona_ref: draft.persona_ref,
            challenge_ref: draft.challenge_ref,
            offering_ref: draft.offering_ref,
            story: draft.story,
            insight: draft.insight,
            idea: draft.idea,
            created_at,
            provenance: draft.provenance,
            revision: 0,
        };
        self.append(&brief)?;
        self.briefs.push(brief.clone());
        Ok(brief)
    }

    /// Applies an edit by appending a new revision under the same id.
    /// Returns `None` for an unknown id.
    pub fn revise(&mut self, brief_id: &str, edit: BriefEdit) -> Result<Option<CampaignBrief>, NarrativeError> {
        let Some(idx) = self.briefs.iter().position(|b| b.brief_id == brief_id) else {
            return Ok(None);
        };
        let mut brief = self.briefs[idx].clone();
        for (name, slot, value) in [
            ("story", &mut brief.story, edit.story),
            ("insight", &mut brief.insight, edit.insight),
            ("idea", &mut brief.idea, edit.idea),
        ] {
            if let Some(v) = value {
                if v.trim().is_empty() {
                    return Err(NarrativeError::BlankField(name));
                }
                *slot = v.trim().to_string();
            }
        }
        brief.revision += 1;
        self.append(&brief)?;
        self.briefs[idx] = brief.clone();
        Ok(Some(brief))
    }

    fn append(&self, brief: &CampaignBrief) -> Result<(), NarrativeError> {
        let err = |e: std::io::Error| NarrativeError::Store(format!("{}: {e}", self.path.display()));
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path).map_err(err)?;
        let line = serde_json::to_string(brief).map_err(|e| NarrativeError::Store(e.to_string()))?;
        writeln!(file, "{line}").map_err(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockProvider;
    use crate::mining::PillarField;
    use std::sync::Arc;

    fn archetype(field: PillarField, i: usize, name: &str) -> Archetype {
        Archetype {
            id: field.archetype_id(i),
            field,
            name: name.into(),
            description: format!("{name} description"),
            size: 10,
            cluster_index: i,
            exemplar_ad_ids: vec![],
            auto_labeled: false,
            avatar_prompt: None,
        }
    }

    fn car_hailing() -> Offering {
        Offering {
            offering_id: "off-1".into(),
            name: "Corporate Car Hailing".into(),
            description: "Business rides billed to one account".into(),
            brand: "Gojek".into(),
        }
    }

    const STORY: &str = r#"{"story":"Samuel Tan runs a logistics firm and spends every month-end chasing ride receipts. With corporate car hailing, his team rides on one account and he closes the books by noon."}"#;
    const INSIGHT: &str = r#"{"insight":"Owners want to run the business, not chase receipts."}"#;
    const IDEA: &str = r#"{"idea":"Month-End, Minus the Mess: show owners reclaiming the last day of the month."}"#;

    #[test]
    fn scripted_brief_names_a_protagonist() {
        let gw = Gateway::new(Arc::new(MockProvider::new().scripted([STORY, INSIGHT, IDEA])));
        let draft = generate_brief(
            &gw,
            &archetype(PillarField::Audience, 0, "Efficiency Enthusiasts"),
            &archetype(PillarField::Insight, 0, "Streamlining Work Transport Processes"),
            &car_hailing(),
        )
        .unwrap();
        assert!(draft.story.contains("Samuel Tan"));
        assert_eq!(draft.insight, "Owners want to run the business, not chase receipts.");
        assert!(draft.idea.starts_with("Month-End"));
        assert_eq!(draft.provenance["provider_id"], "mock");
        assert_eq!(draft.provenance["template.brief_story"], "1");
    }

    #[test]
    fn two_sentence_insight_is_retried_then_cut_to_the_first() {
        let two = r#"{"insight":"First thought here. Second thought there."}"#;
        let gw = Gateway::new(Arc::new(MockProvider::new().scripted([two, two, two])));
        assert_eq!(distill_insight(&gw, "a story").unwrap(), "First thought here.");

        let gw = Gateway::new(Arc::new(MockProvider::new().scripted([two, INSIGHT])));
        assert_eq!(
            distill_insight(&gw, "a story").unwrap(),
            "Owners want to run the business, not chase receipts."
        );
    }

    #[test]
    fn long_insight_is_truncated_after_retries() {
        let long = format!(r#"{{"insight":"{}"}}"#, "word ".repeat(100).trim());
        let gw = Gateway::new(Arc::new(MockProvider::new().scripted([long.clone(), long.clone(), long])));
        let insight = distill_insight(&gw, "story").unwrap();
        assert!(insight.chars().count() <= INSIGHT_MAX_CHARS);
    }

    #[test]
    fn empty_story_is_rejected() {
        let gw = Gateway::new(Arc::new(MockProvider::new()));
        assert_eq!(distill_insight(&gw, "  "), Err(NarrativeError::EmptyStory));
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(first_sentence("One. Two."), "One.");
        assert_eq!(first_sentence("Costs fell 3.5% overall."), "Costs fell 3.5% overall.");
        assert_eq!(first_sentence("no stop"), "no stop");
        assert_eq!(first_sentence("Why? Because."), "Why?");
    }

    #[test]
    fn empty_offering_description_still_generates() {
        let gw = Gateway::new(Arc::new(MockProvider::new()));
        let mut offering = car_hailing();
        offering.description.clear();
        let draft = generate_brief(
            &gw,
            &archetype(PillarField::Audience, 0, "P"),
            &archetype(PillarField::Insight, 0, "C"),
            &offering,
        )
        .unwrap();
        assert!(!draft.story.is_empty() && !draft.insight.is_empty() && !draft.idea.is_empty());
    }

    fn matrix(counts: Vec<Vec<usize>>) -> CoverageMatrix {
        CoverageMatrix {
            personas: (0..counts.len()).map(|i| PillarField::Audience.archetype_id(i)).collect(),
            challenges: (0..counts[0].len()).map(|i| PillarField::Insight.archetype_id(i)).collect(),
            counts,
            persona_only: 0,
            challenge_only: 0,
        }
    }

    fn archetypes(field: PillarField, n: usize) -> Vec<Archetype> {
        (0..n).map(|i| archetype(field, i, &format!("{field:?} {i}"))).collect()
    }

    #[test]
    fn proposals_follow_gap_rank() {
        let gw = Gateway::new(Arc::new(MockProvider::new()));
        let m = matrix(vec![vec![3, 1, 2], vec![1, 4, 1], vec![5, 0, 3]]);
        let drafts = propose_briefs(
            &gw,
            &m,
            &archetypes(PillarField::Audience, 3),
            &archetypes(PillarField::Insight, 3),
            &[car_hailing()],
            Some("gojek"),
            2,
            1,
        )
        .unwrap();
        let pairs: Vec<_> = drafts.iter().map(|d| (d.persona_ref.as_str(), d.challenge_ref.as_str())).collect();
        assert_eq!(pairs, vec![("persona-2", "challenge-1"), ("persona-0", "challenge-1")]);
        assert_eq!(drafts[0].provenance["gap_rank"], "1");

        let again = propose_briefs(
            &gw,
            &m,
            &archetypes(PillarField::Audience, 3),
            &archetypes(PillarField::Insight, 3),
            &[car_hailing()],
            Some("gojek"),
            2,
            1,
        )
        .unwrap();
        assert_eq!(drafts, again);
    }

    #[test]
    fn proposal_edge_cases() {
        let gw = Gateway::new(Arc::new(MockProvider::new()));
        let m = matrix(vec![vec![7]]);
        let p = archetypes(PillarField::Audience, 1);
        let c = archetypes(PillarField::Insight, 1);
        assert_eq!(propose_briefs(&gw, &m, &p, &c, &[car_hailing()], None, 1, 1).unwrap().len(), 1);
        assert!(propose_briefs(&gw, &m, &p, &c, &[car_hailing()], None, 0, 1).unwrap().is_empty());
        assert_eq!(propose_briefs(&gw, &m, &p, &c, &[], None, 1, 1), Err(NarrativeError::NoOfferings));
    }

    #[test]
    fn brand_match_wins_offering_choice() {
        let mut other = car_hailing();
        other.offering_id = "off-0".into();
        other.brand = "Grab".into();
        let list = [other, car_hailing()];
        assert_eq!(choose_offerings(&list, Some("Gojek"), 1)[0].offering_id, "off-1");
        assert_eq!(choose_offerings(&list, Some("Nobody"), 1)[0].offering_id, "off-0");
        assert_eq!(choose_offerings(&list, None, 5).len(), 2);
    }

    #[test]
    fn offerings_parse_from_array_or_lines() {
        let arr = r#"[{"offering_id":"o1","name":"A","brand":"B"}]"#;
        assert_eq!(parse_offerings(arr).unwrap()[0].description, "");
        let lines = "{\"offering_id\":\"o1\",\"name\":\"A\",\"brand\":\"B\"}\n\n{\"offering_id\":\"o2\",\"name\":\"C\",\"brand\":\"B\"}\n";
        assert_eq!(parse_offerings(lines).unwrap().len(), 2);
        assert!(parse_offerings(r#"[{"offering_id":"o1","name":" ","brand":"B"}]"#).is_err());
    }

    #[test]
    fn store_stamps_distinct_ids_and_times_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("briefs.jsonl");
        let fixed = Utc.timestamp_opt(1_700_000_000, 0).unwrap();
        let gw = Gateway::new(Arc::new(MockProvider::new()));
        let draft = generate_brief(
            &gw,
            &archetype(PillarField::Audience, 0, "P"),
            &archetype(PillarField::Insight, 0, "C"),
            &car_hailing(),
        )
        .unwrap();
        let mut store = BriefStore::open(&path, Clock::Fixed(fixed)).unwrap();
        let a = store.persist(draft.clone()).unwrap();
        let b = store.persist(draft).unwrap();
        assert_eq!(a.story, b.story);
        assert_ne!(a.brief_id, b.brief_id);
        assert!(a.brief_id.starts_with("brief-0001-"));
        assert!(b.created_at > a.created_at);
        assert_eq!(a.created_at, fixed);

        let reopened = BriefStore::open(&path, Clock::System).unwrap();
        assert_eq!(reopened.list(), &[a.clone(), b]);
        assert!(reopened.get(&a.brief_id).unwrap().render_text().contains("Story\n"));
    }

    #[test]
    fn revisions_replace_in_place_and_survive_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("briefs.jsonl");
        let gw = Gateway::new(Arc::new(MockProvider::new()));
        let draft = generate_brief(
            &gw,
            &archetype(PillarField::Audience, 0, "P"),
            &archetype(PillarField::Insight, 0, "C"),
            &car_hailing(),
        )
        .unwrap();
        let mut store = BriefStore::open(&path, Clock::System).unwrap();
        let a = store.persist(draft.clone()).unwrap();
        let edit = BriefEdit {
            story: Some("  A rewritten story.  ".into()),
            ..BriefEdit::default()
        };
        let revised = store.revise(&a.brief_id, edit).unwrap().unwrap();
        assert_eq!((revised.story.as_str(), revised.revision), ("A rewritten story.", 1));
        assert_eq!((revised.insight.as_str(), revised.created_at), (a.insight.as_str(), a.created_at));
        assert!(store.revise("brief-9999-x", BriefEdit::default()).unwrap().is_none());
        let blank = BriefEdit {
            idea: Some(" ".into()),
            ..BriefEdit::default()
        };
        assert!(matches!(store.revise(&a.brief_id, blank), Err(NarrativeError::BlankField("idea"))));

        let b = store.persist(draft).unwrap();
        assert!(b.brief_id.starts_with("brief-0002-"));
        let reopened = BriefStore::open(&path, Clock::System).unwrap();
        assert_eq!(reopened.list(), &[revised, b]);
    }
}

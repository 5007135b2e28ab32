//! Checks against the checked-in fixtures and golden files.
//!
//! Set `UPDATE_GOLDENS=1` to rewrite the goldens after an intended change.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use mindfuse_core::creative::{
    degradation_report, funnel_rates, read_variant_stats, summarize_drops, write_report_csv, F1Formula,
    VariantStats,
};
use mindfuse_core::gateway::{Bindings, CompletionRequest, Gateway, MockProvider};
use mindfuse_core::telemetry::{
    aggregate, build_analysis_prompt, read_telemetry_csv, summarize_ranges, Granularity, PromptTexts,
    GUIDING_QUESTIONS,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from golden:\n{actual}");
}

fn weekly_series() -> mindfuse_core::telemetry::TrendSeries {
    let rows = read_telemetry_csv(fs::File::open(fixture("telemetry.csv")).unwrap()).unwrap();
    aggregate(&rows, Granularity::Weekly).unwrap()
}

#[test]
fn telemetry_fixture_covers_thirteen_iso_weeks() {
    let series = weekly_series();
    let keys: Vec<_> = series.points.iter().map(|p| p.period_key.as_str()).collect();
    assert_eq!(keys.len(), 13);
    assert_eq!((keys[0], keys[12]), ("2023-W40", "2023-W52"));
    assert_eq!(series.pct_changes.len(), 12);
}

#[test]
fn telemetry_fixture_ranges() {
    let ranges = summarize_ranges(&weekly_series(), &["cpr", "spend", "ctr", "cpm"]).unwrap();
    assert_eq!((ranges["cpr"].min, ranges["cpr"].max), (27.68, 208.28));
    assert_eq!((ranges["spend"].min, ranges["spend"].max), (175.18, 4664.91));
    assert_eq!(ranges["ctr"].max, 718.0 / 20000.0);
    assert_eq!(format!("{:.2}%", ranges["ctr"].max * 100.0), "3.59%");
    assert_eq!(ranges["cpm"].max, 14.06);
}

#[test]
fn published_funnel_totals() {
    let stats = VariantStats {
        variant_id: "campaign".into(),
        label: "Campaign".into(),
        impressions: 65107,
        clicks: 2243,
        lpv: 1162,
        results: 0,
        removed_elements: Vec::new(),
    };
    let r = funnel_rates(&stats).unwrap();
    assert!((r.ctr - 0.034451).abs() < 1e-6);
    assert!((r.lpv_per_click - 0.518056).abs() < 1e-6);
    assert_eq!(r.ctr, 2243.0 / 65107.0);
}

#[test]
fn ablation_fixture_reproduces_ctr_column() {
    let original = read_variant_stats(fs::File::open(fixture("ablation_original.csv")).unwrap()).unwrap();
    let variants = read_variant_stats(fs::File::open(fixture("ablation_variants.csv")).unwrap()).unwrap();
    let report = degradation_report(&original[0], &variants, F1Formula::default()).unwrap();
    let ctr: Vec<f64> = report.rows.iter().map(|r| r.ctr_ratio).collect();
    assert_eq!(ctr, vec![0.692, 0.25, 0.857]);
    for d in summarize_drops(&report).iter().filter(|d| d.metric == "ctr") {
        assert_eq!(d.ratio_milli + d.drop_milli, 1000);
    }
    let mut csv = Vec::new();
    write_report_csv(&mut csv, &report).unwrap();
    check_golden("ablation_report.csv", &String::from_utf8(csv).unwrap());
}

#[test]
fn analysis_prompt_golden() {
    let prompt = build_analysis_prompt(&[weekly_series()], Vec::new(), &PromptTexts::default()).unwrap();
    let text = prompt.render();
    check_golden("analysis_prompt.txt", &text);

    let headers: Vec<_> = text.lines().filter(|l| l.starts_with("## ")).collect();
    assert_eq!(headers, ["## Knowledge", "## Role", "## Task", "## Guiding Questions", "## Data"]);
    let section = text.split("## Guiding Questions\n").nth(1).unwrap().split("\n## ").next().unwrap();
    let questions: Vec<_> = section.lines().filter(|l| !l.trim().is_empty()).collect();
    let expected: Vec<String> = GUIDING_QUESTIONS.iter().enumerate().map(|(i, q)| format!("{}. {q}", i + 1)).collect();
    assert_eq!(questions, expected);
    assert_eq!(questions[0], "1. How did CPR and Spend evolve?");
    assert_eq!(questions[5], "6. What actions should be taken?");
}

fn bindings(pairs: &[(&str, &str)]) -> Bindings {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn template_goldens() {
    let gw = Gateway::new(Arc::new(MockProvider::new()));
    let offering = [
        ("offering_name", "Ride Pass"),
        ("offering_description", "Monthly subscription with discounted rides at peak hours."),
        ("brand", "Arunika"),
    ];
    let cases: Vec<(&str, &str, Bindings)> = vec![
        (
            "pillar_extraction",
            "content_pillars",
            bindings(&[
                ("brand", "Arunika"),
                ("headline", "Save twenty minutes on every trip"),
                ("body_text", "For office workers commuting across the city: save twenty minutes on every trip."),
            ]),
        ),
        (
            "brief_story",
            "brief_story",
            bindings(
                &[
                    &[
                        ("persona_name", "Commuting office workers"),
                        ("persona_description", "Salaried staff who cross the city twice a day."),
                        ("challenge_name", "Unpredictable travel time"),
                        ("challenge_description", "Traffic makes arrival times a gamble."),
                    ][..],
                    &offering[..],
                ]
                .concat(),
            ),
        ),
        ("insight_distill", "campaign_insight", bindings(&[("story", "Dewi leaves at seven and still arrives late.")])),
        (
            "campaign_idea",
            "campaign_idea",
            bindings(
                &[
                    &[
                        ("insight", "Arriving on time feels like luck, not a plan."),
                        ("challenge_name", "Unpredictable travel time"),
                    ][..],
                    &offering[..],
                ]
                .concat(),
            ),
        ),
    ];
    for (id, schema, b) in cases {
        let request = CompletionRequest::new(id, schema, b);
        let rendered = gw.render_request(&request).unwrap();
        check_golden(&format!("{id}.txt"), &rendered);
        assert_eq!(rendered, gw.render_request(&request).unwrap());
    }
}

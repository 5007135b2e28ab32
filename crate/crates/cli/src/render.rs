//! Text, JSON and CSV renderings of command results.

use std::io::{self, Write};

use anyhow::Result;
use mindfuse_core::ads::{AdCreative, IngestReport};
use mindfuse_core::creative::{write_report_csv, SalientRegion};
use mindfuse_core::narrative::{CampaignBrief, Offering};
use mindfuse_core::workspace::{AblationOutcome, GapReport, PillarRun, RunSummary, TelemetryAnalysis};
use serde::Serialize;
use serde_json::json;

use crate::{OutputFormat, UsageError};

pub struct Output {
    format: OutputFormat,
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<()> {
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value)?;
    writeln!(stdout)?;
    Ok(())
}

fn csv_rows<I, R>(header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

impl Output {
    pub fn new(format: OutputFormat) -> Self {
        Output { format }
    }

    fn no_csv(&self, what: &str) -> Result<()> {
        Err(UsageError(format!("--output csv is not available for {what}")).into())
    }

    pub fn ingest(&self, r: &IngestReport) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(r),
            OutputFormat::Csv => self.no_csv("ingest"),
            OutputFormat::Text => {
                println!(
                    "read {}, accepted {}, duplicates {}, rejected {}",
                    r.read, r.accepted, r.duplicates, r.rejected
                );
                for reason in &r.reject_reasons {
                    println!("  line {}: {}", reason.line_no, reason.reason);
                }
                Ok(())
            }
        }
    }

    pub fn ads(&self, ads: &[AdCreative]) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(ads),
            OutputFormat::Csv => csv_rows(
                &["id", "brand", "first_seen", "last_seen", "headline", "body_text"],
                ads.iter().map(|a| {
                    [
                        a.id.clone(),
                        a.brand.clone(),
                        a.first_seen.to_string(),
                        a.last_seen.to_string(),
                        a.headline.clone().unwrap_or_default(),
                        a.body_text.clone(),
                    ]
                }),
            ),
            OutputFormat::Text => {
                for a in ads {
                    println!("{}  {:<12} {}  {}", a.id, a.brand, a.first_seen, truncate(&a.body_text, 60));
                }
                println!("{} ads", ads.len());
                Ok(())
            }
        }
    }

    pub fn pillars(&self, run: &PillarRun) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(run),
            OutputFormat::Csv => self.no_csv("pillars"),
            OutputFormat::Text => {
                println!(
                    "extracted {} of {} ads ({} failed); {} rows stored",
                    run.extracted, run.requested, run.failed, run.total_rows
                );
                for f in &run.failures {
                    println!("  {}: {}", f.ad_id, f.reason);
                }
                Ok(())
            }
        }
    }

    pub fn run_summary(&self, run: &RunSummary) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(run),
            OutputFormat::Csv => csv_rows(
                &["id", "size", "name", "description", "exemplar_ad_ids"],
                run.archetypes.iter().map(|a| {
                    [
                        a.id.clone(),
                        a.size.to_string(),
                        a.name.clone(),
                        a.description.clone(),
                        a.exemplar_ad_ids.join(";"),
                    ]
                }),
            ),
            OutputFormat::Text => {
                let bic = run.bic.map_or("degenerate".to_string(), |b| format!("{b:.3}"));
                println!(
                    "k = {} (searched {}..={}), BIC {bic}, seed {}, embedder {}",
                    run.k, run.k_min, run.k_max, run.seed, run.embedder_id
                );
                for a in &run.archetypes {
                    let flag = if a.auto_labeled { " [auto]" } else { "" };
                    println!("{:<12} {:>5}  {}{flag}", a.id, a.size, truncate(&a.name, 60));
                    println!("{:19}{}", "", truncate(&a.description, 100));
                }
                Ok(())
            }
        }
    }

    pub fn gaps(&self, report: &GapReport) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(report),
            OutputFormat::Csv => csv_rows(
                &["rank", "persona", "challenge", "count"],
                report
                    .gaps
                    .iter()
                    .map(|g| [g.rank.to_string(), g.persona.clone(), g.challenge.clone(), g.count.to_string()]),
            ),
            OutputFormat::Text => {
                let m = &report.matrix;
                print!("{:<14}", "");
                for c in &m.challenges {
                    print!("{c:>14}");
                }
                println!();
                for (p, row) in m.personas.iter().zip(&m.counts) {
                    print!("{p:<14}");
                    for n in row {
                        print!("{n:>14}");
                    }
                    println!();
                }
                println!();
                for g in &report.gaps {
                    println!("{:>3}. {} x {}: {} ads", g.rank + 1, g.persona, g.challenge, g.count);
                }
                Ok(())
            }
        }
    }

    pub fn offerings(&self, offerings: &[Offering]) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(offerings),
            OutputFormat::Csv => csv_rows(
                &["offering_id", "name", "brand", "description"],
                offerings
                    .iter()
                    .map(|o| [o.offering_id.clone(), o.name.clone(), o.brand.clone(), o.description.clone()]),
            ),
            OutputFormat::Text => {
                for o in offerings {
                    println!("{:<16} {} ({})", o.offering_id, o.name, o.brand);
                }
                Ok(())
            }
        }
    }

    pub fn briefs(&self, briefs: &[CampaignBrief]) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(briefs),
            OutputFormat::Csv => csv_rows(
                &["brief_id", "persona", "challenge", "offering", "created_at", "story", "insight", "idea"],
                briefs.iter().map(|b| {
                    [
                        b.brief_id.clone(),
                        b.persona_ref.clone(),
                        b.challenge_ref.clone(),
                        b.offering_ref.clone(),
                        b.created_at.to_rfc3339(),
                        b.story.clone(),
                        b.insight.clone(),
                        b.idea.clone(),
                    ]
                }),
            ),
            OutputFormat::Text => {
                for (i, b) in briefs.iter().enumerate() {
                    if i > 0 {
                        println!("\n----\n");
                    }
                    print!("{}", b.render_text());
                }
                Ok(())
            }
        }
    }

    pub fn telemetry_import(&self, added: usize, total: usize) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(&json!({ "imported": added, "total_rows": total })),
            OutputFormat::Csv => self.no_csv("telemetry import"),
            OutputFormat::Text => {
                println!("imported {added} rows ({total} total)");
                Ok(())
            }
        }
    }

    /// Text output is the prompt itself, followed by any parsed actions.
    pub fn analysis(&self, a: &TelemetryAnalysis) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(a),
            OutputFormat::Csv => match &a.actions {
                Some(actions) => csv_rows(
                    &["kind", "confidence", "description", "evidence"],
                    actions.iter().map(|x| {
                        [
                            json!(x.kind).as_str().unwrap_or_default().to_string(),
                            json!(x.confidence).as_str().unwrap_or_default().to_string(),
                            x.description.clone(),
                            x.evidence_refs.join(";"),
                        ]
                    }),
                ),
                None => self.no_csv("telemetry analyze without --recommend"),
            },
            OutputFormat::Text => {
                print!("{}", a.rendered);
                if let Some(actions) = &a.actions {
                    println!("\n## Recommended Actions");
                    for x in actions {
                        println!("- [{:?}/{:?}] {}", x.kind, x.confidence, x.description);
                    }
                }
                Ok(())
            }
        }
    }

    pub fn regions(&self, creative_id: &str, regions: &[SalientRegion]) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(&json!({ "creative_id": creative_id, "regions": regions })),
            OutputFormat::Csv => csv_rows(
                &["region_id", "x0", "y0", "x1", "y1", "mass", "peak", "cells"],
                regions.iter().map(|r| {
                    let (x0, y0, x1, y1) = r.bbox;
                    [
                        r.region_id.clone(),
                        x0.to_string(),
                        y0.to_string(),
                        x1.to_string(),
                        y1.to_string(),
                        format!("{:.4}", r.mass),
                        format!("{:.4}", r.peak),
                        r.cells.len().to_string(),
                    ]
                }),
            ),
            OutputFormat::Text => {
                println!("{creative_id}: {} regions", regions.len());
                for r in regions {
                    let (x0, y0, x1, y1) = r.bbox;
                    println!(
                        "{:<4} ({x0},{y0})-({x1},{y1})  mass {:.4}  peak {:.4}  {} cells",
                        r.region_id,
                        r.mass,
                        r.peak,
                        r.cells.len()
                    );
                }
                Ok(())
            }
        }
    }

    pub fn ablation(&self, outcome: &AblationOutcome) -> Result<()> {
        match self.format {
            OutputFormat::Json => json(outcome),
            OutputFormat::Csv => {
                write_report_csv(io::stdout().lock(), &outcome.report)?;
                Ok(())
            }
            OutputFormat::Text => {
                let mut buf = Vec::new();
                write_report_csv(&mut buf, &outcome.report)?;
                for line in String::from_utf8(buf)?.lines() {
                    let cells: Vec<&str> = line.split(',').collect();
                    print!("{:<12}", cells[0]);
                    for c in &cells[1..] {
                        print!("{c:>9}");
                    }
                    println!();
                }
                println!();
                for d in outcome.drops.iter().filter(|d| d.metric == "ctr") {
                    println!("removing {} cuts CTR by {}%", d.element, d.drop_pct);
                }
                Ok(())
            }
        }
    }
}

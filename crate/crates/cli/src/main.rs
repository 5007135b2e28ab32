//! `mindfuse`: batch driver for the pipeline. Results go to stdout, logs to
//! stderr. Exit status is 0 on success, 1 on a domain error, 2 on misuse.

mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mindfuse_core::ads::{DateRange, FilterSpec};
use mindfuse_core::config::Config;
use mindfuse_core::creative::{load_heatmap, rank_regions, read_variant_stats, F1Formula};
use mindfuse_core::mining::PillarField;
use mindfuse_core::telemetry::{write_actions_jsonl, Granularity};
use mindfuse_core::workspace::{ablation, AnalyzeParams, ClusterParams, Workspace};

use crate::render::Output;

#[derive(Debug, Parser)]
#[command(name = "mindfuse", version, about = "Marketing-intelligence pipeline over a local store")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "MINDFUSE_CONFIG")]
    config: Option<PathBuf>,
    /// Store directory; overrides the config.
    #[arg(long, global = true, env = "MINDFUSE_STORE")]
    store: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    output: OutputFormat,
    /// More log output on stderr; repeatable.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest an ad-library export (one JSON record per line).
    Ingest {
        file: PathBuf,
        /// Brand for records that lack one.
        #[arg(long)]
        brand: Option<String>,
    },
    /// List stored ads.
    Ads(FilterArgs),
    /// Extract content pillars for stored ads.
    Pillars(FilterArgs),
    /// Cluster audiences into personas.
    Personas(ClusterArgs),
    /// Cluster insights into challenges.
    Challenges(ClusterArgs),
    /// Persona-by-challenge coverage and the least covered pairings.
    Gaps {
        /// How many gaps to list; all cells when omitted.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Manage the offering catalogue.
    #[command(subcommand)]
    Offerings(OfferingsCommand),
    /// Generate one brief for a persona, challenge and offering.
    Brief {
        #[arg(long)]
        persona: String,
        #[arg(long)]
        challenge: String,
        #[arg(long)]
        offering: String,
    },
    /// Generate briefs for the top gaps.
    Propose {
        #[arg(long, default_value_t = 2)]
        top: usize,
        /// Offerings tried per gap.
        #[arg(long, default_value_t = 1)]
        fan_out: usize,
        /// Preferred brand for offerings; defaults to the corpus's main brand.
        #[arg(long)]
        brand: Option<String>,
    },
    /// List stored briefs, or show one.
    Briefs {
        #[arg(long)]
        id: Option<String>,
    },
    /// Import campaign telemetry and build the analysis prompt.
    #[command(subcommand)]
    Telemetry(TelemetryCommand),
    /// Salient regions of an attention heatmap.
    #[command(subcommand)]
    Heatmap(HeatmapCommand),
    /// Layout degradation report from element-removal variants.
    #[command(subcommand)]
    Ablation(AblationCommand),
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Repeatable.
    #[arg(long)]
    brand: Vec<String>,
    /// Any of these keywords; repeatable.
    #[arg(long)]
    keyword: Vec<String>,
    /// All of these keywords; repeatable.
    #[arg(long = "all-keyword")]
    all_keyword: Vec<String>,
    /// Ads running on or after this date (YYYY-MM-DD); needs --to.
    #[arg(long, requires = "to")]
    from: Option<chrono::NaiveDate>,
    #[arg(long, requires = "from")]
    to: Option<chrono::NaiveDate>,
}

impl FilterArgs {
    fn spec(&self) -> FilterSpec {
        let list = |v: &Vec<String>| (!v.is_empty()).then(|| v.clone());
        FilterSpec {
            brands: list(&self.brand),
            keyword_any: list(&self.keyword),
            keyword_all: list(&self.all_keyword),
            date_range: self.from.zip(self.to).map(|(from, to)| DateRange { from, to }),
        }
    }
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Clustering seed; required so runs are reproducible.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    /// Defaults to min(20, floor(sqrt n)).
    #[arg(long)]
    k_max: Option<usize>,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Debug, Subcommand)]
enum OfferingsCommand {
    /// Replace the catalogue with a JSON array or JSONL file.
    Import { file: PathBuf },
    List,
}

#[derive(Debug, Subcommand)]
enum TelemetryCommand {
    /// Append rows from a telemetry CSV.
    Import { file: PathBuf },
    /// Build the analysis prompt and optionally ask the model for actions.
    Analyze {
        /// Repeatable; each adds a table to the data section.
        #[arg(long, value_enum, default_values_t = [GranularityArg::Weekly])]
        granularity: Vec<GranularityArg>,
        /// Creative image to attach; repeatable.
        #[arg(long)]
        creative: Vec<PathBuf>,
        /// Send the prompt to the provider (default: only when it is live).
        #[arg(long, overrides_with = "no_recommend")]
        recommend: bool,
        #[arg(long)]
        no_recommend: bool,
        /// Also write the rendered prompt here.
        #[arg(long)]
        prompt_out: Option<PathBuf>,
        /// Also write parsed actions here, one JSON record per line.
        #[arg(long)]
        actions_out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GranularityArg {
    Weekly,
    Daily,
    Creative,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Weekly => Granularity::Weekly,
            GranularityArg::Daily => Granularity::Daily,
            GranularityArg::Creative => Granularity::Creative,
        }
    }
}

#[derive(Debug, Subcommand)]
enum HeatmapCommand {
    /// Rank salient regions of a heatmap JSON file.
    Regions {
        file: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        threshold: f64,
    },
}

#[derive(Debug, Subcommand)]
enum AblationCommand {
    /// Degradation report from original and variant stats CSVs.
    Report {
        original: PathBuf,
        variants: PathBuf,
        #[arg(long, value_enum, default_value_t = F1Arg::CtrLpvAndCtr)]
        f1: F1Arg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum F1Arg {
    CtrLpvAndCtr,
    LpvAndCtr,
}

impl From<F1Arg> for F1Formula {
    fn from(f: F1Arg) -> Self {
        match f {
            F1Arg::CtrLpvAndCtr => F1Formula::CtrLpvAndCtr,
            F1Arg::LpvAndCtr => F1Formula::LpvAndCtr,
        }
    }
}

/// Misuse detected after argument parsing; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(store) = &cli.store {
        config.store_path = store.clone();
    }
    Ok(config)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn open_file(path: &Path) -> Result<fs::File> {
    fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let out = Output::new(cli.output);
    let workspace = || -> Result<Workspace> { Ok(Workspace::open(&load_config(&cli)?)?) };
    match &cli.command {
        Command::Ingest { file, brand } => {
            let report = workspace()?.ingest_file(file, brand.as_deref())?;
            out.ingest(&report)
        }
        Command::Ads(filter) => out.ads(&workspace()?.ads(&filter.spec())?),
        Command::Pillars(filter) => out.pillars(&workspace()?.extract_pillars(&filter.spec())?),
        Command::Personas(args) | Command::Challenges(args) => {
            let field = match cli.command {
                Command::Personas(_) => PillarField::Audience,
                _ => PillarField::Insight,
            };
            if args.k_min == 0 || args.k_max.is_some_and(|k| k < args.k_min) {
                return Err(UsageError("need 1 <= --k-min <= --k-max".into()).into());
            }
            let params = ClusterParams {
                seed: args.seed,
                k_min: args.k_min,
                k_max: args.k_max,
                filter: args.filter.spec(),
            };
            out.run_summary(&workspace()?.cluster(field, params)?.summary())
        }
        Command::Gaps { top } => out.gaps(&workspace()?.gaps(*top)?),
        Command::Offerings(OfferingsCommand::Import { file }) => {
            out.offerings(&workspace()?.import_offerings(&read(file)?)?)
        }
        Command::Offerings(OfferingsCommand::List) => out.offerings(&workspace()?.offerings()?),
        Command::Brief {
            persona,
            challenge,
            offering,
        } => {
            let brief = workspace()?.create_brief(persona, challenge, offering)?;
            out.briefs(std::slice::from_ref(&brief))
        }
        Command::Propose { top, fan_out, brand } => {
            out.briefs(&workspace()?.propose(*top, *fan_out, brand.as_deref())?)
        }
        Command::Briefs { id: Some(id) } => out.briefs(&[workspace()?.brief(id)?]),
        Command::Briefs { id: None } => out.briefs(&workspace()?.briefs()?),
        Command::Telemetry(TelemetryCommand::Import { file }) => {
            let ws = workspace()?;
            let added = ws.import_telemetry(open_file(file)?)?;
            out.telemetry_import(added, ws.telemetry_rows()?.len())
        }
        Command::Telemetry(TelemetryCommand::Analyze {
            granularity,
            creative,
            recommend,
            no_recommend,
            prompt_out,
            actions_out,
        }) => {
            let ws = workspace()?;
            let params = AnalyzeParams {
                granularities: granularity.iter().map(|&g| g.into()).collect(),
                creatives: creative.clone(),
                recommend: if *recommend || *no_recommend { *recommend } else { ws.provider_is_live() },
                ..AnalyzeParams::default()
            };
            let analysis = ws.analyze(&params)?;
            if let Some(path) = prompt_out {
                fs::write(path, &analysis.rendered).with_context(|| format!("writing {}", path.display()))?;
            }
            if let (Some(path), Some(actions)) = (actions_out, &analysis.actions) {
                let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
                write_actions_jsonl(std::io::BufWriter::new(file), actions)?;
            }
            out.analysis(&analysis)
        }
        Command::Heatmap(HeatmapCommand::Regions { file, threshold }) => {
            let heatmap = load_heatmap(file)?;
            out.regions(&heatmap.creative_id, &rank_regions(&heatmap, *threshold)?)
        }
        Command::Ablation(AblationCommand::Report { original, variants, f1 }) => {
            let originals = read_variant_stats(open_file(original)?)?;
            let [original_row] = originals.as_slice() else {
                anyhow::bail!("{} must hold exactly one row, found {}", original.display(), originals.len());
            };
            let variants = read_variant_stats(open_file(variants)?)?;
            out.ablation(&ablation(original_row, &variants, (*f1).into())?)
        }
    }
}

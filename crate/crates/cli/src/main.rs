//! `fhirlit`: inspect bundles, summarize resources, run and score
//! evaluations, pick cohorts and serve the HTTP API.

use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fhirlit_core::chat::read_transcript;
use fhirlit_core::eval::{
    aggregate_scores, analyze_transcript_dir, run_plan, score_interactively, select_cohort, BackendSpec, Bucket,
    CohortConstraints, EvalError, GroundTruth, QuestionSet, RunPlan, ScoreSheet, StdDevKind,
};
use fhirlit_core::fhir::parse_bundle;
use fhirlit_core::pipeline::build_catalog;
use fhirlit_core::summarizer::{Summarizer, SummaryCache};
use fhirlit_server::{default_mock, AppState, ServerConfig};

/// Score sheets are files with this suffix.
const SCORE_SUFFIX: &str = ".scores.json";

#[derive(Parser)]
#[command(name = "fhirlit", version, about = "Patient-facing summaries and chat over FHIR bundles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the filtered resource catalog of a bundle, one identifier per line.
    Catalog {
        bundle: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize and interpret one resource of a bundle.
    Summarize {
        bundle: PathBuf,
        /// Logical id of the resource.
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "en")]
        locale: String,
        /// Directory holding the persistent summary cache.
        #[arg(long, default_value = ".fhirlit-cache")]
        cache_dir: PathBuf,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluation runs and their analysis.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Evaluation cohort selection.
    #[command(subcommand)]
    Cohort(CohortCommand),
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        /// Server config file (TOML, or JSON by extension).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Server config file whose filter, session and backend settings apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Date used for patient ages; defaults to the config's or today.
    #[arg(long)]
    reference_date: Option<NaiveDate>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Execute a run plan and write one transcript per patient and repetition.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "transcripts")]
        out: PathBuf,
    },
    /// Rate the answers of a transcript interactively.
    Score {
        transcript: PathBuf,
        #[arg(long)]
        reviewer: String,
        /// Question set JSON; defaults to the built-in Q1-Q7.
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Where to write the sheet; defaults to the transcript path with a
        /// `.scores.json` suffix.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean and standard deviation per question and dimension over the
    /// `*.scores.json` files in a directory.
    Aggregate {
        dir: PathBuf,
        /// Use the sample (n-1) standard deviation.
        #[arg(long)]
        sample: bool,
        /// Write the stats as JSON here; CSV always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact-match and omission analysis of one question across transcripts.
    Variability {
        dir: PathBuf,
        #[arg(long)]
        question: String,
        /// Ground-truth terms: a JSON list, or an object of lists by patient.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        questions: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CohortCommand {
    /// Choose one patient per condition bucket, balancing age and gender.
    Select {
        dir: PathBuf,
        /// JSON list of `{"name", "codes"}` buckets.
        #[arg(long)]
        buckets: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        min_with_allergies: usize,
        /// Number of buckets to draw from; defaults to all.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        reference_date: Option<NaiveDate>,
        /// Print a markdown table instead of JSON.
        #[arg(long)]
        markdown: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Live,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Catalog { bundle, common } => catalog(&bundle, &common),
        Command::Summarize {
            bundle,
            id,
            locale,
            cache_dir,
            backend,
            common,
        } => summarize(&bundle, &id, &locale, &cache_dir, backend, &common),
        Command::Eval(cmd) => eval(cmd),
        Command::Cohort(CohortCommand::Select {
            dir,
            buckets,
            seed,
            min_with_allergies,
            count,
            reference_date,
            markdown,
        }) => {
            let buckets: Vec<Bucket> = read_json(&buckets)?;
            let constraints = CohortConstraints {
                min_with_allergies,
                select_count: count,
                seed,
            };
            let date = reference_date.unwrap_or_else(today);
            match select_cohort(&dir, &buckets, &constraints, date) {
                Ok(report) if markdown => print!("{}", report.to_markdown()),
                Ok(report) => println!("{}", serde_json::to_string_pretty(&report)?),
                Err(EvalError::Infeasible(why)) => {
                    println!("{}", serde_json::to_string_pretty(&why)?);
                    eprintln!("error: no cohort satisfies the constraints");
                    return Ok(ExitCode::from(2));
                }
                Err(e) => return Err(e.into()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            port,
            host,
            data_dir,
            backend,
            config,
        } => serve(SocketAddr::new(host, port), data_dir, backend, config.as_deref()),
    }
}

fn today() -> NaiveDate {
    chrono::Utc::now().date_naive()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<ServerConfig> {
    Ok(match path {
        Some(path) => ServerConfig::load(path)?,
        None => ServerConfig::default(),
    })
}

fn apply_backend(config: &mut ServerConfig, kind: Option<BackendKind>) {
    match kind {
        Some(BackendKind::Live) => config.backend = BackendSpec::Live,
        Some(BackendKind::Mock) if config.backend == BackendSpec::Live => config.backend = default_mock(),
        _ => {}
    }
}

fn load_questions(path: Option<&Path>) -> Result<QuestionSet> {
    let questions = match path {
        Some(path) => read_json(path)?,
        None => QuestionSet::default(),
    };
    questions.validate().map_err(anyhow::Error::msg)?;
    Ok(questions)
}

fn catalog(bundle: &Path, common: &Common) -> Result<ExitCode> {
    let config = load_config(common.config.as_deref())?;
    let bytes = std::fs::read(bundle).with_context(|| format!("reading {}", bundle.display()))?;
    let parsed = parse_bundle(&bytes, &bundle.display().to_string())?;
    let date = common.reference_date.or(config.reference_date).unwrap_or_else(today);
    let catalog = build_catalog(&parsed, &config.filter, date)?;
    print!("{}", catalog.to_text());
    Ok(ExitCode::SUCCESS)
}

fn summarize(
    bundle: &Path,
    id: &str,
    locale: &str,
    cache_dir: &Path,
    backend: Option<BackendKind>,
    common: &Common,
) -> Result<ExitCode> {
    let mut config = load_config(common.config.as_deref())?;
    apply_backend(&mut config, backend);
    if !fhirlit_core::locale::is_valid_locale(locale) {
        bail!("invalid locale tag {locale:?}");
    }
    let bytes = std::fs::read(bundle).with_context(|| format!("reading {}", bundle.display()))?;
    let parsed = parse_bundle(&bytes, &bundle.display().to_string())?;
    let date = common.reference_date.or(config.reference_date).unwrap_or_else(today);
    let catalog = build_catalog(&parsed, &config.filter, date)?;
    let (_, summary_backend) = config.backend.build(&config.session)?;
    let cache = SummaryCache::persistent(cache_dir).with_context(|| format!("opening cache in {}", cache_dir.display()))?;
    let summarizer = Summarizer::new(summary_backend, config.session.backend.clone(), Arc::new(cache));

    let summary = match catalog.by_logical_id(id) {
        Some(entry) => summarizer.summarize_entry(entry, locale)?,
        None => match parsed.find(id) {
            Some(envelope) => summarizer.summarize_resource(envelope, locale)?,
            None => bail!("no resource with id {id:?} in {}", bundle.display()),
        },
    };
    let envelope = parsed.find(id).expect("resource was found above");
    let interpretation = summarizer.interpret_resource(envelope, locale)?;
    println!("{}\n\n{}\n\n{}", summary.identifier.render(), summary.summary_text, interpretation.interpretation_text);
    Ok(ExitCode::SUCCESS)
}

fn eval(cmd: EvalCommand) -> Result<ExitCode> {
    match cmd {
        EvalCommand::Run { plan, out } => {
            let plan = RunPlan::load(&plan)?;
            let meta = run_plan(&plan, &out)?;
            println!(
                "{} runs, {} questions answered, {} failed; transcripts in {}",
                meta.runs.len(),
                meta.answered,
                meta.failed,
                out.display()
            );
            Ok(if meta.failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        EvalCommand::Score {
            transcript,
            reviewer,
            questions,
            out,
        } => {
            let questions = load_questions(questions.as_deref())?;
            let events = read_transcript(&transcript).with_context(|| format!("reading {}", transcript.display()))?;
            let name = transcript
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let stdin = std::io::stdin();
            let mut input = BufReader::new(stdin.lock());
            let mut output = std::io::stdout();
            let sheet = score_interactively(&name, &events, &questions, &reviewer, &mut input, &mut output)?;
            let out = out.unwrap_or_else(|| {
                let stem = name.strip_suffix(".ndjson").unwrap_or(&name);
                transcript.with_file_name(format!("{stem}{SCORE_SUFFIX}"))
            });
            std::fs::write(&out, serde_json::to_string_pretty(&sheet)? + "\n")
                .with_context(|| format!("writing {}", out.display()))?;
            writeln!(output, "wrote {}", out.display())?;
            Ok(ExitCode::SUCCESS)
        }
        EvalCommand::Aggregate { dir, sample, out } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(SCORE_SUFFIX))
                .collect();
            paths.sort();
            let sheets = paths.iter().map(|p| read_json::<ScoreSheet>(p)).collect::<Result<Vec<_>>>()?;
            let kind = if sample { StdDevKind::Sample } else { StdDevKind::Population };
            let stats = aggregate_scores(&sheets, kind)?;
            if let Some(out) = out {
                std::fs::write(&out, serde_json::to_string_pretty(&stats)? + "\n")
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            print!("{}", stats.to_csv());
            Ok(ExitCode::SUCCESS)
        }
        EvalCommand::Variability {
            dir,
            question,
            truth,
            questions,
        } => {
            let questions = load_questions(questions.as_deref())?;
            let truth: GroundTruth = read_json(&truth)?;
            let report = analyze_transcript_dir(&dir, &question, &truth, &questions)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn serve(addr: SocketAddr, data_dir: Option<PathBuf>, backend: Option<BackendKind>, config: Option<&Path>) -> Result<ExitCode> {
    let mut config = load_config(config)?;
    if let Some(dir) = data_dir {
        config.data_dir = dir;
    }
    apply_backend(&mut config, backend);
    let state = AppState::from_config(config)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(fhirlit_server::serve(state, addr))?;
    Ok(ExitCode::SUCCESS)
}

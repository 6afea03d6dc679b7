mod config;

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use debiasqa::corpus::{scan_bbq_like, scan_unqover_like, CorpusError, QuestionRecord};
use debiasqa::detector::{sweep_thresholds, write_sweep_csv, DetectionResult, SWEEP_THRESHOLDS};
use debiasqa::evaluator::{write_category_matrix, EvalReport};
use debiasqa::llmclient::{Backend, HttpBackend, MockBackend, MockScript, TranscriptEntry};
use debiasqa::pipeline::{
    load_checkpoints, read_jsonl, report_from_run_dir, write_jsonl, write_report, write_run_dir, Backends, Checkpoints,
    Pipeline, RunConfig,
};
use debiasqa::promptkit::Mode;
use debiasqa::retrieval::{load_neutral_corpus, Index};
use debiasqa::textmetrics::{CachedEmbedder, Embedder, HashingEmbedder, RemoteEmbedder};

use config::{BackendKind, DatasetFormat, EmbedderKind, Settings};

#[derive(Debug)]
pub enum CliError {
    /// Input data broke a record invariant.
    Validation(String),
    Config(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Config(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "debiasqa",
    version,
    about = "Context-adaptive debiasing for multiple-choice QA"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON file with default settings; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset file and report every invalid record
    Validate(Common),
    /// Ambiguity detection only
    Detect(Common),
    /// Neutral guidance generation only
    Guide(Common),
    /// Full pipeline for one or more modes
    Run(Common),
    /// Recompute reports from run directories
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directory (repeatable); defaults to --out
        #[arg(long = "run")]
        runs: Vec<PathBuf>,
        /// Threshold sweep over stored similarity scores
        #[arg(long, num_args = 0..=1, default_missing_value = "0.3,0.325,0.35,0.375,0.4", value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        /// Write a category x run matrix of mean bias scores to this CSV
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(c) => settings(c).and_then(|s| cmd_validate(&s)),
        Command::Detect(c) => settings(c).and_then(|s| cmd_detect(&s)),
        Command::Guide(c) => settings(c).and_then(|s| cmd_guide(&s)),
        Command::Run(c) => settings(c).and_then(|s| cmd_run(&s)),
        Command::Report {
            common,
            runs,
            sweep,
            matrix,
        } => settings(common).and_then(|s| cmd_report(&s, runs, sweep, matrix)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn settings(c: Common) -> Result<Settings, CliError> {
    Settings::merged(c.config.as_deref(), c.settings)
}

fn scan_dataset(s: &Settings) -> Result<Vec<Result<QuestionRecord, CorpusError>>, CliError> {
    let path = s.dataset()?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(match s.dataset_format.unwrap_or_default() {
        DatasetFormat::Bbq => scan_bbq_like(&text),
        DatasetFormat::Unqover => scan_unqover_like(&text, s.dataset_seed.unwrap_or(0)),
    })
}

fn load_dataset(s: &Settings) -> Result<Vec<QuestionRecord>, CliError> {
    let records = scan_dataset(s)?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Validation(format!("{}: {e}", s.dataset().unwrap().display())))?;
    if records.is_empty() {
        return Err(CliError::Validation("dataset has no records".into()));
    }
    Ok(records)
}

fn cmd_validate(s: &Settings) -> Result<(), CliError> {
    let results = scan_dataset(s)?;
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut bad = 0;
    let mut by_type: HashMap<String, usize> = HashMap::new();
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(rec) => {
                if let Some(first) = seen.insert(rec.id.clone(), i) {
                    bad += 1;
                    println!("record {}: duplicate id (first seen as record {})", rec.id, first + 1);
                }
                *by_type
                    .entry(format!("{}/{}", rec.category, rec.question_type))
                    .or_default() += 1;
            }
            Err(e) => {
                bad += 1;
                println!("{e}");
            }
        }
    }
    let mut groups: Vec<_> = by_type.into_iter().collect();
    groups.sort();
    for (group, n) in &groups {
        println!("{group}: {n}");
    }
    println!("{} records, {} invalid", results.len(), bad);
    if bad > 0 {
        return Err(CliError::Validation(format!("{bad} invalid record(s)")));
    }
    Ok(())
}

/// One backend per pipeline role; the mock script serves all three.
struct Roles {
    answerer: Box<dyn Backend>,
    reasoner: Option<Box<dyn Backend>>,
    generator: Option<Box<dyn Backend>>,
}

impl Roles {
    fn backends(&self) -> Backends<'_> {
        let answerer = self.answerer.as_ref();
        Backends {
            reasoner: self.reasoner.as_deref().unwrap_or(answerer),
            generator: self.generator.as_deref().unwrap_or(answerer),
            answerer,
        }
    }
}

fn build_backends(s: &Settings) -> Result<Roles, CliError> {
    match s.backend.unwrap_or_default() {
        BackendKind::Mock => {
            let path = s
                .mock_script
                .as_deref()
                .ok_or_else(|| CliError::Config("--backend mock needs --mock-script".into()))?;
            if !path.is_file() {
                return Err(CliError::Io(format!("{}: no such file", path.display())));
            }
            let script = MockScript::load(path).map_err(config_err)?;
            let answerer = Box::new(MockBackend::new(script).map_err(config_err)?);
            Ok(Roles {
                answerer,
                reasoner: None,
                generator: None,
            })
        }
        BackendKind::Http => {
            let endpoint = s.endpoint.unwrap_or_default().into();
            let http = |model: Option<String>| -> Result<Box<dyn Backend>, CliError> {
                let b = HttpBackend::from_env(model).map_err(config_err)?;
                Ok(Box::new(b.with_endpoint(endpoint)))
            };
            Ok(Roles {
                answerer: http(s.model.clone())?,
                reasoner: s.reasoner_model.clone().map(|m| http(Some(m))).transpose()?,
                generator: s.generator_model.clone().map(|m| http(Some(m))).transpose()?,
            })
        }
    }
}

fn build_embedder(s: &Settings) -> Result<Box<dyn Embedder>, CliError> {
    match s.embedder.unwrap_or_default() {
        EmbedderKind::Hash => Ok(Box::new(HashingEmbedder::default())),
        EmbedderKind::Remote => {
            let model = s
                .embed_model
                .clone()
                .ok_or_else(|| CliError::Config("--embedder remote needs --embed-model".into()))?;
            let remote = RemoteEmbedder::from_env(model).map_err(config_err)?;
            match &s.embed_cache {
                Some(path) => Ok(Box::new(CachedEmbedder::open(remote, path).map_err(io_err)?)),
                None => Ok(Box::new(remote)),
            }
        }
    }
}

struct Corpus {
    embedder: Box<dyn Embedder>,
    index: Index,
}

fn build_corpus(s: &Settings) -> Result<Option<Corpus>, CliError> {
    let Some(path) = &s.corpus else { return Ok(None) };
    let pairs = load_neutral_corpus(path).map_err(|e| match e {
        CorpusError::Io { .. } => io_err(e),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })?;
    let embedder = build_embedder(s)?;
    let index = Index::build(pairs, embedder.as_ref()).map_err(config_err)?;
    Ok(Some(Corpus { embedder, index }))
}

fn pipeline<'a>(
    cfg: RunConfig,
    roles: &'a Roles,
    corpus: Option<&'a Corpus>,
    checkpoints: Checkpoints,
) -> Pipeline<'a> {
    let p = Pipeline::new(cfg, roles.backends()).with_checkpoints(checkpoints);
    match corpus {
        Some(c) => p.with_corpus(&c.index, c.embedder.as_ref()),
        None => p,
    }
}

fn checkpoints(s: &Settings, dir: &Path) -> Result<Checkpoints, CliError> {
    if s.resume && dir.is_dir() {
        load_checkpoints(dir).map_err(io_err)
    } else {
        Ok(Checkpoints::default())
    }
}

fn write_stage(
    dir: &Path,
    cfg: &RunConfig,
    name: &str,
    write: impl FnOnce(&Path) -> Result<(), debiasqa::pipeline::PipelineError>,
    transcript: &[TranscriptEntry],
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let cfg_json = serde_json::to_string_pretty(cfg).expect("config serializes") + "\n";
    std::fs::write(dir.join("config.json"), cfg_json).map_err(io_err)?;
    write(&dir.join(name)).map_err(io_err)?;
    write_jsonl(&dir.join("transcript.jsonl"), transcript).map_err(io_err)
}

fn cmd_detect(s: &Settings) -> Result<(), CliError> {
    let records = load_dataset(s)?;
    let out = s.out()?.to_path_buf();
    let roles = build_backends(s)?;
    let cfg = s.run_config(Mode::Decap)?;
    let p = pipeline(cfg.clone(), &roles, None, checkpoints(s, &out)?);
    let mut transcript = Vec::new();
    let detections = p.detect_stage(&records, &mut transcript);
    write_stage(
        &out,
        p.config(),
        "detections.jsonl",
        |path| write_jsonl(path, &detections),
        &transcript,
    )?;
    let ambiguous = detections
        .iter()
        .filter(|d| d.predicted_type == debiasqa::corpus::QuestionType::Ambiguous)
        .count();
    let failed = detections.iter().filter(|d| d.error.is_some()).count();
    println!(
        "{} records: {} predicted ambiguous, {} unambiguous, {} reasoner failures",
        detections.len(),
        ambiguous,
        detections.len() - ambiguous,
        failed
    );
    Ok(())
}

fn cmd_guide(s: &Settings) -> Result<(), CliError> {
    let records = load_dataset(s)?;
    let out = s.out()?.to_path_buf();
    let mode = s.modes()?.into_iter().find(|m| m.needs_corpus()).unwrap_or(Mode::Decap);
    let corpus = build_corpus(s)?.ok_or_else(|| CliError::Config("guidance needs --corpus".into()))?;
    let roles = build_backends(s)?;
    let p = pipeline(s.run_config(mode)?, &roles, Some(&corpus), checkpoints(s, &out)?);
    let mut transcript = Vec::new();
    let guidance = p.guidance_stage(&records, &mut transcript).map_err(config_err)?;
    write_stage(
        &out,
        p.config(),
        "guidance.jsonl",
        |path| write_jsonl(path, &guidance),
        &transcript,
    )?;
    let failed = guidance.iter().filter(|g| !g.succeeded()).count();
    println!(
        "{} records: {} with guidance, {} without",
        guidance.len(),
        guidance.len() - failed,
        failed
    );
    Ok(())
}

fn cmd_run(s: &Settings) -> Result<(), CliError> {
    let records = load_dataset(s)?;
    let modes = s.modes()?;
    let out = s.out()?.to_path_buf();
    let configs = modes.iter().map(|&m| s.run_config(m)).collect::<Result<Vec<_>, _>>()?;
    let corpus = if modes.iter().any(|m| m.needs_corpus()) {
        Some(build_corpus(s)?.ok_or_else(|| CliError::Config("the selected mode needs --corpus".into()))?)
    } else {
        None
    };
    let roles = build_backends(s)?;
    for cfg in configs {
        let dir = if modes.len() > 1 {
            out.join(cfg.mode.as_str())
        } else {
            out.clone()
        };
        let mode = cfg.mode;
        let p = pipeline(cfg, &roles, corpus.as_ref(), checkpoints(s, &dir)?);
        let output = p.run_dataset(&records).map_err(config_err)?;
        write_run_dir(&dir, &output).map_err(io_err)?;
        let failures = output.transcript.iter().filter(|t| t.error.is_some()).count();
        if failures > 0 {
            log::warn!("{mode}: {failures} model call(s) failed; see transcript.jsonl");
        }
        print_summary(&output.report, &dir);
    }
    Ok(())
}

fn print_summary(report: &EvalReport, dir: &Path) {
    println!(
        "{} [{} / {}] -> {}",
        report.model,
        report.mode,
        report.template,
        dir.display()
    );
    for m in report.mean.iter().filter(|m| m.category == "ALL") {
        let qt = m.question_type.map_or("all".to_string(), |q| q.to_string());
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
        println!(
            "  {:<12} {:<12} acc {:>6}  bias {:>6}",
            m.dataset.to_string(),
            qt,
            fmt(m.accuracy),
            fmt(m.bias_score)
        );
    }
}

fn cmd_report(
    s: &Settings,
    mut runs: Vec<PathBuf>,
    sweep: Option<Vec<f64>>,
    matrix: Option<PathBuf>,
) -> Result<(), CliError> {
    if runs.is_empty() {
        runs.push(s.out()?.to_path_buf());
    }
    let records = load_dataset(s)?;
    let mut reports = Vec::new();
    for dir in &runs {
        if !dir.join("config.json").is_file() {
            return Err(CliError::Io(format!("{}: not a run directory", dir.display())));
        }
        if dir.join("answers.jsonl").is_file() {
            let report = report_from_run_dir(dir, &records).map_err(config_err)?;
            write_report(dir, &report).map_err(io_err)?;
            print_summary(&report, dir);
            reports.push(report);
        }
        if let Some(thresholds) = &sweep {
            let thresholds = if thresholds.is_empty() {
                SWEEP_THRESHOLDS.to_vec()
            } else {
                thresholds.clone()
            };
            let detections: Vec<DetectionResult> = read_jsonl(&dir.join("detections.jsonl")).map_err(io_err)?;
            let gold: HashMap<&str, _> = records.iter().map(|r| (r.id.as_str(), r.question_type)).collect();
            let scored: Vec<_> = detections
                .iter()
                .filter_map(|d| gold.get(d.record_id.as_str()).map(|&g| (d.similarity, g)))
                .collect();
            let rows = sweep_thresholds(&scored, &thresholds).map_err(config_err)?;
            let path = dir.join("sweep.csv");
            let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            write_sweep_csv(&rows, file).map_err(io_err)?;
            println!("sweep over {} thresholds -> {}", rows.len(), path.display());
        }
    }
    if let Some(path) = matrix {
        if reports.is_empty() {
            return Err(CliError::Config("--matrix needs run directories with answers".into()));
        }
        let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        write_category_matrix(&reports, records[0].dataset, file).map_err(io_err)?;
        println!("matrix of {} runs -> {}", reports.len(), path.display());
    }
    Ok(())
}

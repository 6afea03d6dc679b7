//! End-to-end orchestration: detect, retrieve, generate guidance, assemble,
//! answer, parse.
//!
//! Detection and guidance depend only on the record, so they run once per
//! record and are reused for every seed. Each seed reshuffles the options and
//! re-asks the answering model.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QuestionRecord;
use crate::detector::{
    build_reasoning_prompt, detect, detector_accuracy, DetectionResult, DetectorConfig, DetectorError,
};
use crate::evaluator::{
    aggregate, parse_answer, DetectorConfusion, DetectorSummary, EvalError, EvalReport, GuidanceSummary, ParsedAnswer,
    ReportMeta,
};
use crate::guidance::{build_guidance_prompt, guidance_result, GuidanceResult};
use crate::llmclient::{
    run_batch, Backend, BatchOutcome, CompletionRequest, GenerationParams, RetryPolicy, TranscriptEntry,
};
use crate::promptkit::{
    build_sd_explanation_prompt, derive_seed, shuffle_options, AssembledPrompt, Mode, PromptError, Template,
    DEF1_INSTRUCTION, DEF2_INSTRUCTION,
};
use crate::retrieval::{Index, RetrievalConfig};
use crate::textmetrics::Embedder;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("no records to run")]
    NoRecords,
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub template: Template,
    pub seeds: Vec<u64>,
    pub detector: DetectorConfig,
    pub retrieval: RetrievalConfig,
    pub guidance_params: GenerationParams,
    pub answer_params: GenerationParams,
    /// Seed for the corpus draw of the random-guidance ablation.
    #[serde(default)]
    pub guidance_seed: u64,
    pub max_in_flight: usize,
    /// Report label for the answering model.
    pub model: String,
    #[serde(default)]
    pub reasoner_backend: String,
    #[serde(default)]
    pub generator_backend: String,
    #[serde(default)]
    pub answerer_backend: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Decap,
            template: Template::ChoicePlus,
            seeds: vec![0, 1, 2],
            detector: DetectorConfig::default(),
            retrieval: RetrievalConfig::default(),
            guidance_params: GenerationParams::REASONING,
            answer_params: GenerationParams::ANSWER,
            guidance_seed: 0,
            max_in_flight: 4,
            model: "unknown".to_string(),
            reasoner_backend: String::new(),
            generator_backend: String::new(),
            answerer_backend: String::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.seeds.is_empty() {
            return Err(PipelineError::Config("seeds must be non-empty".into()));
        }
        if self.max_in_flight == 0 {
            return Err(PipelineError::Config("max_in_flight must be at least 1".into()));
        }
        if self.retrieval.k == 0 {
            return Err(PipelineError::Config("k must be at least 1".into()));
        }
        self.detector.validate()?;
        for p in [&self.guidance_params, &self.answer_params, &self.detector.reason_params] {
            p.validate().map_err(PipelineError::Config)?;
        }
        Ok(())
    }
}

/// Models for the three LLM roles. They may all be the same backend.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub reasoner: &'a dyn Backend,
    pub generator: &'a dyn Backend,
    pub answerer: &'a dyn Backend,
}

impl<'a> Backends<'a> {
    pub fn single(backend: &'a dyn Backend) -> Self {
        Backends {
            reasoner: backend,
            generator: backend,
            answerer: backend,
        }
    }
}

/// Stage outputs from an earlier run, reused instead of calling the models.
#[derive(Debug, Clone, Default)]
pub struct Checkpoints {
    pub detections: HashMap<String, DetectionResult>,
    pub guidance: HashMap<String, GuidanceResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordOutcome {
    pub prompt: AssembledPrompt,
    pub answer: ParsedAnswer,
    pub detection: Option<DetectionResult>,
    pub guidance: Option<GuidanceResult>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: RunConfig,
    pub detections: Vec<DetectionResult>,
    pub guidance: Vec<GuidanceResult>,
    pub prompts: Vec<AssembledPrompt>,
    pub answers: Vec<ParsedAnswer>,
    pub transcript: Vec<TranscriptEntry>,
    pub report: EvalReport,
}

pub struct Pipeline<'a> {
    config: RunConfig,
    backends: Backends<'a>,
    index: Option<&'a Index>,
    embedder: Option<&'a dyn Embedder>,
    retry: RetryPolicy,
    checkpoints: Checkpoints,
}

struct Stage<'b> {
    backend: &'b dyn Backend,
    requests: Vec<CompletionRequest>,
}

impl Stage<'_> {
    fn run(
        self,
        max_in_flight: usize,
        retry: &RetryPolicy,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Vec<BatchOutcome> {
        let outcomes = run_batch(self.backend, &self.requests, max_in_flight, retry);
        for (req, out) in self.requests.iter().zip(&outcomes) {
            if let Err(e) = out {
                log::warn!("{}: {e}", req.key);
            }
            transcript.push(TranscriptEntry::new(self.backend.id(), req, out));
        }
        outcomes
    }
}

impl<'a> Pipeline<'a> {
    pub fn new(config: RunConfig, backends: Backends<'a>) -> Self {
        let mut config = config;
        config.reasoner_backend = backends.reasoner.id().to_string();
        config.generator_backend = backends.generator.id().to_string();
        config.answerer_backend = backends.answerer.id().to_string();
        Pipeline {
            config,
            backends,
            index: None,
            embedder: None,
            retry: RetryPolicy::default(),
            checkpoints: Checkpoints::default(),
        }
    }

    pub fn with_corpus(mut self, index: &'a Index, embedder: &'a dyn Embedder) -> Self {
        self.index = Some(index);
        self.embedder = Some(embedder);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_checkpoints(mut self, checkpoints: Checkpoints) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn check(&self) -> Result<(), PipelineError> {
        self.config.validate()?;
        let mode = self.config.mode;
        if mode.needs_corpus() {
            let index = self
                .index
                .ok_or_else(|| PipelineError::Config(format!("mode {mode} needs a neutral corpus")))?;
            if mode.uses_retrieval() && self.config.retrieval.k > index.len() {
                return Err(PipelineError::Config(format!(
                    "k = {} exceeds the corpus size {}",
                    self.config.retrieval.k,
                    index.len()
                )));
            }
        }
        Ok(())
    }

    /// Ambiguity detection for every record. Cached reasons are re-scored
    /// under the current configuration without calling the model.
    pub fn detect_stage(
        &self,
        records: &[QuestionRecord],
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Vec<DetectionResult> {
        let cfg = &self.config.detector;
        let pending: Vec<&QuestionRecord> = records
            .iter()
            .filter(|r| !self.checkpoints.detections.contains_key(&r.id))
            .collect();
        let stage = Stage {
            backend: self.backends.reasoner,
            requests: pending
                .iter()
                .map(|r| CompletionRequest {
                    key: format!("detect:{}", r.id),
                    prompt: build_reasoning_prompt(r),
                    params: cfg.reason_params,
                })
                .collect(),
        };
        let outcomes = stage.run(self.config.max_in_flight, &self.retry, transcript);
        let mut fresh: HashMap<&str, DetectionResult> = HashMap::new();
        for (r, out) in pending.iter().zip(outcomes) {
            let det = match out {
                Ok(c) => detect(r, &c.text, cfg),
                Err(e) => DetectionResult {
                    error: Some(e.to_string()),
                    ..detect(r, "", cfg)
                },
            };
            fresh.insert(r.id.as_str(), det);
        }
        records
            .iter()
            .map(|r| match self.checkpoints.detections.get(&r.id) {
                Some(cached) => DetectionResult {
                    error: cached.error.clone(),
                    ..detect(r, &cached.reason_text, cfg)
                },
                None => fresh.remove(r.id.as_str()).expect("pending record has a detection"),
            })
            .collect()
    }

    fn index(&self) -> Result<(&'a Index, &'a dyn Embedder), PipelineError> {
        match (self.index, self.embedder) {
            (Some(i), Some(e)) => Ok((i, e)),
            _ => Err(PipelineError::Config("no neutral corpus configured".into())),
        }
    }

    /// Neutral guidance for every record, per the mode's guidance source.
    pub fn guidance_stage(
        &self,
        records: &[QuestionRecord],
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<Vec<GuidanceResult>, PipelineError> {
        let (index, embedder) = self.index()?;
        match self.config.mode {
            Mode::RandomGuidance => Ok(records
                .iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.guidance_seed, &r.id));
                    let pair = &index.pairs()[rng.random_range(0..index.len())];
                    GuidanceResult {
                        record_id: r.id.clone(),
                        demo_ids: vec![pair.pair_id.clone()],
                        raw_output: pair.acceptable_response.clone(),
                        guidance: pair.acceptable_response.clone(),
                        error: None,
                    }
                })
                .collect()),
            Mode::RetrievedGuidance => Ok(records
                .iter()
                .map(|r| match index.top_k(embedder, &r.query_text(), 1) {
                    Ok(top) => GuidanceResult {
                        record_id: r.id.clone(),
                        demo_ids: vec![top[0].pair_id.clone()],
                        raw_output: top[0].acceptable_response.clone(),
                        guidance: top[0].acceptable_response.clone(),
                        error: None,
                    },
                    Err(e) => failed_guidance(&r.id, vec![], e.to_string()),
                })
                .collect()),
            _ => Ok(self.generate_guidance(records, index, embedder, transcript)),
        }
    }

    fn generate_guidance(
        &self,
        records: &[QuestionRecord],
        index: &Index,
        embedder: &dyn Embedder,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Vec<GuidanceResult> {
        let k = self.config.retrieval.k;
        let mut done: HashMap<&str, GuidanceResult> = HashMap::new();
        let mut pending = Vec::new();
        for r in records {
            if let Some(cached) = self.checkpoints.guidance.get(&r.id) {
                done.insert(r.id.as_str(), cached.clone());
                continue;
            }
            match index.top_k(embedder, &r.query_text(), k) {
                Ok(demos) => {
                    let ids = demos.iter().map(|d| d.pair_id.clone()).collect::<Vec<_>>();
                    pending.push((r, ids, build_guidance_prompt(r, &demos)));
                }
                Err(e) => {
                    log::warn!("guide:{}: retrieval failed: {e}", r.id);
                    done.insert(r.id.as_str(), failed_guidance(&r.id, vec![], e.to_string()));
                }
            }
        }
        let stage = Stage {
            backend: self.backends.generator,
            requests: pending
                .iter()
                .map(|(r, _, prompt)| CompletionRequest {
                    key: format!("guide:{}", r.id),
                    prompt: prompt.clone(),
                    params: self.config.guidance_params,
                })
                .collect(),
        };
        let outcomes = stage.run(self.config.max_in_flight, &self.retry, transcript);
        for ((r, ids, _), out) in pending.into_iter().zip(outcomes) {
            let result = match out {
                Ok(c) => guidance_result(&r.id, ids, c.text),
                Err(e) => failed_guidance(&r.id, ids, e.to_string()),
            };
            if let Some(err) = &result.error {
                log::warn!("guide:{}: {err}; continuing without guidance", r.id);
            }
            done.insert(r.id.as_str(), result);
        }
        records
            .iter()
            .map(|r| done.remove(r.id.as_str()).expect("every record has guidance"))
            .collect()
    }

    fn explanation_stage(
        &self,
        records: &[QuestionRecord],
        transcript: &mut Vec<TranscriptEntry>,
    ) -> HashMap<String, String> {
        let stage = Stage {
            backend: self.backends.answerer,
            requests: records
                .iter()
                .map(|r| CompletionRequest {
                    key: format!("explain:{}", r.id),
                    prompt: build_sd_explanation_prompt(r),
                    params: self.config.guidance_params,
                })
                .collect(),
        };
        let outcomes = stage.run(self.config.max_in_flight, &self.retry, transcript);
        records
            .iter()
            .zip(outcomes)
            .filter_map(|(r, out)| out.ok().map(|c| (r.id.clone(), c.text)))
            .collect()
    }

    fn assemble(
        &self,
        record: &QuestionRecord,
        seed: u64,
        detection: Option<&DetectionResult>,
        guidance: Option<&GuidanceResult>,
        explanation: Option<&String>,
    ) -> Result<AssembledPrompt, PromptError> {
        let mode = self.config.mode;
        let prefix = match mode {
            Mode::Def1 => Some(DEF1_INSTRUCTION.to_string()),
            Mode::Def2 => Some(DEF2_INSTRUCTION.to_string()),
            m if m.uses_detection() => detection.map(|d| d.prefix.clone()),
            _ => None,
        };
        let wants_guidance = mode.needs_corpus();
        let ng = guidance.and_then(|g| g.guidance()).map(str::to_string);
        let fallback = wants_guidance && ng.is_none();
        // SD without an explanation degrades to the base prompt
        let (mode_used, explanation) = match (mode, explanation) {
            (Mode::Sd, None) => (Mode::Base, None),
            (_, e) => (mode, e.cloned()),
        };
        let mut prompt = AssembledPrompt::new(
            record,
            mode_used,
            self.config.template,
            prefix,
            ng,
            explanation,
            fallback,
            shuffle_options(record, seed),
        )?;
        prompt.mode = mode;
        Ok(prompt)
    }

    fn answer_stage(
        &self,
        records: &[QuestionRecord],
        prompts: &[AssembledPrompt],
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Vec<ParsedAnswer> {
        let stage = Stage {
            backend: self.backends.answerer,
            requests: prompts
                .iter()
                .map(|p| CompletionRequest {
                    key: format!("answer:{}:{}", p.record_id, p.seed),
                    prompt: p.body.clone(),
                    params: self.config.answer_params.with_seed(Some(p.seed)),
                })
                .collect(),
        };
        let outcomes = stage.run(self.config.max_in_flight, &self.retry, transcript);
        records
            .iter()
            .zip(prompts)
            .zip(outcomes)
            .map(|((r, p), out)| {
                let raw = out.map(|c| c.text).unwrap_or_default();
                parse_answer(&r.id, p.seed, &raw, &p.letter_map, &r.options)
            })
            .collect()
    }

    /// Runs every stage on one record for one seed.
    pub fn run_record(
        &self,
        record: &QuestionRecord,
        seed: u64,
    ) -> Result<(RecordOutcome, Vec<TranscriptEntry>), PipelineError> {
        self.check()?;
        let records = std::slice::from_ref(record);
        let mut transcript = Vec::new();
        let (detections, guidance, explanations) = self.record_stages(records, &mut transcript)?;
        let prompt = self.assemble(
            record,
            seed,
            detections.first(),
            guidance.first(),
            explanations.get(&record.id),
        )?;
        let answer = self
            .answer_stage(records, std::slice::from_ref(&prompt), &mut transcript)
            .remove(0);
        Ok((
            RecordOutcome {
                prompt,
                answer,
                detection: detections.into_iter().next(),
                guidance: guidance.into_iter().next(),
            },
            transcript,
        ))
    }

    #[allow(clippy::type_complexity)]
    fn record_stages(
        &self,
        records: &[QuestionRecord],
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<(Vec<DetectionResult>, Vec<GuidanceResult>, HashMap<String, String>), PipelineError> {
        let mode = self.config.mode;
        let detections = if mode.uses_detection() {
            self.detect_stage(records, transcript)
        } else {
            Vec::new()
        };
        let guidance = if mode.needs_corpus() {
            self.guidance_stage(records, transcript)?
        } else {
            Vec::new()
        };
        let explanations = if mode == Mode::Sd {
            self.explanation_stage(records, transcript)
        } else {
            HashMap::new()
        };
        Ok((detections, guidance, explanations))
    }

    pub fn run_dataset(&self, records: &[QuestionRecord]) -> Result<RunOutput, PipelineError> {
        self.check()?;
        if records.is_empty() {
            return Err(PipelineError::NoRecords);
        }
        let mut transcript = Vec::new();
        let (detections, guidance, explanations) = self.record_stages(records, &mut transcript)?;
        let det_by_id: HashMap<&str, &DetectionResult> = detections.iter().map(|d| (d.record_id.as_str(), d)).collect();
        let guide_by_id: HashMap<&str, &GuidanceResult> = guidance.iter().map(|g| (g.record_id.as_str(), g)).collect();

        let mut prompts = Vec::new();
        let mut answers = Vec::new();
        for &seed in &self.config.seeds {
            let seed_prompts = records
                .iter()
                .map(|r| {
                    self.assemble(
                        r,
                        seed,
                        det_by_id.get(r.id.as_str()).copied(),
                        guide_by_id.get(r.id.as_str()).copied(),
                        explanations.get(&r.id),
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            answers.extend(self.answer_stage(records, &seed_prompts, &mut transcript));
            prompts.extend(seed_prompts);
        }
        let report = build_report(&self.config, records, &answers, &detections, &guidance)?;
        Ok(RunOutput {
            config: self.config.clone(),
            detections,
            guidance,
            prompts,
            answers,
            transcript,
            report,
        })
    }
}

fn failed_guidance(record_id: &str, demo_ids: Vec<String>, error: String) -> GuidanceResult {
    GuidanceResult {
        record_id: record_id.to_string(),
        demo_ids,
        raw_output: String::new(),
        guidance: String::new(),
        error: Some(error),
    }
}

/// Aggregates answers and attaches detector and guidance summaries.
pub fn build_report(
    config: &RunConfig,
    records: &[QuestionRecord],
    answers: &[ParsedAnswer],
    detections: &[DetectionResult],
    guidance: &[GuidanceResult],
) -> Result<EvalReport, PipelineError> {
    let meta = ReportMeta {
        model: config.model.clone(),
        mode: config.mode,
        template: config.template,
    };
    let mut report = aggregate(answers, records, &meta)?;
    if !detections.is_empty() {
        let gold: HashMap<&str, _> = records.iter().map(|r| (r.id.as_str(), r.question_type)).collect();
        let pairs: Vec<_> = detections
            .iter()
            .filter_map(|d| gold.get(d.record_id.as_str()).map(|&g| (d.predicted_type, g)))
            .collect();
        report.detector = Some(DetectorSummary {
            threshold: config.detector.threshold,
            confusion: DetectorConfusion::from_pairs(&pairs),
            accuracy: detector_accuracy(&pairs),
        });
    }
    if config.mode.needs_corpus() {
        let n_failed = guidance.iter().filter(|g| !g.succeeded()).count();
        report.guidance = Some(GuidanceSummary {
            n_generated: guidance.len() - n_failed,
            n_failed,
        });
    }
    Ok(report)
}

pub const RUN_FILES: [&str; 8] = [
    "config.json",
    "detections.jsonl",
    "guidance.jsonl",
    "prompts.jsonl",
    "answers.jsonl",
    "report.json",
    "report.csv",
    "transcript.jsonl",
];

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for item in items {
        let line = serde_json::to_string(item).expect("stage records serialize");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                io_err(path)(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("line {}: {e}", i + 1),
                ))
            })
        })
        .collect()
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<(), PipelineError> {
    let json_path = dir.join("report.json");
    std::fs::write(&json_path, report.to_json() + "\n").map_err(io_err(&json_path))?;
    let csv_path = dir.join("report.csv");
    let file = File::create(&csv_path).map_err(io_err(&csv_path))?;
    report.write_csv(file)?;
    Ok(())
}

/// Writes the eight run-directory artifacts.
pub fn write_run_dir(dir: &Path, output: &RunOutput) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let config_path = dir.join("config.json");
    let config = serde_json::to_string_pretty(&output.config).expect("config serializes");
    std::fs::write(&config_path, config + "\n").map_err(io_err(&config_path))?;
    write_jsonl(&dir.join("detections.jsonl"), &output.detections)?;
    write_jsonl(&dir.join("guidance.jsonl"), &output.guidance)?;
    write_jsonl(&dir.join("prompts.jsonl"), &output.prompts)?;
    write_jsonl(&dir.join("answers.jsonl"), &output.answers)?;
    write_jsonl(&dir.join("transcript.jsonl"), &output.transcript)?;
    write_report(dir, &output.report)
}

/// Loads detection and guidance checkpoints present in `dir`.
pub fn load_checkpoints(dir: &Path) -> Result<Checkpoints, PipelineError> {
    let mut cp = Checkpoints::default();
    let det = dir.join("detections.jsonl");
    if det.exists() {
        for d in read_jsonl::<DetectionResult>(&det)? {
            cp.detections.insert(d.record_id.clone(), d);
        }
    }
    let guide = dir.join("guidance.jsonl");
    if guide.exists() {
        for g in read_jsonl::<GuidanceResult>(&guide)? {
            cp.guidance.insert(g.record_id.clone(), g);
        }
    }
    Ok(cp)
}

/// Recomputes a report from a run directory's persisted answers. Raw replies
/// are re-parsed against their stored letter maps.
pub fn report_from_run_dir(dir: &Path, records: &[QuestionRecord]) -> Result<EvalReport, PipelineError> {
    let config_path = dir.join("config.json");
    let config_text = std::fs::read_to_string(&config_path).map_err(io_err(&config_path))?;
    let config: RunConfig = serde_json::from_str(&config_text)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", config_path.display())))?;
    let by_id: HashMap<&str, &QuestionRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let stored: Vec<ParsedAnswer> = read_jsonl(&dir.join("answers.jsonl"))?;
    let answers = stored
        .iter()
        .map(|a| {
            let r = by_id
                .get(a.record_id.as_str())
                .ok_or_else(|| EvalError::UnknownRecord(a.record_id.clone()))?;
            Ok(parse_answer(&a.record_id, a.seed, &a.raw, &a.letter_map, &r.options))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let detections: Vec<DetectionResult> = read_jsonl(&dir.join("detections.jsonl"))?;
    let guidance: Vec<GuidanceResult> = read_jsonl(&dir.join("guidance.jsonl"))?;
    build_report(&config, records, &answers, &detections, &guidance)
}

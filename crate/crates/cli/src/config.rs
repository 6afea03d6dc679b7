//! JSON config file plus flag overrides, resolved into concrete settings.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use debiasqa::detector::DetectorConfig;
use debiasqa::llmclient::Endpoint;
use debiasqa::pipeline::RunConfig;
use debiasqa::promptkit::{Mode, Template};
use debiasqa::retrieval::RetrievalConfig;
use debiasqa::textmetrics::RougeVariant;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    #[default]
    Bbq,
    Unqover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    #[default]
    Completions,
    Chat,
}

impl From<EndpointKind> for Endpoint {
    fn from(e: EndpointKind) -> Self {
        match e {
            EndpointKind::Completions => Endpoint::Completions,
            EndpointKind::Chat => Endpoint::Chat,
        }
    }
}

/// Settings shared by every pipeline subcommand. Each field may come from
/// the `--config` file; a flag given on the command line wins.
#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Question records (JSONL)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dataset_format: Option<DatasetFormat>,
    /// Seed for the unknown option drawn into unqover-style records
    #[arg(long)]
    pub dataset_seed: Option<u64>,
    /// Neutral question/response pairs (JSONL)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// One mode, or a comma-separated list
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub mode: Option<Vec<String>>,
    /// default, choice, or choice_plus
    #[arg(long)]
    pub template: Option<String>,
    /// Similarity below this marks a question ambiguous
    #[arg(long)]
    pub threshold: Option<f64>,
    /// rouge-l, rouge-1, or rouge-2
    #[arg(long)]
    pub rouge: Option<String>,
    /// Demonstrations retrieved per question
    #[arg(long)]
    pub k: Option<usize>,
    /// Answer seeds, comma-separated
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub guidance_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Model name sent to the HTTP backend (defaults to LLM_MODEL)
    #[arg(long)]
    pub model: Option<String>,
    /// HTTP model for detector reasoning and SD explanations (defaults to --model)
    #[arg(long)]
    pub reasoner_model: Option<String>,
    /// HTTP model for guidance generation (defaults to --model)
    #[arg(long)]
    pub generator_model: Option<String>,
    #[arg(long, value_enum)]
    pub endpoint: Option<EndpointKind>,
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderKind>,
    #[arg(long)]
    pub embed_model: Option<String>,
    /// JSONL cache for remote embeddings
    #[arg(long)]
    pub embed_cache: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Reuse detections and guidance already present in the output directory
    #[arg(long)]
    #[serde(default)]
    pub resume: bool,
}

fn one_or_many<'de, D>(d: D) -> Result<Option<Vec<String>>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match Option::<OneOrMany>::deserialize(d)? {
        None => None,
        Some(OneOrMany::One(s)) => Some(s.split(',').map(str::to_string).collect()),
        Some(OneOrMany::Many(v)) => Some(v),
    })
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),+) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )+
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut s: Settings =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut s.dataset,
            &mut s.corpus,
            &mut s.mock_script,
            &mut s.embed_cache,
            &mut s.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(s)
    }

    /// Config-file values overridden by any flag that was given.
    pub fn merged(config: Option<&Path>, flags: Settings) -> Result<Settings, CliError> {
        let mut base = match config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        overlay!(base, flags; dataset, dataset_format, dataset_seed, corpus, mode, template, threshold, rouge, k,
            seeds, guidance_seed, backend, mock_script, model, reasoner_model, generator_model, endpoint, embedder, embed_model, embed_cache, out,
            max_in_flight);
        base.resume |= flags.resume;
        Ok(base)
    }

    pub fn dataset(&self) -> Result<&Path, CliError> {
        self.dataset
            .as_deref()
            .ok_or_else(|| CliError::Config("--dataset is required".into()))
    }

    pub fn out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("--out is required".into()))
    }

    pub fn modes(&self) -> Result<Vec<Mode>, CliError> {
        let names = self.mode.clone().unwrap_or_else(|| vec!["decap".into()]);
        let modes = names
            .iter()
            .filter(|m| !m.trim().is_empty())
            .map(|m| m.parse::<Mode>().map_err(|e| CliError::Config(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if modes.is_empty() {
            return Err(CliError::Config("no mode given".into()));
        }
        Ok(modes)
    }

    pub fn run_config(&self, mode: Mode) -> Result<RunConfig, CliError> {
        let template = match &self.template {
            Some(t) => t.parse::<Template>().map_err(|e| CliError::Config(e.to_string()))?,
            None => Template::default(),
        };
        let mut detector = DetectorConfig::default();
        if let Some(t) = self.threshold {
            detector.threshold = t;
        }
        if let Some(r) = &self.rouge {
            detector.rouge_variant = r.parse::<RougeVariant>().map_err(CliError::Config)?;
        }
        let mut cfg = RunConfig {
            mode,
            template,
            detector,
            ..RunConfig::default()
        };
        if let Some(k) = self.k {
            cfg.retrieval = RetrievalConfig { k };
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(s) = self.guidance_seed {
            cfg.guidance_seed = s;
        }
        if let Some(m) = self.max_in_flight {
            cfg.max_in_flight = m;
        }
        cfg.model = self.model_label();
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn model_label(&self) -> String {
        match self.backend.unwrap_or_default() {
            BackendKind::Mock => self.model.clone().unwrap_or_else(|| "mock".into()),
            BackendKind::Http => self
                .model
                .clone()
                .or_else(|| std::env::var("LLM_MODEL").ok())
                .unwrap_or_else(|| "unknown".into()),
        }
    }
}

#![allow(dead_code)]

use std::path::PathBuf;

use debiasqa::corpus::{load_bbq_like, QuestionRecord};
use debiasqa::llmclient::{MockBackend, MockScript, RetryPolicy};
use debiasqa::pipeline::RunConfig;
use debiasqa::promptkit::{shuffle_options, Mode, Template};
use debiasqa::retrieval::{load_neutral_corpus, Index, RetrievalConfig};
use debiasqa::textmetrics::HashingEmbedder;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn records(name: &str) -> Vec<QuestionRecord> {
    load_bbq_like(fixture(name)).unwrap()
}

pub fn mock(name: &str) -> MockBackend {
    MockBackend::new(MockScript::load(fixture(name)).unwrap()).unwrap()
}

pub fn index(name: &str, embedder: &HashingEmbedder) -> Index {
    Index::build(load_neutral_corpus(fixture(name)).unwrap(), embedder).unwrap()
}

pub fn config(mode: Mode, template: Template, seeds: Vec<u64>, k: usize) -> RunConfig {
    RunConfig {
        mode,
        template,
        seeds,
        retrieval: RetrievalConfig { k },
        max_in_flight: 4,
        model: "mock".into(),
        ..RunConfig::default()
    }
}

pub fn fast_retry() -> RetryPolicy {
    RetryPolicy::no_delay()
}

/// Smallest run seed whose shuffle of `record` has the given order.
pub fn seed_for_order(record: &QuestionRecord, order: [usize; 3]) -> u64 {
    (0..10_000)
        .find(|&s| shuffle_options(record, s).order == order)
        .expect("some seed produces every order")
}

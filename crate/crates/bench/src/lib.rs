//! Shared inputs for the criterion benchmarks in `benches/`.

use std::path::{Path, PathBuf};

use epicrisis::corpus::load_records;
use epicrisis::EpicrisisRecord;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// The 20-record synthetic corpus bundled with the core tests.
pub fn fixture_corpus() -> Vec<EpicrisisRecord> {
    load_records(&fixtures_dir().join("corpus.jsonl")).expect("fixture corpus loads")
}

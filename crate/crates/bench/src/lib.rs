//! Shared inputs for the benchmarks under `benches/`.

use std::path::{Path, PathBuf};

use sqlcontam_core::dataset::Dataset;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn spider() -> Dataset {
    Dataset::load(&fixtures().join("spider")).expect("spider fixture loads")
}

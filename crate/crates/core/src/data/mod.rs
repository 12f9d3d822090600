//! Dataset ingestion: manifests, offline preprocessing, synthetic fixtures
//! and seeded batching.

mod batches;
mod fixtures;
mod manifest;
mod preprocess;

pub use batches::{batch_order, make_batches, Batch, LoadedSample};
pub use fixtures::{synthesize_fixture_dataset, FixtureFace, Jitter, FIXTURE_SIZES};
pub use manifest::{load_manifest, parse_manifest, write_manifest, PairedSample};
pub use preprocess::{preprocess, preprocess_all, PreprocessOutcome, Preprocessed};

use std::path::Path;

use log::warn;

use crate::error::Result;
use crate::regions::RegionMapping;

/// Read a manifest, preprocess any uncached samples into `cache_dir` and
/// decode everything usable into memory.
pub fn load_training_set(manifest: &Path, cache_dir: &Path, mapping: &RegionMapping) -> Result<Vec<LoadedSample>> {
    let samples = load_manifest(manifest)?;
    let outcome = preprocess_all(&samples, cache_dir, mapping)?;
    for (id, reason) in &outcome.skipped {
        warn!("skipping {id}: {reason}");
    }
    outcome.ready.iter().map(LoadedSample::load).collect()
}

#[cfg(test)]
mod tests;

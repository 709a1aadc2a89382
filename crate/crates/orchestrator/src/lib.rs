//! Stage management, persistence, command line and HTTP API for the forager workbench.

pub mod api;
pub mod runner;
pub mod stage;
pub mod store;

pub use runner::{run_stage, run_stage_with, JobState, Progress, ProgressHandle};
pub use stage::{derive_next, StageConfig, StageOverrides, StageSeed};
pub use store::{LineageRecord, RepeatOutcome, StageResult, Store, StoreError};

/// Derives the next stage from `stage_id`'s key organism and registers it.
pub fn derive_next_stage(
    store: &Store,
    stage_id: &str,
    overrides: &StageOverrides,
) -> Result<stage::DerivedStage, StoreError> {
    let prev = store.stage(stage_id)?;
    let key = store
        .lineage()?
        .key_for(stage_id)
        .map(|e| e.key_organism_id.clone())
        .ok_or_else(|| StoreError::NoKeyOrganism(stage_id.to_string()))?;
    let derived = derive_next(&prev, &key, overrides);
    store.put_stage(&derived.config)?;
    Ok(derived)
}

//! Executes the repeats of a stage on a fixed-size worker pool.

use std::sync::{Arc, Mutex};

use forage_core::ssga::{run_evolution_with, Evaluator, PhysicsEvaluator};
use forage_core::Genome;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stage::StageSeed;
use crate::store::{RepeatOutcome, StageResult, Store, StoreError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub job_id: String,
    pub state: JobState,
    /// Units of work: repeats for stage runs, 1 for analysis jobs.
    pub total: usize,
    pub done: usize,
    pub generations_total: u64,
    pub generations_done: u64,
    pub error: Option<String>,
}

/// Shared, thread-safe progress of one job.
#[derive(Clone, Debug)]
pub struct ProgressHandle(Arc<Mutex<Progress>>);

impl ProgressHandle {
    pub fn new(job_id: &str, total: usize, generations_total: u64) -> Self {
        Self(Arc::new(Mutex::new(Progress {
            job_id: job_id.to_string(),
            state: JobState::Queued,
            total,
            done: 0,
            generations_total,
            generations_done: 0,
            error: None,
        })))
    }

    pub fn snapshot(&self) -> Progress {
        self.0.lock().unwrap().clone()
    }

    pub fn update(&self, f: impl FnOnce(&mut Progress)) {
        f(&mut self.0.lock().unwrap());
    }
}

fn seed_genome(store: &Store, seed: &StageSeed) -> Result<Option<Genome>, StoreError> {
    match seed {
        StageSeed::Random => Ok(None),
        StageSeed::KeyOrganism { organism_id } => match store.lineage_genome(organism_id) {
            Ok(g) => Ok(Some(g)),
            Err(_) => store.organism(organism_id).map(Some),
        },
    }
}

/// Runs every repeat of `stage_id` that has no completion marker yet.
pub fn run_stage(store: &Store, stage_id: &str, parallelism: usize) -> Result<StageResult, StoreError> {
    run_stage_with(store, stage_id, parallelism, &PhysicsEvaluator::default(), None)
}

pub fn run_stage_with(
    store: &Store,
    stage_id: &str,
    parallelism: usize,
    evaluator: &dyn Evaluator,
    progress: Option<&ProgressHandle>,
) -> Result<StageResult, StoreError> {
    let cfg = store.stage(stage_id)?;
    let seed = seed_genome(store, &cfg.seed)?;
    let pending: Vec<usize> = (0..cfg.repeats).filter(|&k| !store.repeat_done(stage_id, k)).collect();
    if let Some(p) = progress {
        p.update(|p| {
            p.state = JobState::Running;
            p.done = cfg.repeats - pending.len();
            p.generations_done = p.done as u64 * (cfg.generations + 1);
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| StoreError::Invalid(e.to_string()))?;
    let written: Vec<Result<(), StoreError>> = pool.install(|| {
        pending
            .par_iter()
            .map(|&k| {
                let run = cfg.run_config(k, seed.as_ref());
                let result = run_evolution_with(&run, evaluator, |_| {
                    if let Some(p) = progress {
                        p.update(|p| p.generations_done += 1);
                    }
                });
                let written = match result {
                    Ok(r) => {
                        let f = r.best.fitness.clone();
                        let outcome = RepeatOutcome {
                            repeat: k,
                            run_seed: run.run_seed,
                            best_organism_id: Some(r.best.genome.content_id()),
                            best_w_bar: r.best.w_bar(),
                            sources_reached: f.as_ref().map_or(0, |f| f.sources_reached),
                            breakdown: f,
                            error: None,
                        };
                        store.write_repeat(stage_id, &outcome, &r.log, Some(&r.best.genome))
                    }
                    Err(e) => {
                        let outcome = RepeatOutcome {
                            repeat: k,
                            run_seed: run.run_seed,
                            best_organism_id: None,
                            best_w_bar: 0.0,
                            sources_reached: 0,
                            breakdown: None,
                            error: Some(e.to_string()),
                        };
                        store.write_repeat(stage_id, &outcome, &[], None)
                    }
                };
                if let Some(p) = progress {
                    p.update(|p| p.done += 1);
                }
                written
            })
            .collect()
    });
    written.into_iter().collect::<Result<Vec<()>, _>>()?;
    let result = StageResult::ranked(stage_id, store.repeat_outcomes(stage_id)?);
    store.write_result(&result)?;
    if let Some(p) = progress {
        p.update(|p| p.state = JobState::Done);
    }
    Ok(result)
}

//! Flat-file store.
//!
//! ```text
//! <root>/stages/<stage_id>/config.json
//! <root>/stages/<stage_id>/result.json
//! <root>/stages/<stage_id>/repeats/<k>/run.jsonl
//! <root>/stages/<stage_id>/repeats/<k>/best.genome.json
//! <root>/stages/<stage_id>/repeats/<k>/outcome.json
//! <root>/stages/<stage_id>/repeats/<k>/done
//! <root>/organisms/<organism_id>.json
//! <root>/lineage/lineage.json
//! <root>/lineage/<organism_id>.json
//! <root>/analysis/<organism_id>/...
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place, so
//! readers never observe a partial file.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use forage_core::fitness::FitnessBreakdown;
use forage_core::foragingtask::Placement;
use forage_core::ssga::GenerationRecord;
use forage_core::{FitnessVariant, Genome};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stage::{StageConfig, StageSeed};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown stage {0}")]
    UnknownStage(String),
    #[error("unknown organism {0}")]
    UnknownOrganism(String),
    #[error("stage {0} has no key organism")]
    NoKeyOrganism(String),
    #[error("stage {0} already exists with a different config")]
    StageExists(String),
    #[error("invalid: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub run_seed: u64,
    pub best_organism_id: Option<String>,
    pub best_w_bar: f64,
    pub sources_reached: usize,
    pub breakdown: Option<FitnessBreakdown>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage_id: String,
    /// Repeat outcomes ranked by best W̄ (failures last), ties by repeat index.
    pub repeats: Vec<RepeatOutcome>,
}

impl StageResult {
    pub fn ranked(stage_id: &str, mut repeats: Vec<RepeatOutcome>) -> Self {
        repeats.sort_by(|a, b| {
            a.error
                .is_some()
                .cmp(&b.error.is_some())
                .then(b.best_w_bar.total_cmp(&a.best_w_bar))
                .then(a.repeat.cmp(&b.repeat))
        });
        Self {
            stage_id: stage_id.to_string(),
            repeats,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub stage_id: String,
    pub key_organism_id: String,
    /// Key organism of the stage this one was seeded from; `None` for random seeds.
    pub seed_organism_id: Option<String>,
    pub repeats: usize,
    /// Per-axis noise fraction, or `None` when targets are placed uniformly.
    pub noise: Option<f64>,
    pub variant: FitnessVariant,
    pub cumulative_generations: u64,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub stage_id: String,
    pub organism_id: String,
    pub replaced: Option<String>,
    pub note: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LineageRecord {
    pub entries: Vec<LineageEntry>,
    pub audit: Vec<AuditEntry>,
}

impl LineageRecord {
    pub fn key_for(&self, stage_id: &str) -> Option<&LineageEntry> {
        self.entries.iter().find(|e| e.stage_id == stage_id)
    }
}

#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["stages", "organisms", "lineage", "analysis"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage_id: &str) -> PathBuf {
        self.root.join("stages").join(stage_id)
    }

    pub fn repeat_dir(&self, stage_id: &str, repeat: usize) -> PathBuf {
        self.stage_dir(stage_id).join("repeats").join(repeat.to_string())
    }

    pub fn analysis_dir(&self, organism_id: &str) -> PathBuf {
        self.root.join("analysis").join(organism_id)
    }

    /// Registers a stage. Re-registering an identical config is a no-op.
    pub fn put_stage(&self, cfg: &StageConfig) -> Result<(), StoreError> {
        cfg.check().map_err(StoreError::Invalid)?;
        let path = self.stage_dir(&cfg.stage_id).join("config.json");
        if path.exists() {
            let existing: StageConfig = read_json(&path)?;
            if &existing != cfg {
                return Err(StoreError::StageExists(cfg.stage_id.clone()));
            }
            return Ok(());
        }
        write_json(&path, cfg)
    }

    pub fn stage(&self, stage_id: &str) -> Result<StageConfig, StoreError> {
        let path = self.stage_dir(stage_id).join("config.json");
        if !valid_id(stage_id) || !path.exists() {
            return Err(StoreError::UnknownStage(stage_id.to_string()));
        }
        read_json(&path)
    }

    pub fn stage_ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.root.join("stages"))? {
            let entry = entry?;
            if entry.path().join("config.json").exists() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn repeat_done(&self, stage_id: &str, repeat: usize) -> bool {
        self.repeat_dir(stage_id, repeat).join("done").exists()
    }

    /// Persists a finished repeat; the completion marker is written last.
    pub fn write_repeat(
        &self,
        stage_id: &str,
        outcome: &RepeatOutcome,
        log: &[GenerationRecord],
        best: Option<&Genome>,
    ) -> Result<(), StoreError> {
        let dir = self.repeat_dir(stage_id, outcome.repeat);
        let mut lines = String::new();
        for rec in log {
            lines.push_str(&serde_json::to_string(rec)?);
            lines.push('\n');
        }
        write_atomic(&dir.join("run.jsonl"), lines.as_bytes())?;
        if let Some(g) = best {
            write_atomic(&dir.join("best.genome.json"), g.to_json().as_bytes())?;
            self.put_organism(g)?;
        }
        write_json(&dir.join("outcome.json"), outcome)?;
        write_atomic(&dir.join("done"), b"")?;
        Ok(())
    }

    pub fn repeat_outcomes(&self, stage_id: &str) -> Result<Vec<RepeatOutcome>, StoreError> {
        let cfg = self.stage(stage_id)?;
        let mut out = Vec::new();
        for k in 0..cfg.repeats {
            if self.repeat_done(stage_id, k) {
                out.push(read_json(&self.repeat_dir(stage_id, k).join("outcome.json"))?);
            }
        }
        Ok(out)
    }

    pub fn run_log(&self, stage_id: &str, repeat: usize) -> Result<Vec<GenerationRecord>, StoreError> {
        let text = fs::read_to_string(self.repeat_dir(stage_id, repeat).join("run.jsonl"))?;
        text.lines().map(|l| Ok(serde_json::from_str(l)?)).collect()
    }

    pub fn write_result(&self, result: &StageResult) -> Result<(), StoreError> {
        write_json(&self.stage_dir(&result.stage_id).join("result.json"), result)
    }

    pub fn result(&self, stage_id: &str) -> Result<Option<StageResult>, StoreError> {
        let path = self.stage_dir(stage_id).join("result.json");
        if path.exists() {
            Ok(Some(read_json(&path)?))
        } else {
            Ok(None)
        }
    }

    /// Stores a genome under its content id and returns the id.
    pub fn put_organism(&self, genome: &Genome) -> Result<String, StoreError> {
        let id = genome.content_id();
        let path = self.root.join("organisms").join(format!("{id}.json"));
        if !path.exists() {
            write_atomic(&path, genome.to_json().as_bytes())?;
        }
        Ok(id)
    }

    pub fn organism(&self, organism_id: &str) -> Result<Genome, StoreError> {
        let path = self.root.join("organisms").join(format!("{organism_id}.json"));
        if !valid_id(organism_id) || !path.exists() {
            return Err(StoreError::UnknownOrganism(organism_id.to_string()));
        }
        Genome::from_json(&fs::read_to_string(path)?).map_err(|e| StoreError::Invalid(e.to_string()))
    }

    pub fn lineage(&self) -> Result<LineageRecord, StoreError> {
        let path = self.root.join("lineage").join("lineage.json");
        if path.exists() {
            read_json(&path)
        } else {
            Ok(LineageRecord::default())
        }
    }

    /// Genome copy kept alongside the lineage.
    pub fn lineage_genome(&self, organism_id: &str) -> Result<Genome, StoreError> {
        let path = self.root.join("lineage").join(format!("{organism_id}.json"));
        if !valid_id(organism_id) || !path.exists() {
            return Err(StoreError::UnknownOrganism(organism_id.to_string()));
        }
        Genome::from_json(&fs::read_to_string(path)?).map_err(|e| StoreError::Invalid(e.to_string()))
    }

    /// Records `organism_id` as the key organism of `stage_id`.
    ///
    /// The organism must be the best of one of the stage's repeats. Marking a
    /// stage again replaces its entry in place and leaves an audit record.
    pub fn mark_key_organism(
        &self,
        stage_id: &str,
        organism_id: &str,
        note: &str,
    ) -> Result<LineageRecord, StoreError> {
        let cfg = self.stage(stage_id)?;
        let known = self
            .repeat_outcomes(stage_id)?
            .iter()
            .any(|o| o.best_organism_id.as_deref() == Some(organism_id));
        if !known {
            return Err(StoreError::UnknownOrganism(organism_id.to_string()));
        }
        let genome = self.organism(organism_id)?;
        write_atomic(
            &self.root.join("lineage").join(format!("{organism_id}.json")),
            genome.to_json().as_bytes(),
        )?;

        let mut lineage = self.lineage()?;
        let seed_organism_id = match &cfg.seed {
            StageSeed::KeyOrganism { organism_id } => Some(organism_id.clone()),
            StageSeed::Random => None,
        };
        let prior = seed_organism_id
            .as_ref()
            .and_then(|s| lineage.entries.iter().find(|e| &e.key_organism_id == s))
            .map_or(0, |e| e.cumulative_generations);
        let entry = LineageEntry {
            stage_id: stage_id.to_string(),
            key_organism_id: organism_id.to_string(),
            seed_organism_id,
            repeats: cfg.repeats,
            noise: match cfg.placement {
                Placement::Directions { noise_p, .. } => Some(noise_p),
                Placement::Uniform { .. } => None,
            },
            variant: cfg.variant,
            cumulative_generations: prior + cfg.generations,
            note: note.to_string(),
        };
        let replaced = match lineage.entries.iter_mut().find(|e| e.stage_id == stage_id) {
            Some(existing) => Some(std::mem::replace(existing, entry).key_organism_id),
            None => {
                lineage.entries.push(entry);
                None
            }
        };
        lineage.audit.push(AuditEntry {
            stage_id: stage_id.to_string(),
            organism_id: organism_id.to_string(),
            replaced,
            note: note.to_string(),
        });
        write_json(&self.root.join("lineage").join("lineage.json"), &lineage)?;
        Ok(lineage)
    }

    /// Checks that each seeded entry descends from the previous entry's stored key organism.
    pub fn verify_lineage(&self) -> Result<(), StoreError> {
        let lineage = self.lineage()?;
        for (i, e) in lineage.entries.iter().enumerate() {
            let stored = self.lineage_genome(&e.key_organism_id)?;
            if stored.content_id() != e.key_organism_id {
                return Err(StoreError::Invalid(format!(
                    "stored key of {} does not match its id",
                    e.stage_id
                )));
            }
            if let Some(seed) = &e.seed_organism_id {
                let prev = i
                    .checked_sub(1)
                    .map(|p| &lineage.entries[p])
                    .ok_or_else(|| StoreError::Invalid(format!("{} is seeded but has no predecessor", e.stage_id)))?;
                if &prev.key_organism_id != seed {
                    return Err(StoreError::Invalid(format!(
                        "{} was seeded by {seed}, but the previous key is {}",
                        e.stage_id, prev.key_organism_id
                    )));
                }
            }
        }
        Ok(())
    }
}

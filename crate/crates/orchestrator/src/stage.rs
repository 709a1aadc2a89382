//! Stage configuration and the transfer ladder.
//!
//! A stage is a batch of independent evolution runs ("repeats") that share a
//! configuration and differ only in their rng seed. After a stage the operator
//! picks a key organism, which seeds every repeat of the next, harder stage.

use forage_core::fitness::FitnessVariant;
use forage_core::foragingtask::{Placement, TaskSpec};
use forage_core::ssga::{RunConfig, SeedGenome};
use forage_core::Genome;
use serde::{Deserialize, Serialize};

/// Noise levels of the direction rungs, in ladder order.
pub const NOISE_LADDER: [f64; 3] = [0.001, 0.05, 0.5];
/// Evaluations per individual once targets are placed uniformly.
pub const UNIFORM_EVALS: usize = 4;
/// Evaluations per individual on the final rung.
pub const FINAL_EVALS: usize = 6;
/// Seconds per target on the final rung.
pub const FINAL_TIMER: f64 = 60.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageSeed {
    Random,
    KeyOrganism { organism_id: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage_id: String,
    pub seed: StageSeed,
    pub repeats: usize,
    pub generations: u64,
    pub population: usize,
    pub placement: Placement,
    pub variant: FitnessVariant,
    /// Seconds per target.
    pub timer: f64,
    pub seq_len: usize,
    /// Repeat `k` runs with seed `rng_base_seed + k`.
    pub rng_base_seed: u64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            stage_id: "stage-1".into(),
            seed: StageSeed::Random,
            repeats: 4,
            generations: 50,
            population: 200,
            placement: Placement::Directions {
                r: 4,
                noise_p: NOISE_LADDER[0],
            },
            variant: FitnessVariant::A,
            timer: 30.0,
            seq_len: 3,
            rng_base_seed: 0,
        }
    }
}

impl StageConfig {
    pub fn evals_per_individual(&self) -> usize {
        self.placement.steps()
    }

    pub fn check(&self) -> Result<(), String> {
        if self.repeats == 0 {
            return Err("repeats must be at least 1".into());
        }
        if self.population == 0 {
            return Err("population must be at least 1".into());
        }
        if self.seq_len == 0 {
            return Err("seq_len must be at least 1".into());
        }
        if self.evals_per_individual() == 0 {
            return Err("at least one evaluation per individual is required".into());
        }
        if !self.timer.is_finite() || self.timer <= 0.0 {
            return Err("timer must be positive".into());
        }
        if let Placement::Directions { noise_p, .. } = self.placement {
            if noise_p.is_nan() || noise_p < 0.0 {
                return Err("noise must be non-negative".into());
            }
        }
        if self.stage_id.is_empty()
            || !self
                .stage_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(format!("stage id {:?} must be alphanumeric, '-' or '_'", self.stage_id));
        }
        Ok(())
    }

    pub fn task(&self) -> TaskSpec {
        TaskSpec {
            placement: self.placement,
            seq_len: self.seq_len,
            timer: self.timer,
            variant: self.variant,
            ..TaskSpec::default()
        }
    }

    pub fn run_seed(&self, repeat: usize) -> u64 {
        self.rng_base_seed.wrapping_add(repeat as u64)
    }

    /// The evolution run for repeat `repeat`, given the resolved seed genome.
    pub fn run_config(&self, repeat: usize, seed: Option<&Genome>) -> RunConfig {
        RunConfig {
            seed: seed.map_or(SeedGenome::Random, |g| SeedGenome::Genome(g.clone())),
            population: self.population,
            generations: self.generations,
            task: self.task(),
            run_seed: self.run_seed(repeat),
            ..RunConfig::default()
        }
    }

    /// Ladder rung this configuration sits on, if it matches one exactly.
    pub fn rung(&self) -> Option<usize> {
        match (self.placement, self.variant) {
            (Placement::Directions { noise_p, .. }, FitnessVariant::A) => {
                NOISE_LADDER.iter().position(|&n| n == noise_p)
            }
            (Placement::Uniform { .. }, FitnessVariant::B) => Some(3),
            (Placement::Uniform { .. }, FitnessVariant::C) => Some(4),
            _ => None,
        }
    }

    /// Places this config on ladder rung `rung`, keeping unrelated settings.
    fn on_rung(mut self, rung: usize) -> Self {
        let r = match self.placement {
            Placement::Directions { r, .. } => r,
            Placement::Uniform { evals } => evals,
        };
        match rung {
            0..=2 => {
                self.placement = Placement::Directions {
                    r,
                    noise_p: NOISE_LADDER[rung],
                };
                self.variant = FitnessVariant::A;
            }
            3 => {
                self.placement = Placement::Uniform {
                    evals: if matches!(self.placement, Placement::Uniform { .. }) {
                        r
                    } else {
                        UNIFORM_EVALS
                    },
                };
                self.variant = FitnessVariant::B;
            }
            _ => {
                self.placement = Placement::Uniform { evals: FINAL_EVALS };
                self.variant = FitnessVariant::C;
                self.timer = FINAL_TIMER;
            }
        }
        self
    }
}

/// Operator changes applied on top of the ladder defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageOverrides {
    pub stage_id: Option<String>,
    pub noise: Option<f64>,
    pub uniform: Option<bool>,
    pub variant: Option<FitnessVariant>,
    pub repeats: Option<usize>,
    pub generations: Option<u64>,
    pub population: Option<usize>,
    pub timer: Option<f64>,
    pub evals: Option<usize>,
    pub rng_base_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedStage {
    pub config: StageConfig,
    pub warnings: Vec<String>,
}

/// `stage-<n>` becomes `stage-<n+1>`; anything else gets `-next` appended.
pub fn next_stage_id(id: &str) -> String {
    match id
        .rsplit_once('-')
        .and_then(|(head, n)| Some((head, n.parse::<u64>().ok()?)))
    {
        Some((head, n)) => format!("{head}-{}", n + 1),
        None => format!("{id}-next"),
    }
}

/// Next-stage config seeded by `key_organism_id`: one rung up the ladder, then overrides.
pub fn derive_next(prev: &StageConfig, key_organism_id: &str, overrides: &StageOverrides) -> DerivedStage {
    let rung = prev.rung().map_or(0, |r| (r + 1).min(4));
    let mut cfg = prev.clone().on_rung(rung);
    cfg.stage_id = next_stage_id(&prev.stage_id);
    cfg.seed = StageSeed::KeyOrganism {
        organism_id: key_organism_id.to_string(),
    };
    let default = cfg.clone();
    apply_overrides(&mut cfg, overrides);
    let mut warnings = ladder_warnings(&cfg);
    if cfg.variant != default.variant {
        warnings.push(format!(
            "variant {:?} overrides the ladder default {:?}",
            cfg.variant, default.variant
        ));
    }
    if cfg.placement != default.placement {
        warnings.push(format!(
            "placement {:?} overrides the ladder default {:?}",
            cfg.placement, default.placement
        ));
    }
    DerivedStage { config: cfg, warnings }
}

pub fn apply_overrides(cfg: &mut StageConfig, o: &StageOverrides) {
    if let Some(id) = &o.stage_id {
        cfg.stage_id = id.clone();
    }
    let r = cfg.evals_per_individual();
    if o.uniform == Some(true) {
        cfg.placement = Placement::Uniform {
            evals: o
                .evals
                .unwrap_or(if matches!(cfg.placement, Placement::Uniform { .. }) {
                    r
                } else {
                    UNIFORM_EVALS
                }),
        };
    } else if let Some(noise_p) = o.noise {
        cfg.placement = Placement::Directions {
            r: o.evals.unwrap_or(match cfg.placement {
                Placement::Directions { r, .. } => r,
                Placement::Uniform { .. } => 4,
            }),
            noise_p,
        };
    } else if let Some(evals) = o.evals {
        cfg.placement = match cfg.placement {
            Placement::Directions { noise_p, .. } => Placement::Directions { r: evals, noise_p },
            Placement::Uniform { .. } => Placement::Uniform { evals },
        };
    }
    if let Some(v) = o.variant {
        cfg.variant = v;
    }
    if let Some(v) = o.repeats {
        cfg.repeats = v;
    }
    if let Some(v) = o.generations {
        cfg.generations = v;
    }
    if let Some(v) = o.population {
        cfg.population = v;
    }
    if let Some(v) = o.timer {
        cfg.timer = v;
    }
    if let Some(v) = o.rng_base_seed {
        cfg.rng_base_seed = v;
    }
}

/// Soft consistency checks between placement and fitness variant.
pub fn ladder_warnings(cfg: &StageConfig) -> Vec<String> {
    let mut w = Vec::new();
    match (cfg.placement, cfg.variant) {
        (Placement::Directions { .. }, FitnessVariant::B | FitnessVariant::C) => w.push(format!(
            "variant {:?} is meant for uniformly placed targets, not fixed directions",
            cfg.variant
        )),
        (Placement::Uniform { .. }, FitnessVariant::A) => {
            w.push("uniform placement is normally scored with variant B or C".into())
        }
        (Placement::Directions { noise_p, .. }, FitnessVariant::A) if !NOISE_LADDER.contains(&noise_p) => {
            w.push(format!("noise {noise_p} is not on the ladder {NOISE_LADDER:?}"))
        }
        _ => {}
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn climb(n: usize) -> StageConfig {
        let mut cfg = StageConfig::default();
        for _ in 0..n {
            cfg = derive_next(&cfg, "k", &StageOverrides::default()).config;
        }
        cfg
    }

    #[test]
    fn ladder_defaults() {
        let first = StageConfig::default();
        assert_eq!(first.rung(), Some(0));
        assert_eq!(first.seed, StageSeed::Random);
        let steps: Vec<(Placement, FitnessVariant)> = (1..=4)
            .map(|n| {
                let c = climb(n);
                (c.placement, c.variant)
            })
            .collect();
        assert_eq!(
            steps,
            vec![
                (Placement::Directions { r: 4, noise_p: 0.05 }, FitnessVariant::A),
                (Placement::Directions { r: 4, noise_p: 0.5 }, FitnessVariant::A),
                (Placement::Uniform { evals: 4 }, FitnessVariant::B),
                (Placement::Uniform { evals: 6 }, FitnessVariant::C),
            ]
        );
        assert_eq!(climb(4).timer, 60.0);
        assert_eq!(climb(5).rung(), Some(4));
    }

    #[test]
    fn derived_stage_is_seeded_by_key() {
        let d = derive_next(&StageConfig::default(), "abc123", &StageOverrides::default());
        assert_eq!(
            d.config.seed,
            StageSeed::KeyOrganism {
                organism_id: "abc123".into()
            }
        );
        assert_eq!(d.config.stage_id, "stage-2");
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn variant_override_is_honored_with_warning() {
        let o = StageOverrides {
            variant: Some(FitnessVariant::C),
            ..StageOverrides::default()
        };
        let d = derive_next(&StageConfig::default(), "k", &o);
        assert_eq!(d.config.variant, FitnessVariant::C);
        assert!(!d.warnings.is_empty());
    }

    #[test]
    fn noise_and_uniform_overrides() {
        let d = derive_next(
            &StageConfig::default(),
            "k",
            &StageOverrides {
                noise: Some(0.2),
                ..Default::default()
            },
        );
        assert_eq!(d.config.placement, Placement::Directions { r: 4, noise_p: 0.2 });
        let d = derive_next(
            &StageConfig::default(),
            "k",
            &StageOverrides {
                uniform: Some(true),
                ..Default::default()
            },
        );
        assert_eq!(d.config.placement, Placement::Uniform { evals: 4 });
        assert!(!d.warnings.is_empty());
    }

    #[test]
    fn stage_ids_advance() {
        assert_eq!(next_stage_id("stage-9"), "stage-10");
        assert_eq!(next_stage_id("smoke"), "smoke-next");
    }

    #[test]
    fn repeats_differ_only_in_seed() {
        let cfg = StageConfig::default();
        let a = cfg.run_config(0, None);
        let b = cfg.run_config(3, None);
        assert_eq!(b.run_seed, a.run_seed + 3);
        assert_eq!(RunConfig { run_seed: 0, ..b }, RunConfig { run_seed: 0, ..a });
    }

    #[test]
    fn check_rejects_bad_configs() {
        assert!(StageConfig::default().check().is_ok());
        assert!(StageConfig {
            repeats: 0,
            ..Default::default()
        }
        .check()
        .is_err());
        assert!(StageConfig {
            stage_id: "../x".into(),
            ..Default::default()
        }
        .check()
        .is_err());
    }
}

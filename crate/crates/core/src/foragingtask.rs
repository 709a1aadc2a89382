//! Evaluation plans: where the food sources go.
//!
//! A plan is a list of evaluation steps. Each step is one fresh world and a
//! sequence of target offsets; the first offset is relative to the spawn
//! point and each later one to the root position at the previous absorption.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fitness::FitnessVariant;
use crate::rng::{stream, StreamRng};

/// Half side of the square placement domain, in meters.
pub const DOMAIN_HALF: f64 = 10.0;
/// Targets never appear closer than this to the organism (two absorption radii).
pub const EXCLUSION_RADIUS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    /// `r` evenly spaced directions starting at the front, with per-axis noise.
    Directions { r: usize, noise_p: f64 },
    /// `evals` steps whose targets are drawn uniformly over the domain.
    Uniform { evals: usize },
}

impl Placement {
    pub fn steps(&self) -> usize {
        match *self {
            Placement::Directions { r, .. } => r,
            Placement::Uniform { evals } => evals,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub placement: Placement,
    pub seq_len: usize,
    /// Seconds per target.
    pub timer: f64,
    pub variant: FitnessVariant,
    pub base_distance: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            placement: Placement::Directions { r: 4, noise_p: 0.001 },
            seq_len: 3,
            timer: 30.0,
            variant: FitnessVariant::A,
            base_distance: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    /// Base direction before noise; `None` for uniform placement.
    pub angle: Option<f64>,
    pub offsets: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    pub spec: TaskSpec,
    pub rng_seed: u64,
    pub steps: Vec<PlanStep>,
}

impl EvaluationPlan {
    pub fn timer(&self) -> f64 {
        self.spec.timer
    }

    pub fn variant(&self) -> FitnessVariant {
        self.spec.variant
    }

    /// Short hex digest of the serialized plan, logged so a generation can be replayed.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("plans serialize");
        let hash = Sha256::digest(&json);
        hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `r` angles evenly spaced around the circle, starting at 0 (straight ahead).
pub fn base_placements(r: usize) -> Vec<f64> {
    (0..r).map(|k| TAU * k as f64 / r as f64).collect()
}

/// Adds independent per-axis noise uniform in `[-p * delta, p * delta]`.
pub fn apply_noise(offset: [f64; 2], delta: f64, p: f64, rng: &mut impl Rng) -> [f64; 2] {
    if p <= 0.0 {
        return offset;
    }
    let a = p * delta;
    [
        offset[0] + rng.random_range(-a..=a),
        offset[1] + rng.random_range(-a..=a),
    ]
}

/// Uniform point in the placement square outside the exclusion disk.
pub fn uniform_offset(rng: &mut impl Rng) -> [f64; 2] {
    loop {
        let x = rng.random_range(-DOMAIN_HALF..=DOMAIN_HALF);
        let y = rng.random_range(-DOMAIN_HALF..=DOMAIN_HALF);
        if x.hypot(y) >= EXCLUSION_RADIUS {
            return [x, y];
        }
    }
}

pub fn make_plan(spec: &TaskSpec, seed: u64) -> EvaluationPlan {
    let mut rng: StreamRng = stream(&[seed]);
    let steps = match spec.placement {
        Placement::Directions { r, noise_p } => base_placements(r)
            .into_iter()
            .map(|angle| {
                let base = [spec.base_distance * angle.cos(), spec.base_distance * angle.sin()];
                let offsets = (0..spec.seq_len)
                    .map(|_| apply_noise(base, spec.base_distance, noise_p, &mut rng))
                    .collect();
                PlanStep {
                    angle: Some(angle),
                    offsets,
                }
            })
            .collect(),
        Placement::Uniform { evals } => (0..evals)
            .map(|_| PlanStep {
                angle: None,
                offsets: (0..spec.seq_len).map(|_| uniform_offset(&mut rng)).collect(),
            })
            .collect(),
    };
    EvaluationPlan {
        spec: spec.clone(),
        rng_seed: seed,
        steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn placements_start_in_front() {
        assert_eq!(base_placements(1), vec![0.0]);
        assert_eq!(base_placements(2), vec![0.0, PI]);
        assert_eq!(base_placements(4), vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]);
        let eight = base_placements(8);
        for (k, a) in eight.iter().enumerate() {
            assert!((a - k as f64 * FRAC_PI_4).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = stream(&[1]);
        assert_eq!(apply_noise([3.0, -2.0], 10.0, 0.0, &mut rng), [3.0, -2.0]);
    }

    #[test]
    fn cardinal_plan_within_a_centimeter() {
        let spec = TaskSpec::default();
        let plan = make_plan(&spec, 9);
        assert_eq!(plan.steps.len(), 4);
        for step in &plan.steps {
            let a = step.angle.unwrap();
            assert_eq!(step.offsets.len(), 3);
            for o in &step.offsets {
                assert!((o[0] - 10.0 * a.cos()).abs() <= 0.01);
                assert!((o[1] - 10.0 * a.sin()).abs() <= 0.01);
            }
        }
    }

    #[test]
    fn uniform_plan_respects_domain() {
        let spec = TaskSpec {
            placement: Placement::Uniform { evals: 6 },
            timer: 60.0,
            variant: FitnessVariant::C,
            ..TaskSpec::default()
        };
        let plan = make_plan(&spec, 3);
        assert_eq!(plan.steps.len(), 6);
        for step in &plan.steps {
            assert_eq!(step.offsets.len(), 3);
            for o in &step.offsets {
                let r = o[0].hypot(o[1]);
                assert!((4.0..=10.0 * 2f64.sqrt()).contains(&r), "{r}");
            }
        }
    }

    #[test]
    fn plans_are_seeded() {
        let spec = TaskSpec::default();
        assert_eq!(make_plan(&spec, 5), make_plan(&spec, 5));
        assert_ne!(make_plan(&spec, 5), make_plan(&spec, 6));
        assert_eq!(make_plan(&spec, 5).digest(), make_plan(&spec, 5).digest());
        assert_ne!(make_plan(&spec, 5).digest(), make_plan(&spec, 6).digest());
    }

    #[test]
    fn plan_serializes() {
        let plan = make_plan(&TaskSpec::default(), 1);
        let back: EvaluationPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
        assert_eq!(back, plan);
    }
}

//! Fitness family: approach products, locomotion term, reach bonus, and the
//! per-step compositions combined by a geometric mean.

use serde::{Deserialize, Serialize};

use crate::episode::{EpisodeRunner, EpisodeTrace, PhysicsRunner};
use crate::foragingtask::EvaluationPlan;
use crate::morphogenome::{validate, Genome, Organism};
use crate::physsim::{SimError, WorldConfig};

/// Scale of the locomotion term.
pub const LOCOMOTION_SCALE: f64 = 100.0;
/// Displacement beyond this many meters earns no extra locomotion reward.
pub const LOCOMOTION_CAP: f64 = 1.0;
/// Lower clamp on a single approach delta so every factor stays positive.
pub const MIN_DELTA: f64 = -0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FitnessVariant {
    /// Locomotion times halved approach products over all targets, plus reach bonus.
    A,
    /// As `A`, but the first target's approach is not rewarded.
    B,
    /// Number of targets reached.
    C,
}

impl std::str::FromStr for FitnessVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            other => Err(format!("unknown fitness variant {other:?}")),
        }
    }
}

/// Per-step approach deltas `d[t-1] - d[t]`, positive when closing in.
pub fn approach_deltas(start: f64, distances: &[f64]) -> Vec<f64> {
    let mut prev = start;
    distances
        .iter()
        .map(|&d| {
            let delta = prev - d;
            prev = d;
            delta
        })
        .collect()
}

pub fn w_s(deltas: &[f64]) -> f64 {
    deltas.iter().map(|d| 1.0 + d.max(MIN_DELTA)).product()
}

/// Approach product for the `s`-th target (1-based), with rewards halved per ordinal.
pub fn w_s_halved(deltas: &[f64], s: u32) -> f64 {
    let scale = 0.5f64.powi(s as i32);
    deltas.iter().map(|d| 1.0 + d.max(MIN_DELTA) * scale).product()
}

pub fn w_l(p0: [f64; 3], pf: [f64; 3]) -> f64 {
    let d = (pf[0] - p0[0]).hypot(pf[1] - p0[1]);
    LOCOMOTION_SCALE * d.min(LOCOMOTION_CAP)
}

/// Reach bonus `S * (1 + 10 S / T)^T`, evaluated in log space.
pub fn w_r(reached: usize, steps: usize) -> f64 {
    if reached == 0 {
        return 0.0;
    }
    let s = reached as f64;
    if steps == 0 {
        return s;
    }
    let t = steps as f64;
    s * (t * (10.0 * s / t).ln_1p()).exp()
}

/// Geometric mean computed in log space; any zero (or an empty list) gives 0.
pub fn w_bar(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|&w| w <= 0.0) {
        return 0.0;
    }
    if let [w] = values {
        return *w;
    }
    let mean_log = values.iter().map(|w| w.ln()).sum::<f64>() / values.len() as f64;
    mean_log.exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepBreakdown {
    /// Halved approach product per presented target.
    pub w_s_list: Vec<f64>,
    pub w_l: f64,
    pub w_r: f64,
    pub w: f64,
    pub reached: usize,
    pub steps: usize,
}

/// Scores one evaluation step from its recorded trace.
pub fn score_step(variant: FitnessVariant, trace: &EpisodeTrace) -> StepBreakdown {
    let w_s_list: Vec<f64> = trace
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| w_s_halved(&approach_deltas(t.start_distance, &t.distances), i as u32 + 1))
        .collect();
    let reached = trace.reached();
    let steps = trace.steps();
    let wl = w_l(trace.origin, trace.final_position);
    let wr = w_r(reached, steps);
    let w = compose(variant, &w_s_list, wl, wr, reached);
    StepBreakdown {
        w_s_list,
        w_l: wl,
        w_r: wr,
        w,
        reached,
        steps,
    }
}

/// Combines the terms of one step; `w_s_list[i]` belongs to target `i + 1`.
pub fn compose(variant: FitnessVariant, w_s_list: &[f64], w_l: f64, w_r: f64, reached: usize) -> f64 {
    match variant {
        FitnessVariant::A => w_l * w_s_list.iter().product::<f64>() + w_r,
        FitnessVariant::B => w_l * w_s_list.iter().skip(1).product::<f64>() + w_r,
        FitnessVariant::C => reached as f64,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessBreakdown {
    pub per_step: Vec<StepBreakdown>,
    pub w_bar: f64,
    pub sources_reached: usize,
    pub variant: FitnessVariant,
    pub valid: bool,
    pub unstable: bool,
}

impl FitnessBreakdown {
    /// Zero score for an organism that was discarded before simulation.
    pub fn invalid(variant: FitnessVariant) -> Self {
        Self {
            per_step: Vec::new(),
            w_bar: 0.0,
            sources_reached: 0,
            variant,
            valid: false,
            unstable: false,
        }
    }

    fn unstable(variant: FitnessVariant) -> Self {
        Self {
            valid: true,
            unstable: true,
            ..Self::invalid(variant)
        }
    }

    pub fn from_steps(variant: FitnessVariant, per_step: Vec<StepBreakdown>) -> Self {
        let sources_reached = per_step.iter().map(|s| s.reached).sum();
        let w_bar = match variant {
            FitnessVariant::C => sources_reached as f64,
            _ => w_bar(&per_step.iter().map(|s| s.w).collect::<Vec<_>>()),
        };
        Self {
            per_step,
            w_bar,
            sources_reached,
            variant,
            valid: true,
            unstable: false,
        }
    }
}

/// Plays every step of `plan` through `runner`. A simulation failure zeroes the score.
pub fn evaluate_with(runner: &dyn EpisodeRunner, plan: &EvaluationPlan) -> FitnessBreakdown {
    let variant = plan.variant();
    let mut per_step = Vec::with_capacity(plan.steps.len());
    for step in &plan.steps {
        match runner.run(&step.offsets, plan.timer()) {
            Ok(trace) => per_step.push(score_step(variant, &trace)),
            Err(SimError::Unstable { .. }) => return FitnessBreakdown::unstable(variant),
            Err(_) => return FitnessBreakdown::invalid(variant),
        }
    }
    FitnessBreakdown::from_steps(variant, per_step)
}

/// Validates, then simulates one fresh world per evaluation step.
pub fn evaluate(organism: &Organism, plan: &EvaluationPlan, cfg: &WorldConfig) -> FitnessBreakdown {
    if !validate(organism, cfg).valid {
        return FitnessBreakdown::invalid(plan.variant());
    }
    evaluate_with(&PhysicsRunner::new(organism.clone(), cfg.clone()), plan)
}

pub fn evaluate_genome(genome: &Genome, plan: &EvaluationPlan, cfg: &WorldConfig) -> FitnessBreakdown {
    match genome.develop() {
        Ok(o) => evaluate(&o, plan, cfg),
        Err(_) => FitnessBreakdown::invalid(plan.variant()),
    }
}

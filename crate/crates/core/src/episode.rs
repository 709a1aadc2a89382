//! Runs one organism through a sequence of food sources.
//!
//! An episode spawns a fresh world, runs the settle protocol, then steps the
//! controller until the timer of the active target expires. Each absorbed
//! target is replaced by the next offset, placed relative to the root's
//! position at absorption. Controller state carries over between targets.

use serde::{Deserialize, Serialize};

use crate::morphogenome::Organism;
use crate::neurocontroller::Controller;
use crate::physsim::{SimError, TargetRecord, TrajectoryRow, WorldConfig, WorldEvent};

/// Per-target view of an episode.
pub type TargetTrace = TargetRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub dt: f64,
    /// Root position when recording began (after settling).
    pub origin: [f64; 3],
    pub final_position: [f64; 3],
    pub targets: Vec<TargetTrace>,
    pub rows: Vec<TrajectoryRow>,
    /// Physics steps including the settle phase.
    pub simulated_steps: u64,
}

impl EpisodeTrace {
    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn reached(&self) -> usize {
        self.targets.iter().filter(|t| t.reached).count()
    }
}

/// When an episode stops once every target has been presented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EpisodeEnd {
    /// Keep stepping until the last target's timer runs out (fitness runs).
    #[default]
    TimerExpires,
    /// Stop at the absorption of the last target; analysis needs nothing after it.
    FinalAbsorption,
}

/// Anything that can play an episode: the physics world, or a test agent.
pub trait EpisodeRunner: Sync {
    /// `offsets[0]` is relative to the spawn position; each later offset is
    /// relative to the root position at the previous absorption.
    fn run_until(&self, offsets: &[[f64; 2]], timer: f64, end: EpisodeEnd) -> Result<EpisodeTrace, SimError>;

    fn run(&self, offsets: &[[f64; 2]], timer: f64) -> Result<EpisodeTrace, SimError> {
        self.run_until(offsets, timer, EpisodeEnd::TimerExpires)
    }
}

/// Episode runner backed by the rigid-body world.
#[derive(Clone, Debug)]
pub struct PhysicsRunner {
    pub organism: Organism,
    pub config: WorldConfig,
}

impl PhysicsRunner {
    pub fn new(organism: Organism, config: WorldConfig) -> Self {
        Self { organism, config }
    }
}

impl EpisodeRunner for PhysicsRunner {
    fn run_until(&self, offsets: &[[f64; 2]], timer: f64, end: EpisodeEnd) -> Result<EpisodeTrace, SimError> {
        let first = offsets.first().copied().ok_or(SimError::SequenceExhausted)?;
        let cfg = &self.config;
        let mut world = cfg.create_world(&self.organism, first, timer, offsets.len())?;
        let mut controller = Controller::build(&self.organism);
        world.settle_anticheat(&mut controller)?;
        let origin = world.origin().expect("recording started");
        let mut frame = world.sensor_frame();
        'steps: loop {
            let commands = controller.step(&frame, cfg.dt);
            let (next, events) = world.step_world(&commands)?;
            frame = next;
            for event in events {
                match event {
                    WorldEvent::Absorbed(e) => match offsets.get(e.target_index + 1) {
                        Some(offset) => {
                            world.advance_target(*offset)?;
                            frame = world.sensor_frame();
                        }
                        None if end == EpisodeEnd::FinalAbsorption => break 'steps,
                        None => {}
                    },
                    WorldEvent::TimerExpired => break 'steps,
                }
            }
        }
        let final_position = world.root_position();
        let simulated_steps = world.physics_steps();
        let (rows, targets) = world.into_records();
        Ok(EpisodeTrace {
            dt: cfg.dt,
            origin,
            final_position,
            targets,
            rows,
            simulated_steps,
        })
    }
}

/// Point agent that walks straight at the active target with a fixed speed.
///
/// Useful as a deterministic stand-in for a perfect forager: it reaches at most
/// `max_reached` targets and then stops moving.
#[derive(Clone, Debug)]
pub struct StraightLineRunner {
    pub speed: f64,
    pub dt: f64,
    pub absorption_radius: f64,
    pub max_reached: usize,
}

impl StraightLineRunner {
    pub fn new(speed: f64) -> Self {
        Self {
            speed,
            dt: 0.02,
            absorption_radius: 2.0,
            max_reached: usize::MAX,
        }
    }
}

impl EpisodeRunner for StraightLineRunner {
    fn run_until(&self, offsets: &[[f64; 2]], timer: f64, end: EpisodeEnd) -> Result<EpisodeTrace, SimError> {
        let timer_steps = ((timer / self.dt).round() as u64).max(1);
        let mut pos = [0.0f64, 0.0];
        let dist = |p: [f64; 2], t: [f64; 2]| (t[0] - p[0]).hypot(t[1] - p[1]);
        let mut target = offsets[0];
        let mut index = 0;
        let mut targets = vec![TargetRecord {
            position: target,
            start_distance: dist(pos, target),
            distances: vec![],
            reached: false,
            absorbed_at: None,
        }];
        let mut rows = Vec::new();
        let mut left = timer_steps;
        let mut done = false;
        let mut step = 0u64;
        while left > 0 {
            if !done && targets.iter().filter(|t| t.reached).count() < self.max_reached {
                let d = dist(pos, target);
                let s = (self.speed * self.dt).min(d);
                if d > 0.0 {
                    pos[0] += (target[0] - pos[0]) / d * s;
                    pos[1] += (target[1] - pos[1]) / d * s;
                }
            }
            let d = dist(pos, target);
            rows.push(TrajectoryRow {
                step,
                t: (step + 1) as f64 * self.dt,
                x: pos[0],
                y: pos[1],
                z: 0.0,
                sensor_distance: d,
                target_index: index,
            });
            step += 1;
            left -= 1;
            if done {
                continue;
            }
            let rec = targets.last_mut().unwrap();
            rec.distances.push(d);
            if d <= self.absorption_radius {
                rec.reached = true;
                rec.absorbed_at = Some([pos[0], pos[1], 0.0]);
                if let Some(off) = offsets.get(index + 1) {
                    index += 1;
                    target = [pos[0] + off[0], pos[1] + off[1]];
                    targets.push(TargetRecord {
                        position: target,
                        start_distance: dist(pos, target),
                        distances: vec![],
                        reached: false,
                        absorbed_at: None,
                    });
                    left = timer_steps;
                } else if end == EpisodeEnd::FinalAbsorption {
                    break;
                } else {
                    done = true;
                }
            }
        }
        Ok(EpisodeTrace {
            dt: self.dt,
            origin: [0.0; 3],
            final_position: [pos[0], pos[1], 0.0],
            targets,
            simulated_steps: rows.len() as u64,
            rows,
        })
    }
}

//! Core library for evolving legged virtual foragers.
//!
//! The crate is organised around the evaluation pipeline:
//!
//! - [`morphogenome`]: heritable genome, mutation, recombination, development and validity checks
//! - [`neurocontroller`]: the typed neural network that drives the joints
//! - [`physsim`]: deterministic fixed-step rigid-body world with hinge joints and food targets
//! - [`episode`]: glue that runs an organism through a sequence of targets
//! - [`foragingtask`]: target placement plans (conditional directions, noise, uniform)
//! - [`fitness`]: approach products, locomotion term, reach bonus and their compositions
//! - [`ssga`]: steady-state GA with ordered, mutually exclusive selection methods
//! - [`analysis`]: foraging maps, conditional maps, sequential foraging profiles
//!
//! Everything is deterministic given seeds; parallelism (rayon) only fans out
//! independent simulations whose results are gathered by index.

pub mod analysis;
pub mod episode;
pub mod fitness;
pub mod foragingtask;
pub mod morphogenome;
pub mod neurocontroller;
pub mod physsim;
pub mod rng;
pub mod ssga;

pub use episode::{EpisodeEnd, EpisodeRunner, EpisodeTrace, PhysicsRunner, TargetTrace};
pub use fitness::{FitnessBreakdown, FitnessVariant};
pub use foragingtask::{EvaluationPlan, Placement, TaskSpec};
pub use morphogenome::{Genome, GenomeLimits, Organism};
pub use neurocontroller::{Controller, MotorCommands, SensorFrame};
pub use physsim::{SimError, World, WorldConfig};

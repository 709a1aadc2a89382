use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episode::{EpisodeEnd, EpisodeRunner, PhysicsRunner};
use crate::foragingtask::uniform_offset;
use crate::morphogenome::Organism;
use crate::physsim::WorldConfig;
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForagingProfile {
    pub trials: usize,
    /// `success_rate[k - 1]`: fraction of trials that reached at least `k` targets.
    pub success_rate: Vec<f64>,
    /// `rate(k + 1) / rate(k)`, or 0 when `rate(k)` is 0.
    pub consecutive_ratios: Vec<f64>,
    /// Deepest target index reached per trial; unstable trials count as 0.
    pub depths: Vec<usize>,
}

impl ForagingProfile {
    pub fn from_depths(depths: Vec<usize>, seq: usize) -> Self {
        let trials = depths.len();
        let success_rate: Vec<f64> = (1..=seq)
            .map(|k| depths.iter().filter(|&&d| d >= k).count() as f64 / trials.max(1) as f64)
            .collect();
        Self {
            trials,
            consecutive_ratios: consecutive_ratios(&success_rate),
            success_rate,
            depths,
        }
    }
}

pub fn consecutive_ratios(rates: &[f64]) -> Vec<f64> {
    rates
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect()
}

/// Each trial draws `seq` sequential targets uniformly over the map domain.
pub fn foraging_profile_with(
    runner: &dyn EpisodeRunner,
    trials: usize,
    seq: usize,
    timer: f64,
    seed: u64,
) -> ForagingProfile {
    let depths: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(&[seed, trial as u64]);
            let offsets: Vec<[f64; 2]> = (0..seq).map(|_| uniform_offset(&mut rng)).collect();
            runner
                .run_until(&offsets, timer, EpisodeEnd::FinalAbsorption)
                .map(|t| t.reached())
                .unwrap_or(0)
        })
        .collect();
    ForagingProfile::from_depths(depths, seq)
}

pub fn foraging_profile(
    organism: &Organism,
    trials: usize,
    seq: usize,
    timer: f64,
    seed: u64,
    cfg: &WorldConfig,
) -> ForagingProfile {
    foraging_profile_with(
        &PhysicsRunner::new(organism.clone(), cfg.clone()),
        trials,
        seq,
        timer,
        seed,
    )
}

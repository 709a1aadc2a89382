use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::{Grid, EXTENT};
use crate::episode::{EpisodeEnd, EpisodeRunner, PhysicsRunner};
use crate::morphogenome::Organism;
use crate::physsim::{SimError, TargetRecord, WorldConfig};

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("organism did not reach the first target at {0:?}")]
    FirstTargetMissed([f64; 2]),
    #[error("first leg failed: {0}")]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
    /// Mean approach speed in m/s; positive toward the target.
    pub speed: f64,
    pub reached: bool,
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForagingMap {
    pub resolution: usize,
    pub extent: f64,
    pub timer: f64,
    /// Row-major, `resolution * resolution` cells.
    pub cells: Vec<Cell>,
    pub conditional_on: Option<[f64; 2]>,
    /// Physics steps spent on the map, settle phases included.
    pub simulated_steps: u64,
    pub diagnostics: Vec<String>,
}

impl ForagingMap {
    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.cells[row * self.resolution + col]
    }

    pub fn active(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| !c.excluded)
    }

    pub fn max_abs_speed(&self) -> f64 {
        self.active().map(|c| c.speed.abs()).fold(0.0, f64::max)
    }
}

/// Net approach over elapsed time for one target leg.
fn approach_speed(t: &TargetRecord, dt: f64) -> f64 {
    match t.distances.last() {
        Some(last) => (t.start_distance - last) / (t.distances.len() as f64 * dt),
        None => 0.0,
    }
}

struct CellRun {
    cell: Cell,
    steps: u64,
    diagnostic: Option<String>,
}

fn build_map<F>(resolution: usize, timer: f64, conditional_on: Option<[f64; 2]>, run_cell: F) -> ForagingMap
where
    F: Fn([f64; 2]) -> Result<(f64, bool, u64), String> + Sync,
{
    let grid = Grid::new(resolution);
    let coords: Vec<(usize, usize)> = grid.cells().collect();
    let runs: Vec<CellRun> = coords
        .par_iter()
        .map(|&(row, col)| {
            let [x, y] = grid.position(row, col);
            let mut cell = Cell {
                row,
                col,
                x,
                y,
                speed: 0.0,
                reached: false,
                excluded: grid.excluded(row, col),
            };
            if cell.excluded {
                return CellRun {
                    cell,
                    steps: 0,
                    diagnostic: None,
                };
            }
            match run_cell([x, y]) {
                Ok((speed, reached, steps)) => {
                    cell.speed = speed;
                    cell.reached = reached;
                    CellRun {
                        cell,
                        steps,
                        diagnostic: None,
                    }
                }
                Err(msg) => {
                    cell.excluded = true;
                    CellRun {
                        cell,
                        steps: 0,
                        diagnostic: Some(format!("cell ({row},{col}): {msg}")),
                    }
                }
            }
        })
        .collect();
    ForagingMap {
        resolution,
        extent: EXTENT,
        timer,
        simulated_steps: runs.iter().map(|r| r.steps).sum(),
        diagnostics: runs.iter().filter_map(|r| r.diagnostic.clone()).collect(),
        cells: runs.into_iter().map(|r| r.cell).collect(),
        conditional_on,
    }
}

/// One fresh episode per active cell, target at the cell center.
pub fn foraging_map_with(runner: &dyn EpisodeRunner, resolution: usize, timer: f64) -> ForagingMap {
    build_map(resolution, timer, None, |target| {
        let trace = runner
            .run_until(&[target], timer, EpisodeEnd::FinalAbsorption)
            .map_err(|e| e.to_string())?;
        let t = &trace.targets[0];
        Ok((approach_speed(t, trace.dt), t.reached, trace.simulated_steps))
    })
}

/// Map of second targets placed relative to where `first` was absorbed.
///
/// Every cell replays the first leg from scratch, so each cell costs two legs.
pub fn conditional_map_with(
    runner: &dyn EpisodeRunner,
    first: [f64; 2],
    resolution: usize,
    timer: f64,
) -> Result<ForagingMap, MapError> {
    let probe = runner.run_until(&[first], timer, EpisodeEnd::FinalAbsorption)?;
    if !probe.targets[0].reached {
        return Err(MapError::FirstTargetMissed(first));
    }
    Ok(build_map(resolution, timer, Some(first), |target| {
        let trace = runner
            .run_until(&[first, target], timer, EpisodeEnd::FinalAbsorption)
            .map_err(|e| e.to_string())?;
        match trace.targets.get(1) {
            Some(t) => Ok((approach_speed(t, trace.dt), t.reached, trace.simulated_steps)),
            None => Err("first target missed on replay".into()),
        }
    }))
}

pub fn foraging_map(organism: &Organism, resolution: usize, timer: f64, cfg: &WorldConfig) -> ForagingMap {
    foraging_map_with(&PhysicsRunner::new(organism.clone(), cfg.clone()), resolution, timer)
}

pub fn conditional_map(
    organism: &Organism,
    first: [f64; 2],
    resolution: usize,
    timer: f64,
    cfg: &WorldConfig,
) -> Result<ForagingMap, MapError> {
    conditional_map_with(
        &PhysicsRunner::new(organism.clone(), cfg.clone()),
        first,
        resolution,
        timer,
    )
}

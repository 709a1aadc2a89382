//! Deterministic fixed-step rigid-body world.
//!
//! Boxes connected by hinge joints rest on the plane `z = 0` under gravity.
//! Each step runs a kick-drift-kick update: half the gravity impulse, a
//! sequential-impulse velocity solve (joints, limits, motors, contacts with
//! Coulomb friction), a separate pseudo-velocity pass that removes positional
//! drift without adding kinetic energy, the position update, then the other
//! half of gravity. Bodies, joints and contacts are always visited in the
//! same order, so a replay with the same inputs is bit-identical.

mod body;
mod solver;

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morphogenome::Organism;
use crate::neurocontroller::{Controller, MotorCommands, SensorFrame};
use body::{Body, V3};
use solver::Row;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-adjacent blocks overlap at spawn")]
    SpawnOverlap,
    #[error("simulation became unstable at step {step}")]
    Unstable { step: u64 },
    #[error("no target remains in the sequence")]
    SequenceExhausted,
    #[error("timer already expired")]
    TimerExpired,
}

/// Motor on/off protocol run right after spawning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettleSchedule {
    /// Seconds with motors disabled while the body settles under gravity.
    pub passive: f64,
    pub cycles: u32,
    /// Seconds with motors enabled in each cycle.
    pub on: f64,
    /// Seconds with motors disabled in each cycle.
    pub off: f64,
}

impl Default for SettleSchedule {
    fn default() -> Self {
        Self {
            passive: 2.0,
            cycles: 2,
            on: 1.0,
            off: 1.0,
        }
    }
}

impl SettleSchedule {
    pub fn none() -> Self {
        Self {
            passive: 0.0,
            cycles: 0,
            on: 0.0,
            off: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub dt: f64,
    pub gravity: f64,
    pub friction: f64,
    pub density: f64,
    pub iterations: usize,
    pub absorption_radius: f64,
    /// Joint speed in rad/s reached by a motor command of 1.
    pub max_joint_speed: f64,
    pub settle: SettleSchedule,
    /// Linear (or tip) speed above which the world is declared unstable.
    pub max_speed: f64,
    /// Height of the lowest vertex above the ground at spawn.
    pub spawn_clearance: f64,
    pub probe_steps: usize,
    /// Fraction of positional error removed per step in the correction pass.
    pub correction: f64,
    /// Penetration tolerated before position correction kicks in.
    pub slop: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            gravity: 9.81,
            friction: 0.8,
            density: 500.0,
            iterations: 16,
            absorption_radius: 2.0,
            max_joint_speed: 5.0,
            settle: SettleSchedule::default(),
            max_speed: 1e3,
            spawn_clearance: 0.01,
            probe_steps: 25,
            correction: 0.2,
            slop: 5e-4,
        }
    }
}

impl WorldConfig {
    /// Builds a world with the organism spawned above the origin.
    ///
    /// `first_target` is a horizontal offset from the root's spawn position.
    pub fn create_world(
        &self,
        organism: &Organism,
        first_target: [f64; 2],
        timer: f64,
        seq_len: usize,
    ) -> Result<World, SimError> {
        World::new(self.clone(), organism, first_target, timer, seq_len)
    }

    /// Short passive run used by the validity test.
    pub fn probe(&self, organism: &Organism) -> Result<(), SimError> {
        let mut world = self.create_world(organism, [10.0, 0.0], 1.0, 1)?;
        for _ in 0..self.probe_steps {
            world.physics_step(None)?;
        }
        Ok(())
    }

    pub fn steps_for(&self, seconds: f64) -> u64 {
        (seconds / self.dt).round().max(0.0) as u64
    }
}

#[derive(Clone, Debug)]
struct Hinge {
    a: usize,
    b: usize,
    anchor_a: V3,
    anchor_b: V3,
    axis_a: V3,
    axis_b: V3,
    ref_a: V3,
    ref_b: V3,
    lo: f64,
    hi: f64,
    max_torque: f64,
}

/// Emitted when the root's center of gravity comes within the absorption radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionEvent {
    pub target_index: usize,
    pub position: [f64; 3],
    pub step_index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WorldEvent {
    Absorbed(AbsorptionEvent),
    TimerExpired,
}

/// One recorded post-settle step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub sensor_distance: f64,
    pub target_index: usize,
}

/// Distance history of one food source while it was the active target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub position: [f64; 2],
    /// Sensor distance when the target appeared (or when recording began).
    pub start_distance: f64,
    /// Sensor distance after each step, up to and including absorption.
    pub distances: Vec<f64>,
    pub reached: bool,
    pub absorbed_at: Option<[f64; 3]>,
}

pub struct World {
    cfg: WorldConfig,
    bodies: Vec<Body>,
    hinges: Vec<Hinge>,
    /// Row-major flags for block pairs that never collide (joined blocks).
    skip: Vec<bool>,
    target: [f64; 2],
    target_index: usize,
    seq_len: usize,
    target_absorbed: bool,
    timer_steps: u64,
    timer_left: u64,
    recording: bool,
    step_index: u64,
    physics_steps: u64,
    origin: Option<[f64; 3]>,
    trajectory: Vec<TrajectoryRow>,
    targets: Vec<TargetRecord>,
    forward: V3,
    contact: Vec<bool>,
    rows: Vec<Row>,
    contact_rows: Vec<(usize, usize, Option<usize>)>,
    warm: HashMap<u64, f64>,
}

// Warm-start key spaces; the low bits carry joint row or contact direction.
const JOINT_KEY: u64 = 1 << 56;
const GROUND_KEY: u64 = 2 << 56;
const PAIR_KEY: u64 = 3 << 56;

fn v3(a: [f64; 3]) -> V3 {
    Vector3::new(a[0], a[1], a[2])
}

fn perpendicular(n: &V3) -> (V3, V3) {
    let helper = if n.x.abs() < 0.9 { V3::x() } else { V3::y() };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

impl World {
    fn new(
        cfg: WorldConfig,
        organism: &Organism,
        first_target: [f64; 2],
        timer: f64,
        seq_len: usize,
    ) -> Result<World, SimError> {
        if !organism.overlapping_pairs().is_empty() {
            return Err(SimError::SpawnOverlap);
        }
        let lowest = organism
            .blocks
            .iter()
            .map(|b| b.center[2] - b.half_extents[2])
            .fold(f64::INFINITY, f64::min);
        let lift = cfg.spawn_clearance - lowest;
        let root = organism.blocks[0].center;
        let shift = V3::new(-root[0], -root[1], lift);
        let bodies: Vec<Body> = organism
            .blocks
            .iter()
            .map(|b| Body::new(v3(b.half_extents), v3(b.center) + shift, cfg.density))
            .collect();
        let hinges = organism
            .joints
            .iter()
            .map(|j| {
                let anchor = v3(j.anchor) + shift;
                let axis = v3(j.axis).normalize();
                let (reference, _) = perpendicular(&axis);
                Hinge {
                    a: j.parent,
                    b: j.child,
                    anchor_a: anchor - bodies[j.parent].pos,
                    anchor_b: anchor - bodies[j.child].pos,
                    axis_a: axis,
                    axis_b: axis,
                    ref_a: reference,
                    ref_b: reference,
                    lo: j.limits[0],
                    hi: j.limits[1],
                    max_torque: j.max_torque,
                }
            })
            .collect();
        let n = bodies.len();
        let mut skip = vec![false; n * n];
        for a in 0..n {
            for b in 0..n {
                skip[a * n + b] = a == b || organism.adjacent(a, b);
            }
        }
        let timer_steps = cfg.steps_for(timer).max(1);
        let mut world = World {
            bodies,
            hinges,
            skip,
            target: first_target,
            target_index: 0,
            seq_len: seq_len.max(1),
            target_absorbed: false,
            timer_steps,
            timer_left: timer_steps,
            recording: false,
            step_index: 0,
            physics_steps: 0,
            origin: None,
            trajectory: Vec::new(),
            targets: Vec::new(),
            forward: V3::x(),
            contact: vec![false; n],
            rows: Vec::new(),
            contact_rows: Vec::new(),
            warm: HashMap::new(),
            cfg,
        };
        let d = world.target_distance();
        world.targets.push(TargetRecord {
            position: first_target,
            start_distance: d,
            distances: Vec::new(),
            reached: false,
            absorbed_at: None,
        });
        Ok(world)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn root_position(&self) -> [f64; 3] {
        let p = self.bodies[0].pos;
        [p.x, p.y, p.z]
    }

    pub fn body_positions(&self) -> Vec<[f64; 3]> {
        self.bodies.iter().map(|b| [b.pos.x, b.pos.y, b.pos.z]).collect()
    }

    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn timer_remaining(&self) -> f64 {
        self.timer_left as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Physics steps taken so far, including the settle phase.
    pub fn physics_steps(&self) -> u64 {
        self.physics_steps
    }

    /// Root position at the end of the settle phase.
    pub fn origin(&self) -> Option<[f64; 3]> {
        self.origin
    }

    pub fn trajectory(&self) -> &[TrajectoryRow] {
        &self.trajectory
    }

    pub fn targets(&self) -> &[TargetRecord] {
        &self.targets
    }

    pub fn into_records(self) -> (Vec<TrajectoryRow>, Vec<TargetRecord>) {
        (self.trajectory, self.targets)
    }

    /// Horizontal distance from the root's center of gravity to the active target.
    pub fn target_distance(&self) -> f64 {
        let p = self.bodies[0].pos;
        (p.x - self.target[0]).hypot(p.y - self.target[1])
    }

    pub fn lowest_vertex_z(&self) -> f64 {
        self.bodies
            .iter()
            .flat_map(|b| b.vertices())
            .map(|v| v.z)
            .fold(f64::INFINITY, f64::min)
    }

    /// Kinetic plus gravitational potential energy (ground at zero).
    pub fn mechanical_energy(&self) -> f64 {
        self.bodies
            .iter()
            .map(|b| b.kinetic_energy() + b.mass * self.cfg.gravity * b.pos.z)
            .sum()
    }

    pub fn joint_angles(&self) -> Vec<f64> {
        self.hinges.iter().map(|h| self.hinge_angle(h)).collect()
    }

    fn hinge_angle(&self, h: &Hinge) -> f64 {
        let (ba, bb) = (&self.bodies[h.a], &self.bodies[h.b]);
        let axis = ba.rot * h.axis_a;
        let ra = ba.rot * h.ref_a;
        let rb = bb.rot * h.ref_b;
        let rb = rb - axis * rb.dot(&axis);
        ra.cross(&rb).dot(&axis).atan2(ra.dot(&rb))
    }

    pub fn sensor_frame(&self) -> SensorFrame {
        let p = self.bodies[0].pos;
        let (dx, dy) = (self.target[0] - p.x, self.target[1] - p.y);
        let f = self.forward;
        let mut angle = (f.x * dy - f.y * dx).atan2(f.x * dx + f.y * dy);
        if angle <= -std::f64::consts::PI {
            angle = std::f64::consts::PI;
        }
        SensorFrame {
            contact: self.contact.clone(),
            joint_angle: self.joint_angles(),
            target_angle: angle,
            target_distance: dx.hypot(dy),
        }
    }

    fn update_forward(&mut self) {
        let f = self.bodies[0].rot * V3::x();
        let h = V3::new(f.x, f.y, 0.0);
        let n = h.norm();
        if n > 1e-6 {
            self.forward = h / n;
        }
    }

    /// Gravity settle followed by motor on/off cycles; the root position afterwards becomes the origin.
    pub fn settle_anticheat(&mut self, controller: &mut Controller) -> Result<(), SimError> {
        let s = self.cfg.settle.clone();
        for _ in 0..self.cfg.steps_for(s.passive) {
            self.physics_step(None)?;
        }
        for _ in 0..s.cycles {
            for _ in 0..self.cfg.steps_for(s.on) {
                let frame = self.sensor_frame();
                let cmd = controller.step(&frame, self.cfg.dt);
                self.physics_step(Some(&cmd.0))?;
            }
            for _ in 0..self.cfg.steps_for(s.off) {
                self.physics_step(None)?;
            }
        }
        self.begin_recording();
        Ok(())
    }

    /// Marks the current root position as the origin and starts recording.
    pub fn begin_recording(&mut self) {
        if self.recording {
            return;
        }
        self.recording = true;
        self.origin = Some(self.root_position());
        let d = self.target_distance();
        self.targets[self.target_index].start_distance = d;
    }

    /// Advances one control step with the given motor commands.
    pub fn step_world(&mut self, commands: &MotorCommands) -> Result<(SensorFrame, Vec<WorldEvent>), SimError> {
        if self.timer_left == 0 {
            return Err(SimError::TimerExpired);
        }
        self.begin_recording();
        self.physics_step(Some(&commands.0))?;
        let root = self.root_position();
        let d = self.target_distance();
        self.trajectory.push(TrajectoryRow {
            step: self.step_index,
            t: (self.step_index + 1) as f64 * self.cfg.dt,
            x: root[0],
            y: root[1],
            z: root[2],
            sensor_distance: d,
            target_index: self.target_index,
        });
        let mut events = Vec::new();
        if !self.target_absorbed {
            let record = &mut self.targets[self.target_index];
            record.distances.push(d);
            if d <= self.cfg.absorption_radius {
                record.reached = true;
                record.absorbed_at = Some(root);
                self.target_absorbed = true;
                events.push(WorldEvent::Absorbed(AbsorptionEvent {
                    target_index: self.target_index,
                    position: root,
                    step_index: self.step_index,
                }));
            }
        }
        self.step_index += 1;
        self.timer_left -= 1;
        if self.timer_left == 0 {
            events.push(WorldEvent::TimerExpired);
        }
        Ok((self.sensor_frame(), events))
    }

    /// Places the next target at `offset` from the root's current horizontal position and resets the timer.
    pub fn advance_target(&mut self, offset: [f64; 2]) -> Result<(), SimError> {
        if self.target_index + 1 >= self.seq_len {
            return Err(SimError::SequenceExhausted);
        }
        let p = self.bodies[0].pos;
        self.target = [p.x + offset[0], p.y + offset[1]];
        self.target_index += 1;
        self.target_absorbed = false;
        self.timer_left = self.timer_steps;
        let d = self.target_distance();
        self.targets.push(TargetRecord {
            position: self.target,
            start_distance: d,
            distances: Vec::new(),
            reached: false,
            absorbed_at: None,
        });
        Ok(())
    }

    /// Writes the recorded trajectory as CSV.
    pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "t", "x", "y", "z", "sensor_distance", "target_index"])?;
        for r in rows {
            w.write_record([
                r.step.to_string(),
                r.t.to_string(),
                r.x.to_string(),
                r.y.to_string(),
                r.z.to_string(),
                r.sensor_distance.to_string(),
                r.target_index.to_string(),
            ])?;
        }
        w.flush()
    }

    /// Advances the physics by one timestep. `None` disables the motors.
    pub fn physics_step(&mut self, motors: Option<&[f64]>) -> Result<(), SimError> {
        let dt = self.cfg.dt;
        let half_kick = V3::new(0.0, 0.0, -0.5 * self.cfg.gravity * dt);
        for b in self.bodies.iter_mut() {
            b.vel += half_kick;
            b.update_inertia();
        }

        let mut rows = std::mem::take(&mut self.rows);
        rows.clear();
        self.contact_rows.clear();
        self.joint_rows(&mut rows, motors);
        self.ground_rows(&mut rows);
        self.pair_rows(&mut rows);

        let n = self.bodies.len();
        let mut lin: Vec<V3> = self.bodies.iter().map(|b| b.vel).collect();
        let mut ang: Vec<V3> = self.bodies.iter().map(|b| b.ang).collect();
        solver::warm_start(&mut rows, &mut lin, &mut ang, &self.warm);
        solver::solve_velocity(&mut rows, &mut lin, &mut ang, self.cfg.iterations);
        solver::remember(&rows, &mut self.warm);
        self.contact.iter_mut().for_each(|c| *c = false);
        for &(row, a, b) in &self.contact_rows {
            if rows[row].impulse > 0.0 {
                self.contact[a] = true;
                if let Some(b) = b {
                    self.contact[b] = true;
                }
            }
        }

        let mut plin = vec![V3::zeros(); n];
        let mut pang = vec![V3::zeros(); n];
        solver::solve_position(&mut rows, &mut plin, &mut pang, self.cfg.iterations);
        self.rows = rows;

        for (i, b) in self.bodies.iter_mut().enumerate() {
            b.vel = lin[i];
            b.ang = ang[i];
            b.pos += (lin[i] + plin[i]) * dt;
            let spin = UnitQuaternion::from_scaled_axis((ang[i] + pang[i]) * dt);
            b.rot = UnitQuaternion::new_normalize((spin * b.rot).into_inner());
            b.vel += half_kick;
        }
        self.physics_steps += 1;
        self.project_ground();
        if !self.bodies.iter().all(|b| b.is_sane(self.cfg.max_speed)) {
            return Err(SimError::Unstable {
                step: self.physics_steps,
            });
        }
        self.update_forward();
        Ok(())
    }

    fn joint_rows(&self, rows: &mut Vec<Row>, motors: Option<&[f64]>) {
        const LIMIT_MARGIN: f64 = 0.05;
        let dt = self.cfg.dt;
        let beta = self.cfg.correction / dt;
        let zero = V3::zeros();
        for (j, h) in self.hinges.iter().enumerate() {
            let (ba, bb) = (&self.bodies[h.a], &self.bodies[h.b]);
            let ra = ba.rot * h.anchor_a;
            let rb = bb.rot * h.anchor_b;
            let err = (bb.pos + rb) - (ba.pos + ra);
            let key = |k: u64| JOINT_KEY | (j as u64) << 4 | k;
            for (k, e) in [V3::x(), V3::y(), V3::z()].into_iter().enumerate() {
                rows.push(
                    Row::new(&self.bodies, h.a, Some(h.b), -e, -ra.cross(&e), e, rb.cross(&e))
                        .with_position(-beta * err.dot(&e))
                        .with_key(key(k as u64)),
                );
            }
            let axis = ba.rot * h.axis_a;
            let child_axis = bb.rot * h.axis_b;
            let twist = axis.cross(&child_axis);
            let (t1, t2) = perpendicular(&axis);
            for (k, t) in [(3, t1), (4, t2)] {
                rows.push(
                    Row::new(&self.bodies, h.a, Some(h.b), zero, -t, zero, t)
                        .with_position(-beta * twist.dot(&t))
                        .with_key(key(k)),
                );
            }
            let theta = self.hinge_angle(h);
            // Limit rows only stop approach; recovering a violated limit is left to
            // the position pass so it cannot add kinetic energy.
            // Motor before limits so the limit rows get the last word in each sweep.
            // The target never asks for more than reaching a limit within the step,
            // otherwise motor and limit fight and the residual leaks into contacts.
            if let Some(cmd) = motors {
                let c = cmd.get(j).copied().unwrap_or(0.0);
                let c = if c.is_finite() { c.clamp(-1.0, 1.0) } else { 0.0 };
                let limit = h.max_torque * dt;
                let reach_lo = ((h.lo - theta) / dt).min(0.0);
                let reach_hi = ((h.hi - theta) / dt).max(0.0);
                rows.push(
                    Row::new(&self.bodies, h.a, Some(h.b), zero, -axis, zero, axis)
                        .with_target((c * self.cfg.max_joint_speed).clamp(reach_lo, reach_hi))
                        .with_bounds(-limit, limit)
                        .with_key(key(5)),
                );
            }
            if theta - h.lo < LIMIT_MARGIN {
                rows.push(
                    Row::new(&self.bodies, h.a, Some(h.b), zero, -axis, zero, axis)
                        .with_target(((h.lo - theta) / dt).min(0.0))
                        .with_bounds(0.0, f64::INFINITY)
                        .with_position(beta * (h.lo - theta).max(0.0))
                        .with_key(key(6)),
                );
            }
            if h.hi - theta < LIMIT_MARGIN {
                rows.push(
                    Row::new(&self.bodies, h.a, Some(h.b), zero, axis, zero, -axis)
                        .with_target(((theta - h.hi) / dt).min(0.0))
                        .with_bounds(0.0, f64::INFINITY)
                        .with_position(beta * (theta - h.hi).max(0.0))
                        .with_key(key(7)),
                );
            }
        }
    }

    fn push_contact(&mut self, rows: &mut Vec<Row>, c: Contact) {
        let Contact {
            a,
            b,
            point,
            normal,
            target,
            depth,
            key,
        } = c;
        let beta = self.cfg.correction / self.cfg.dt;
        let ra = point - self.bodies[a].pos;
        let rb = b.map(|b| point - self.bodies[b].pos).unwrap_or_else(V3::zeros);
        let row = |d: V3| Row::new(&self.bodies, a, b, d, ra.cross(&d), -d, -rb.cross(&d));
        // Friction first: tangential impulses at an offset point disturb the
        // normal velocity, so the normal row gets the last word in each sweep.
        let idx = rows.len() + 2;
        let (t1, t2) = perpendicular(&normal);
        rows.push(row(t1).with_friction(idx, self.cfg.friction).with_key(key | 1));
        rows.push(row(t2).with_friction(idx, self.cfg.friction).with_key(key | 2));
        rows.push(
            row(normal)
                .with_target(target)
                .with_bounds(0.0, f64::INFINITY)
                .with_position(beta * (depth - self.cfg.slop).max(0.0))
                .with_key(key | 3),
        );
        self.contact_rows.push((idx, a, b));
    }

    /// Nonlinear position pass on the integrated geometry: pushes each body's
    /// deepest vertex back to the slop depth. The linearized rows miss the
    /// curvature of fast rotations, which can otherwise leave millimetres.
    fn project_ground(&mut self) {
        let slop = self.cfg.slop;
        for b in self.bodies.iter_mut() {
            if b.pos.z - b.half.norm() > 0.0 {
                continue;
            }
            for _ in 0..8 {
                let deepest = b.vertices().into_iter().min_by(|p, q| p.z.total_cmp(&q.z)).unwrap();
                let err = -deepest.z - slop;
                if err <= 0.0 {
                    break;
                }
                b.update_inertia();
                let rn = (deepest - b.pos).cross(&V3::z());
                let spin = b.inv_inertia_world * rn;
                let lambda = err / (b.inv_mass + rn.dot(&spin));
                b.pos.z += b.inv_mass * lambda;
                let turn = UnitQuaternion::from_scaled_axis(spin * lambda);
                b.rot = UnitQuaternion::new_normalize((turn * b.rot).into_inner());
            }
        }
    }

    fn ground_rows(&mut self, rows: &mut Vec<Row>) {
        let dt = self.cfg.dt;
        for i in 0..self.bodies.len() {
            let b = &self.bodies[i];
            let reach = b.half.norm();
            let margin = 0.02 + (b.vel.norm() + b.ang.norm() * reach) * dt;
            if b.pos.z - reach > margin {
                continue;
            }
            for (k, v) in b.vertices().into_iter().enumerate() {
                if v.z < margin {
                    let target = if v.z > 0.0 { -v.z / dt } else { 0.0 };
                    let key = GROUND_KEY | (i as u64) << 8 | (k as u64) << 2;
                    self.push_contact(
                        rows,
                        Contact {
                            a: i,
                            b: None,
                            point: v,
                            normal: V3::z(),
                            target,
                            depth: -v.z,
                            key,
                        },
                    );
                }
            }
        }
    }

    fn pair_rows(&mut self, rows: &mut Vec<Row>) {
        let n = self.bodies.len();
        for a in 0..n {
            for b in a + 1..n {
                if self.skip[a * n + b] {
                    continue;
                }
                let (ba, bb) = (&self.bodies[a], &self.bodies[b]);
                if (ba.pos - bb.pos).norm() > ba.half.norm() + bb.half.norm() {
                    continue;
                }
                self.vertex_contacts(rows, a, b);
                self.vertex_contacts(rows, b, a);
            }
        }
    }

    /// Contacts for vertices of `a` lying inside box `b`; normals point out of `b`.
    fn vertex_contacts(&mut self, rows: &mut Vec<Row>, a: usize, b: usize) {
        let inv = self.bodies[b].rot.inverse();
        let half = self.bodies[b].half;
        let center = self.bodies[b].pos;
        for (vk, v) in self.bodies[a].vertices().into_iter().enumerate() {
            let p = inv * (v - center);
            if (0..3).any(|k| p[k].abs() >= half[k]) {
                continue;
            }
            let (k, depth) = (0..3)
                .map(|k| (k, half[k] - p[k].abs()))
                .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
            let mut local = V3::zeros();
            local[k] = p[k].signum();
            let normal = self.bodies[b].rot * local;
            let key = PAIR_KEY | (a as u64) << 32 | (b as u64) << 16 | (vk as u64) << 2;
            self.push_contact(
                rows,
                Contact {
                    a,
                    b: Some(b),
                    point: v,
                    normal,
                    target: 0.0,
                    depth,
                    key,
                },
            );
        }
    }
}

#[cfg(test)]
mod tests;

/// One contact point between body `a` and body `b` (or the ground).
struct Contact {
    a: usize,
    b: Option<usize>,
    point: V3,
    normal: V3,
    /// Normal velocity the row aims for; negative lets a hovering vertex close its gap.
    target: f64,
    depth: f64,
    key: u64,
}

//! Sequential-impulse constraint rows and the projected Gauss-Seidel sweep.

use std::collections::HashMap;

use super::body::{Body, V3};

/// One scalar velocity constraint `J v = target`, impulse clamped to `[lo, hi]`.
#[derive(Clone, Debug)]
pub(crate) struct Row {
    pub a: usize,
    pub b: Option<usize>,
    pub lin_a: V3,
    pub ang_a: V3,
    pub lin_b: V3,
    pub ang_b: V3,
    inv_ang_a: V3,
    inv_ang_b: V3,
    inv_mass_a: f64,
    inv_mass_b: f64,
    eff: f64,
    pub target: f64,
    /// Target for the position-correction pass; `None` keeps the row out of it.
    pub pos_target: Option<f64>,
    pub lo: f64,
    pub hi: f64,
    /// Friction row: bounds follow `mu * impulse` of the referenced normal row.
    pub friction: Option<(usize, f64)>,
    pub impulse: f64,
    pos_impulse: f64,
    /// Identity across steps for warm starting; 0 opts out.
    pub key: u64,
}

impl Row {
    pub fn new(bodies: &[Body], a: usize, b: Option<usize>, lin_a: V3, ang_a: V3, lin_b: V3, ang_b: V3) -> Row {
        let ba = &bodies[a];
        let inv_ang_a = ba.inv_inertia_world * ang_a;
        let mut k = ba.inv_mass * lin_a.norm_squared() + ang_a.dot(&inv_ang_a);
        let (inv_ang_b, inv_mass_b) = match b {
            Some(b) => {
                let bb = &bodies[b];
                let i = bb.inv_inertia_world * ang_b;
                k += bb.inv_mass * lin_b.norm_squared() + ang_b.dot(&i);
                (i, bb.inv_mass)
            }
            None => (V3::zeros(), 0.0),
        };
        Row {
            a,
            b,
            lin_a,
            ang_a,
            lin_b,
            ang_b,
            inv_ang_a,
            inv_ang_b,
            inv_mass_a: ba.inv_mass,
            inv_mass_b,
            eff: if k > 1e-12 { 1.0 / k } else { 0.0 },
            target: 0.0,
            pos_target: None,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            friction: None,
            impulse: 0.0,
            pos_impulse: 0.0,
            key: 0,
        }
    }

    pub fn with_key(mut self, key: u64) -> Self {
        self.key = key;
        self
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = target;
        self
    }

    pub fn with_position(mut self, pos_target: f64) -> Self {
        self.pos_target = Some(pos_target);
        self
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    pub fn with_friction(mut self, normal_row: usize, mu: f64) -> Self {
        self.friction = Some((normal_row, mu));
        self
    }

    #[inline]
    fn jv(&self, lin: &[V3], ang: &[V3]) -> f64 {
        let mut v = self.lin_a.dot(&lin[self.a]) + self.ang_a.dot(&ang[self.a]);
        if let Some(b) = self.b {
            v += self.lin_b.dot(&lin[b]) + self.ang_b.dot(&ang[b]);
        }
        v
    }

    #[inline]
    fn apply(&self, lin: &mut [V3], ang: &mut [V3], d: f64) {
        lin[self.a] += self.lin_a * (self.inv_mass_a * d);
        ang[self.a] += self.inv_ang_a * d;
        if let Some(b) = self.b {
            lin[b] += self.lin_b * (self.inv_mass_b * d);
            ang[b] += self.inv_ang_b * d;
        }
    }
}

/// Applies last step's impulses to rows that persist, so sustained loads
/// need not be rebuilt from zero by the few iterations of each step.
pub(crate) fn warm_start(rows: &mut [Row], lin: &mut [V3], ang: &mut [V3], cache: &HashMap<u64, f64>) {
    for row in rows.iter_mut() {
        if row.key == 0 {
            continue;
        }
        if let Some(&impulse) = cache.get(&row.key) {
            row.impulse = if row.friction.is_some() {
                impulse
            } else {
                impulse.clamp(row.lo, row.hi)
            };
            row.apply(lin, ang, row.impulse);
        }
    }
}

/// Stores the impulses of keyed rows for the next step.
pub(crate) fn remember(rows: &[Row], cache: &mut HashMap<u64, f64>) {
    cache.clear();
    cache.extend(rows.iter().filter(|r| r.key != 0).map(|r| (r.key, r.impulse)));
}

/// Velocity pass over every row in order.
pub(crate) fn solve_velocity(rows: &mut [Row], lin: &mut [V3], ang: &mut [V3], iterations: usize) {
    for _ in 0..iterations {
        for i in 0..rows.len() {
            let (lo, hi) = match rows[i].friction {
                Some((n, mu)) => {
                    let limit = mu * rows[n].impulse;
                    (-limit, limit)
                }
                None => (rows[i].lo, rows[i].hi),
            };
            let row = &mut rows[i];
            let delta = row.eff * (row.target - row.jv(lin, ang));
            let old = row.impulse;
            row.impulse = (old + delta).clamp(lo, hi);
            let d = row.impulse - old;
            if d != 0.0 {
                row.apply(lin, ang, d);
            }
        }
    }
}

/// Position-correction pass on pseudo velocities; real velocities are untouched.
pub(crate) fn solve_position(rows: &mut [Row], lin: &mut [V3], ang: &mut [V3], iterations: usize) {
    for _ in 0..iterations {
        for row in rows.iter_mut() {
            let Some(target) = row.pos_target else { continue };
            let delta = row.eff * (target - row.jv(lin, ang));
            let old = row.pos_impulse;
            row.pos_impulse = (old + delta).clamp(row.lo, row.hi);
            let d = row.pos_impulse - old;
            if d != 0.0 {
                row.apply(lin, ang, d);
            }
        }
    }
}

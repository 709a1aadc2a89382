use nalgebra::{Matrix3, UnitQuaternion, Vector3};

pub(crate) type V3 = Vector3<f64>;

/// Rigid box.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Body {
    pub half: V3,
    pub pos: V3,
    pub rot: UnitQuaternion<f64>,
    pub vel: V3,
    pub ang: V3,
    pub mass: f64,
    pub inv_mass: f64,
    pub inertia: V3,
    pub inv_inertia_world: Matrix3<f64>,
}

impl Body {
    pub fn new(half: V3, pos: V3, density: f64) -> Self {
        let full = half * 2.0;
        let mass = density * full.x * full.y * full.z;
        let inertia = V3::new(
            mass / 12.0 * (full.y * full.y + full.z * full.z),
            mass / 12.0 * (full.x * full.x + full.z * full.z),
            mass / 12.0 * (full.x * full.x + full.y * full.y),
        );
        let mut b = Body {
            half,
            pos,
            rot: UnitQuaternion::identity(),
            vel: V3::zeros(),
            ang: V3::zeros(),
            mass,
            inv_mass: 1.0 / mass,
            inertia,
            inv_inertia_world: Matrix3::zeros(),
        };
        b.update_inertia();
        b
    }

    pub fn update_inertia(&mut self) {
        let r = self.rot.to_rotation_matrix();
        let inv = Matrix3::from_diagonal(&self.inertia.map(|i| 1.0 / i));
        self.inv_inertia_world = r.matrix() * inv * r.matrix().transpose();
    }

    pub fn vertices(&self) -> [V3; 8] {
        let m = self.rot.to_rotation_matrix();
        let mut out = [V3::zeros(); 8];
        for (k, v) in out.iter_mut().enumerate() {
            let local = V3::new(
                if k & 1 == 0 { -self.half.x } else { self.half.x },
                if k & 2 == 0 { -self.half.y } else { self.half.y },
                if k & 4 == 0 { -self.half.z } else { self.half.z },
            );
            *v = self.pos + m * local;
        }
        out
    }

    pub fn kinetic_energy(&self) -> f64 {
        let r = self.rot.to_rotation_matrix();
        let local_w = r.matrix().transpose() * self.ang;
        0.5 * self.mass * self.vel.norm_squared() + 0.5 * local_w.component_mul(&self.inertia).dot(&local_w)
    }

    pub fn is_sane(&self, max_speed: f64) -> bool {
        let finite = self
            .pos
            .iter()
            .chain(self.vel.iter())
            .chain(self.ang.iter())
            .all(|x| x.is_finite())
            && self.rot.coords.iter().all(|x| x.is_finite());
        finite && self.vel.norm() <= max_speed && self.ang.norm() * self.half.norm() <= max_speed
    }
}

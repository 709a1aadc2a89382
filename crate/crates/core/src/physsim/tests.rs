use super::*;
use crate::morphogenome::tests::{block, walker};
use crate::morphogenome::{Genome, SCHEMA_VERSION};
use crate::neurocontroller::DEFAULT_DT;

fn single_box(dims: [f64; 3]) -> Organism {
    Genome {
        schema_version: SCHEMA_VERSION,
        blocks: vec![block(0, dims, [0.0, 0.0])],
        neurons: vec![],
        wiring: vec![],
    }
    .develop()
    .unwrap()
}

#[test]
fn create_world_sets_timer_and_sensors() {
    let o = walker().develop().unwrap();
    let w = WorldConfig::default().create_world(&o, [10.0, 0.0], 30.0, 3).unwrap();
    assert_eq!(w.timer_remaining(), 30.0);
    let f = w.sensor_frame();
    assert!((f.target_distance - 10.0).abs() < 1e-12, "root spawns at the origin");
    assert!(f.target_angle.abs() < 1e-12);
    assert!((w.lowest_vertex_z() - 0.01).abs() < 1e-12);

    let left = WorldConfig::default().create_world(&o, [0.0, 5.0], 30.0, 3).unwrap();
    assert!((left.sensor_frame().target_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    let back = WorldConfig::default().create_world(&o, [-5.0, 0.0], 30.0, 3).unwrap();
    assert_eq!(back.sensor_frame().target_angle, std::f64::consts::PI);
}

#[test]
fn spawn_overlap_is_rejected() {
    let mut g = walker();
    g.blocks[2].joint_anchor = g.blocks[1].joint_anchor;
    let o = g.develop().unwrap();
    assert!(matches!(
        WorldConfig::default().create_world(&o, [10.0, 0.0], 10.0, 1),
        Err(SimError::SpawnOverlap)
    ));
}

#[test]
fn free_fall_matches_ballistic_oracle() {
    let cfg = WorldConfig {
        spawn_clearance: 1.0,
        ..WorldConfig::default()
    };
    let o = single_box([0.5, 0.5, 0.5]);
    let mut w = cfg.create_world(&o, [10.0, 0.0], 10.0, 1).unwrap();
    let z0 = w.root_position()[2];
    let mut checked = 0;
    for k in 1..200u32 {
        w.physics_step(None).unwrap();
        // Stop comparing once the box is within contact range of the ground.
        if w.lowest_vertex_z() < 0.05 {
            break;
        }
        let t = k as f64 * cfg.dt;
        let oracle = z0 - 0.5 * cfg.gravity * t * t;
        let z = w.root_position()[2];
        assert!((z - oracle).abs() <= 0.02 * oracle, "t={t} z={z} oracle={oracle}");
        checked += 1;
    }
    assert!(checked > 15);
}

#[test]
fn box_comes_to_rest_without_sinking() {
    let cfg = WorldConfig {
        spawn_clearance: 0.5,
        ..WorldConfig::default()
    };
    let o = single_box([0.6, 0.4, 0.3]);
    let mut w = cfg.create_world(&o, [10.0, 0.0], 10.0, 1).unwrap();
    for _ in 0..250 {
        w.physics_step(None).unwrap();
        assert!(w.lowest_vertex_z() >= -1e-3);
    }
    let z = w.root_position()[2];
    assert!((z - 0.15).abs() < 2e-3, "rest height {z}");
    assert!(w.sensor_frame().contact[0]);
}

#[test]
fn passive_energy_never_grows_more_than_one_percent_per_second() {
    let cfg = WorldConfig::default();
    for genome in [
        walker(),
        crate::morphogenome::random_genome(11, &Default::default()).unwrap(),
    ] {
        let o = genome.develop().unwrap();
        let mut w = cfg.create_world(&o, [10.0, 0.0], 10.0, 1).unwrap();
        let per_second = cfg.steps_for(1.0);
        let mut energy = vec![w.mechanical_energy()];
        for k in 1..=per_second * 6 {
            w.physics_step(None).unwrap();
            if k % per_second == 0 {
                energy.push(w.mechanical_energy());
            }
        }
        for pair in energy.windows(2) {
            assert!(pair[1] - pair[0] <= 0.01 * pair[0].abs(), "{energy:?}");
        }
    }
}

#[test]
fn driven_walker_stays_above_ground() {
    let o = walker().develop().unwrap();
    let cfg = WorldConfig::default();
    let mut w = cfg.create_world(&o, [10.0, 0.0], 20.0, 1).unwrap();
    for k in 0..1000 {
        let t = k as f64 * DEFAULT_DT;
        let cmd = MotorCommands(vec![(3.0 * t).sin(), (3.0 * t).cos(), -(2.0 * t).sin()]);
        w.physics_step(Some(&cmd.0)).unwrap();
        assert!(w.lowest_vertex_z() >= -1e-3, "step {k}: {}", w.lowest_vertex_z());
    }
}

#[test]
fn joint_limits_hold() {
    let o = walker().develop().unwrap();
    let mut w = WorldConfig::default().create_world(&o, [10.0, 0.0], 20.0, 1).unwrap();
    for _ in 0..200 {
        w.physics_step(Some(&[1.0, 1.0, 1.0])).unwrap();
    }
    for a in w.joint_angles() {
        assert!(a <= 1.0 + 0.05, "{a}");
    }
    for _ in 0..200 {
        w.physics_step(Some(&[-1.0, -1.0, -1.0])).unwrap();
    }
    for a in w.joint_angles() {
        assert!(a >= -1.0 - 0.05, "{a}");
    }
}

#[test]
fn replay_is_bit_identical() {
    let o = walker().develop().unwrap();
    let run = || {
        let cfg = WorldConfig::default();
        let mut w = cfg.create_world(&o, [10.0, 0.0], 5.0, 1).unwrap();
        let mut c = Controller::build(&o);
        w.settle_anticheat(&mut c).unwrap();
        let mut frame = w.sensor_frame();
        loop {
            let cmd = c.step(&frame, cfg.dt);
            let (f, events) = w.step_world(&cmd).unwrap();
            frame = f;
            if events.contains(&WorldEvent::TimerExpired) {
                break;
            }
        }
        (w.origin().unwrap(), w.trajectory().to_vec())
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.1.len(), 250);
}

#[test]
fn settle_moves_origin_but_not_far_for_a_still_body() {
    let o = single_box([0.5, 0.5, 0.5]);
    let cfg = WorldConfig::default();
    let mut w = cfg.create_world(&o, [10.0, 0.0], 10.0, 1).unwrap();
    let mut c = Controller::build(&o);
    w.settle_anticheat(&mut c).unwrap();
    let p0 = w.origin().unwrap();
    assert!(p0[0].hypot(p0[1]) < 0.5);
    assert_eq!(w.physics_steps(), cfg.steps_for(6.0));
    assert!(w.trajectory().is_empty());
}

#[test]
fn toppling_displacement_is_excluded_from_origin() {
    // A tall post with a heavy arm on one side falls over during the settle.
    let g = Genome {
        schema_version: SCHEMA_VERSION,
        blocks: vec![
            block(0, [0.2, 0.2, 1.8], [0.0, 0.0]),
            block(0, [1.5, 0.3, 0.3], [0.0, 1.0]),
        ],
        neurons: vec![],
        wiring: vec![],
    };
    let o = g.develop().unwrap();
    let cfg = WorldConfig::default();
    let mut w = cfg.create_world(&o, [10.0, 0.0], 10.0, 1).unwrap();
    let spawn = w.root_position();
    let mut c = Controller::build(&o);
    w.settle_anticheat(&mut c).unwrap();
    let p0 = w.origin().unwrap();
    let moved = (p0[0] - spawn[0]).hypot(p0[1] - spawn[1]);
    assert!(moved > 0.05, "post should topple, moved {moved}");
    // Standing still after settle: locomotion measured from p0 is ~0.
    for _ in 0..50 {
        w.step_world(&MotorCommands(vec![0.0])).unwrap();
    }
    let pf = w.root_position();
    assert!((pf[0] - p0[0]).hypot(pf[1] - p0[1]) < moved);
}

fn mover() -> (Organism, WorldConfig) {
    (single_box([0.5, 0.5, 0.5]), WorldConfig::default())
}

#[test]
fn absorption_boundary_is_inclusive() {
    let (o, cfg) = mover();
    // Root spawns at the origin; the distance sensor reads the offset length.
    let mut inside = cfg.create_world(&o, [1.99, 0.0], 1.0, 1).unwrap();
    let (_, ev) = inside.step_world(&MotorCommands(vec![])).unwrap();
    assert!(matches!(ev.first(), Some(WorldEvent::Absorbed(e)) if e.target_index == 0));

    let mut outside = cfg.create_world(&o, [2.01, 0.0], 1.0, 1).unwrap();
    let (_, ev) = outside.step_world(&MotorCommands(vec![])).unwrap();
    assert!(ev.is_empty());

    let mut edge = cfg.create_world(&o, [2.0, 0.0], 1.0, 1).unwrap();
    let (_, ev) = edge.step_world(&MotorCommands(vec![])).unwrap();
    assert_eq!(edge.trajectory()[0].sensor_distance <= 2.0, !ev.is_empty());
}

#[test]
fn advance_target_resets_timer_and_places_relative_to_root() {
    let (o, cfg) = mover();
    let mut w = cfg.create_world(&o, [1.0, 0.0], 2.0, 2).unwrap();
    for _ in 0..30 {
        w.step_world(&MotorCommands(vec![])).unwrap();
    }
    assert!(w.timer_remaining() < 2.0);
    let root = w.root_position();
    w.advance_target([10.0, 0.0]).unwrap();
    assert_eq!(w.timer_remaining(), 2.0);
    assert_eq!(w.target(), [root[0] + 10.0, root[1]]);
    assert_eq!(w.target_index(), 1);
    assert_eq!(w.advance_target([1.0, 1.0]), Err(SimError::SequenceExhausted));
    assert_eq!(w.targets().len(), 2);
    assert!(w.targets()[0].reached);
}

#[test]
fn timer_expires_exactly() {
    let (o, cfg) = mover();
    let mut w = cfg.create_world(&o, [10.0, 0.0], 1.0, 1).unwrap();
    for k in 0..50 {
        let (_, ev) = w.step_world(&MotorCommands(vec![])).unwrap();
        assert_eq!(ev.contains(&WorldEvent::TimerExpired), k == 49);
    }
    assert!(matches!(
        w.step_world(&MotorCommands(vec![])),
        Err(SimError::TimerExpired)
    ));
}

#[test]
fn trajectory_csv_has_expected_columns() {
    let (o, cfg) = mover();
    let mut w = cfg.create_world(&o, [10.0, 0.0], 0.1, 1).unwrap();
    for _ in 0..5 {
        w.step_world(&MotorCommands(vec![])).unwrap();
    }
    let mut buf = Vec::new();
    World::write_trajectory_csv(w.trajectory(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,t,x,y,z,sensor_distance,target_index"));
    assert_eq!(lines.count(), 5);
}

use forage_core::foragingtask::{Placement, TaskSpec};
use forage_core::ssga::{run_evolution, PhysicsEvaluator, RunConfig};

fn small_run(run_seed: u64) -> RunConfig {
    RunConfig {
        population: 8,
        generations: 2,
        task: TaskSpec {
            placement: Placement::Directions { r: 2, noise_p: 0.05 },
            timer: 2.0,
            ..TaskSpec::default()
        },
        run_seed,
        ..RunConfig::default()
    }
}

#[test]
fn physics_runs_repeat_bit_for_bit() {
    let eval = PhysicsEvaluator::default();
    let a = run_evolution(&small_run(5), &eval).unwrap();
    let b = run_evolution(&small_run(5), &eval).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.best.genome.to_json(), b.best.genome.to_json());
    let fa: Vec<u64> = a.final_population.members.iter().map(|m| m.w_bar().to_bits()).collect();
    let fb: Vec<u64> = b.final_population.members.iter().map(|m| m.w_bar().to_bits()).collect();
    assert_eq!(fa, fb);
}

#[test]
fn parallel_and_serial_scoring_agree() {
    let eval = PhysicsEvaluator::default();
    let parallel = run_evolution(&small_run(9), &eval).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| run_evolution(&small_run(9), &eval).unwrap());
    assert_eq!(parallel, serial);
}

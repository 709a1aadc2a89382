use std::collections::HashMap;

use forage_core::fitness::{FitnessBreakdown, FitnessVariant};
use forage_core::foragingtask::{Placement, TaskSpec};
use forage_core::morphogenome::{random_genome, GenomeLimits};
use forage_core::rng::{derive_seed, stream};
use forage_core::ssga::{
    next_generation, ranking, reproduce, run_evolution, select_survivors, Member, Method, Origin, Population,
    ReproductionConfig, RunConfig, SelectionConfig, SurrogateEvaluator,
};
use rand::Rng;

fn member(seed: u64, w: f64) -> Member {
    Member {
        genome: random_genome(seed, &GenomeLimits::default()).unwrap(),
        fitness: Some(FitnessBreakdown {
            w_bar: w,
            ..FitnessBreakdown::invalid(FitnessVariant::A)
        }),
        origin: Origin::Initial,
    }
}

fn population(seed: u64, n: usize) -> Vec<Member> {
    let mut rng = stream(&[seed, 1]);
    (0..n)
        .map(|i| {
            // Coarse values so ties are common.
            let w = (rng.random_range(0..6) as f64) * 0.5;
            member(derive_seed(&[seed, i as u64]), w)
        })
        .collect()
}

fn surrogate_run(population: usize, generations: u64) -> RunConfig {
    RunConfig {
        population,
        generations,
        task: TaskSpec {
            placement: Placement::Directions { r: 2, noise_p: 0.0 },
            ..TaskSpec::default()
        },
        run_seed: 17,
        ..RunConfig::default()
    }
}

#[test]
fn population_size_is_constant() {
    for n in [1, 2, 5, 20, 57] {
        let r = run_evolution(&surrogate_run(n, 6), &SurrogateEvaluator).unwrap();
        assert_eq!(r.final_population.members.len(), n);
        assert_eq!(r.log.len(), 7);
    }
}

#[test]
fn elites_survive_bit_for_bit() {
    let cfg = surrogate_run(60, 1);
    for seed in 0..20 {
        let pop = Population {
            members: population(seed, 60),
            generation: 0,
        };
        let elites: Vec<_> = ranking(&pop.members)[..8]
            .iter()
            .map(|&i| pop.members[i].genome.clone())
            .collect();
        let next = next_generation(&pop, &cfg).unwrap();
        for (k, g) in elites.iter().enumerate() {
            assert_eq!(&next.members[k].genome, g);
            assert_eq!(next.members[k].genome.to_json(), g.to_json());
            assert_eq!(next.members[k].origin, Origin::Survivor(Method::Elite));
        }
    }
}

#[test]
fn selection_methods_never_share_a_member() {
    let cfg = SelectionConfig::default();
    let mut rng = stream(&[99]);
    for g in 0..1000u64 {
        let n = 20 + (g % 60) as usize;
        let members = population(g, n);
        let picks = select_survivors(&members, &cfg, &mut rng).unwrap();
        assert_eq!(picks.len(), cfg.survivors(n));
        let mut owner: HashMap<usize, Method> = HashMap::new();
        for (i, m) in picks {
            assert_eq!(*owner.entry(i).or_insert(m), m, "generation {g}: member {i}");
        }
    }
}

#[test]
fn clone_fraction_matches_probability() {
    let survivors: Vec<Member> = (0..40).map(|i| member(1000 + i, 1.0)).collect();
    let cfg = ReproductionConfig::default();
    let mut clones = 0;
    let mut total = 0;
    for generation in 0..250 {
        let next = reproduce(&survivors, 80, &cfg, 3, generation).unwrap();
        for m in &next[40..] {
            total += 1;
            clones += (m.origin == Origin::Clone) as usize;
        }
    }
    assert_eq!(total, 10_000);
    let fraction = clones as f64 / total as f64;
    assert!((fraction - 0.30).abs() <= 0.015, "clone fraction {fraction}");
}

#[test]
fn best_never_regresses_under_a_fixed_evaluator() {
    let r = run_evolution(&surrogate_run(40, 50), &SurrogateEvaluator).unwrap();
    for w in r.log.windows(2) {
        assert!(
            w[1].best_w_bar >= w[0].best_w_bar,
            "{} -> {}",
            w[0].best_w_bar,
            w[1].best_w_bar
        );
    }
}

#[test]
fn runs_repeat_exactly() {
    let cfg = surrogate_run(25, 8);
    let a = run_evolution(&cfg, &SurrogateEvaluator).unwrap();
    let b = run_evolution(&cfg, &SurrogateEvaluator).unwrap();
    assert_eq!(a, b);
    let other = run_evolution(&RunConfig { run_seed: 18, ..cfg }, &SurrogateEvaluator).unwrap();
    assert_ne!(a.log, other.log);
}

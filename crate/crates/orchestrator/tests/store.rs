use std::fs;

use forage_core::ssga::{Evaluator, SurrogateEvaluator};
use forage_core::{EvaluationPlan, FitnessBreakdown, Genome};
use forage_orchestrator::runner::run_stage_with;
use forage_orchestrator::{derive_next_stage, StageConfig, StageOverrides, StageSeed, Store, StoreError};

fn small_stage(id: &str) -> StageConfig {
    StageConfig {
        stage_id: id.into(),
        repeats: 3,
        generations: 4,
        population: 10,
        ..StageConfig::default()
    }
}

fn run(store: &Store, id: &str) -> forage_orchestrator::StageResult {
    run_stage_with(store, id, 2, &SurrogateEvaluator, None).unwrap()
}

fn key_first(store: &Store, id: &str) -> String {
    let best = store.result(id).unwrap().unwrap().repeats[0]
        .best_organism_id
        .clone()
        .unwrap();
    store.mark_key_organism(id, &best, "").unwrap();
    best
}

#[test]
fn stage_run_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (sa, sb) = (Store::open(a.path()).unwrap(), Store::open(b.path()).unwrap());
    for s in [&sa, &sb] {
        s.put_stage(&small_stage("s")).unwrap();
    }
    let (ra, rb) = (run(&sa, "s"), run(&sb, "s"));
    assert_eq!(ra, rb);
    assert_eq!(ra.repeats.len(), 3);
    for k in 0..3 {
        let path = |root: &std::path::Path, f: &str| root.join(format!("stages/s/repeats/{k}/{f}"));
        for f in ["run.jsonl", "best.genome.json", "outcome.json"] {
            assert_eq!(
                fs::read(path(a.path(), f)).unwrap(),
                fs::read(path(b.path(), f)).unwrap(),
                "{f}"
            );
        }
        assert_eq!(sa.run_log("s", k).unwrap().len(), 5);
    }
    let seeds: Vec<u64> = ra.repeats.iter().map(|r| r.run_seed).collect();
    let mut sorted = seeds.clone();
    sorted.sort();
    assert_eq!(sorted, vec![0, 1, 2]);
}

#[test]
fn results_are_ranked_by_fitness() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.put_stage(&small_stage("s")).unwrap();
    let r = run(&store, "s");
    assert!(r.repeats.windows(2).all(|w| w[0].best_w_bar >= w[1].best_w_bar));
}

#[test]
fn best_genomes_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.put_stage(&small_stage("s")).unwrap();
    run(&store, "s");
    for k in 0..3 {
        let text = fs::read_to_string(store.repeat_dir("s", k).join("best.genome.json")).unwrap();
        let g = Genome::from_json(&text).unwrap();
        assert_eq!(g.to_json(), text);
        assert_eq!(store.organism(&g.content_id()).unwrap(), g);
    }
}

/// Counts how many genomes it scored, so a resumed run can be checked for skipped work.
struct Counting(std::sync::atomic::AtomicUsize);

impl Evaluator for Counting {
    fn evaluate(&self, genome: &Genome, plan: &EvaluationPlan) -> FitnessBreakdown {
        self.0.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        SurrogateEvaluator.evaluate(genome, plan)
    }
}

#[test]
fn interrupted_stage_resumes_without_rerunning_done_repeats() {
    let full = tempfile::tempdir().unwrap();
    let reference = Store::open(full.path()).unwrap();
    reference.put_stage(&small_stage("s")).unwrap();
    let expected = run(&reference, "s");

    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.put_stage(&small_stage("s")).unwrap();
    run(&store, "s");
    // Simulate a crash after repeat 0 finished: repeats 1 and 2 lose their markers.
    for k in 1..3 {
        fs::remove_file(store.repeat_dir("s", k).join("done")).unwrap();
    }
    assert_eq!(store.repeat_outcomes("s").unwrap().len(), 1);
    let before = fs::read(store.repeat_dir("s", 0).join("run.jsonl")).unwrap();

    let counting = Counting(Default::default());
    let resumed = run_stage_with(&store, "s", 1, &counting, None).unwrap();
    assert_eq!(resumed, expected);
    let per_repeat = {
        let c = Counting(Default::default());
        let one = tempfile::tempdir().unwrap();
        let s = Store::open(one.path()).unwrap();
        s.put_stage(&StageConfig {
            repeats: 1,
            ..small_stage("s")
        })
        .unwrap();
        run_stage_with(&s, "s", 1, &c, None).unwrap();
        c.0.into_inner()
    };
    assert_eq!(counting.0.into_inner(), 2 * per_repeat);
    assert_eq!(fs::read(store.repeat_dir("s", 0).join("run.jsonl")).unwrap(), before);

    // A finished stage does no further work.
    let idle = Counting(Default::default());
    run_stage_with(&store, "s", 1, &idle, None).unwrap();
    assert_eq!(idle.0.into_inner(), 0);
}

#[test]
fn registering_a_stage_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.put_stage(&small_stage("s")).unwrap();
    store.put_stage(&small_stage("s")).unwrap();
    let changed = StageConfig {
        generations: 99,
        ..small_stage("s")
    };
    assert!(matches!(store.put_stage(&changed), Err(StoreError::StageExists(_))));
    assert_eq!(store.stage_ids().unwrap(), vec!["s".to_string()]);
    assert!(matches!(store.stage("../s"), Err(StoreError::UnknownStage(_))));
}

#[test]
fn marking_twice_replaces_with_audit_trail() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.put_stage(&small_stage("s")).unwrap();
    let r = run(&store, "s");
    let ids: Vec<String> = r.repeats.iter().filter_map(|o| o.best_organism_id.clone()).collect();
    store.mark_key_organism("s", &ids[0], "first").unwrap();
    let other = ids.iter().find(|i| *i != &ids[0]).unwrap().clone();
    let lineage = store.mark_key_organism("s", &other, "second").unwrap();
    assert_eq!(lineage.entries.len(), 1);
    assert_eq!(lineage.entries[0].key_organism_id, other);
    assert_eq!(lineage.entries[0].note, "second");
    assert_eq!(lineage.audit.len(), 2);
    assert_eq!(lineage.audit[1].replaced.as_deref(), Some(ids[0].as_str()));
    assert_eq!(store.lineage().unwrap(), lineage);
}

#[test]
fn only_stage_results_can_be_keyed() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.put_stage(&small_stage("a")).unwrap();
    store
        .put_stage(&StageConfig {
            rng_base_seed: 50,
            ..small_stage("b")
        })
        .unwrap();
    run(&store, "a");
    let rb = run(&store, "b");
    let foreign = rb.repeats[0].best_organism_id.clone().unwrap();
    let from_a = store.result("a").unwrap().unwrap();
    assert!(from_a
        .repeats
        .iter()
        .all(|o| o.best_organism_id.as_deref() != Some(&foreign)));
    assert!(matches!(
        store.mark_key_organism("a", &foreign, ""),
        Err(StoreError::UnknownOrganism(_))
    ));
    assert!(matches!(
        store.mark_key_organism("a", "nope", ""),
        Err(StoreError::UnknownOrganism(_))
    ));
    assert!(matches!(
        store.mark_key_organism("zz", "nope", ""),
        Err(StoreError::UnknownStage(_))
    ));
}

#[test]
fn marked_genome_loads_from_lineage_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.put_stage(&small_stage("s")).unwrap();
    run(&store, "s");
    let key = key_first(&store, "s");
    let original = fs::read(dir.path().join(format!("organisms/{key}.json"))).unwrap();
    assert_eq!(
        fs::read(dir.path().join(format!("lineage/{key}.json"))).unwrap(),
        original
    );
    assert_eq!(store.lineage_genome(&key).unwrap(), store.organism(&key).unwrap());
}

#[test]
fn lineage_follows_the_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.put_stage(&small_stage("stage-1")).unwrap();
    assert!(matches!(
        derive_next_stage(&store, "stage-1", &StageOverrides::default()),
        Err(StoreError::NoKeyOrganism(_))
    ));
    let mut id = "stage-1".to_string();
    let mut keys = Vec::new();
    for n in 0..3 {
        run(&store, &id);
        keys.push(key_first(&store, &id));
        assert_eq!(store.lineage().unwrap().entries.len(), n + 1);
        let next = derive_next_stage(&store, &id, &StageOverrides::default())
            .unwrap()
            .config;
        assert_eq!(
            next.seed,
            StageSeed::KeyOrganism {
                organism_id: keys[n].clone()
            }
        );
        id = next.stage_id;
    }
    let lineage = store.lineage().unwrap();
    let gens: Vec<u64> = lineage.entries.iter().map(|e| e.cumulative_generations).collect();
    assert_eq!(gens, vec![4, 8, 12]);
    let noise: Vec<Option<f64>> = lineage.entries.iter().map(|e| e.noise).collect();
    assert_eq!(noise, vec![Some(0.001), Some(0.05), Some(0.5)]);
    assert_eq!(lineage.entries[0].seed_organism_id, None);
    assert_eq!(lineage.entries[1].seed_organism_id.as_deref(), Some(keys[0].as_str()));
    store.verify_lineage().unwrap();
}

#[test]
fn tampered_lineage_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.put_stage(&small_stage("stage-1")).unwrap();
    run(&store, "stage-1");
    let key = key_first(&store, "stage-1");
    store.verify_lineage().unwrap();
    let other = store.result("stage-1").unwrap().unwrap().repeats[1]
        .best_organism_id
        .clone()
        .unwrap();
    assert_ne!(other, key);
    let path = dir.path().join(format!("lineage/{key}.json"));
    fs::copy(dir.path().join(format!("organisms/{other}.json")), &path).unwrap();
    assert!(store.verify_lineage().is_err());
}

#[test]
fn seeded_stages_start_from_the_key_genome() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.put_stage(&small_stage("stage-1")).unwrap();
    run(&store, "stage-1");
    let key = key_first(&store, "stage-1");
    let next = derive_next_stage(
        &store,
        "stage-1",
        &StageOverrides {
            generations: Some(0),
            ..StageOverrides::default()
        },
    )
    .unwrap()
    .config;
    run(&store, &next.stage_id);
    // With no generations every initial member is a copy of the seed.
    for o in store.repeat_outcomes(&next.stage_id).unwrap() {
        assert_eq!(o.best_organism_id.as_deref(), Some(key.as_str()));
    }
}

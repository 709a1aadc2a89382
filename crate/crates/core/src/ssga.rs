//! Steady-state genetic algorithm.
//!
//! Each generation every member is scored on a fresh plan, a fixed fraction
//! survives through elite, roulette and tournament selection (in that order,
//! each method drawing only from members no earlier method picked), and the
//! vacancies are refilled by mutated clones and recombinants of survivors.
//! All randomness comes from streams keyed by (run seed, generation, slot).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::{evaluate_genome, FitnessBreakdown, StepBreakdown};
use crate::foragingtask::{make_plan, EvaluationPlan, TaskSpec};
use crate::morphogenome::{random_genome, Genome, GenomeError, GenomeLimits};
use crate::physsim::WorldConfig;
use crate::rng::{derive_seed, stream};

/// Slot key reserved for the selection stream of a generation.
const SELECTION_SLOT: u64 = u64::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum SsgaError {
    #[error("no members left for {0:?} selection")]
    DegeneratePool(Method),
    #[error("no survivors to reproduce from")]
    NoSurvivors,
    #[error("seed genome: {0}")]
    Genome(String),
}

impl From<GenomeError> for SsgaError {
    fn from(e: GenomeError) -> Self {
        SsgaError::Genome(e.to_string())
    }
}

/// Scores a genome against a plan. Implementations must be pure.
pub trait Evaluator: Sync {
    fn evaluate(&self, genome: &Genome, plan: &EvaluationPlan) -> FitnessBreakdown;
}

#[derive(Clone, Debug, Default)]
pub struct PhysicsEvaluator {
    pub world: WorldConfig,
}

impl Evaluator for PhysicsEvaluator {
    fn evaluate(&self, genome: &Genome, plan: &EvaluationPlan) -> FitnessBreakdown {
        evaluate_genome(genome, plan, &self.world)
    }
}

/// Cheap deterministic stand-in for physics: every step scores the total
/// block dimension sum of the genome. Useful for dry runs and tests.
#[derive(Clone, Copy, Debug, Default)]
pub struct SurrogateEvaluator;

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, genome: &Genome, plan: &EvaluationPlan) -> FitnessBreakdown {
        let w: f64 = genome.blocks.iter().map(|b| b.dims.iter().sum::<f64>()).sum();
        let step = StepBreakdown {
            w_s_list: vec![],
            w_l: 0.0,
            w_r: 0.0,
            w,
            reached: 0,
            steps: 0,
        };
        FitnessBreakdown::from_steps(plan.variant(), vec![step; plan.steps.len()])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Elite,
    Roulette,
    Tournament,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Survivor(Method),
    Clone,
    Recombinant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub genome: Genome,
    pub fitness: Option<FitnessBreakdown>,
    pub origin: Origin,
}

impl Member {
    pub fn w_bar(&self) -> f64 {
        self.fitness.as_ref().map_or(0.0, |f| f.w_bar)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<Member>,
    pub generation: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub survival_fraction: f64,
    pub elite_count: usize,
    /// Explicit roulette count; by default half of what remains after the elites.
    pub roulette_count: Option<usize>,
    /// Explicit tournament count; by default whatever is left.
    pub tournament_count: Option<usize>,
    pub tournament_size: usize,
    pub method_order: Vec<Method>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            survival_fraction: 0.2,
            elite_count: 8,
            roulette_count: None,
            tournament_count: None,
            tournament_size: 5,
            method_order: vec![Method::Elite, Method::Roulette, Method::Tournament],
        }
    }
}

impl SelectionConfig {
    pub fn survivors(&self, n: usize) -> usize {
        ((n as f64 * self.survival_fraction).ceil() as usize).clamp(1, n.max(1))
    }

    /// How many members each method picks for a population of `n`.
    pub fn count(&self, method: Method, n: usize) -> usize {
        let total = self.survivors(n);
        let elite = self.elite_count.min(total);
        let rest = total - elite;
        let roulette = self.roulette_count.unwrap_or(rest / 2).min(rest);
        match method {
            Method::Elite => elite,
            Method::Roulette => roulette,
            Method::Tournament => self.tournament_count.unwrap_or(rest - roulette).min(rest - roulette),
        }
    }
}

/// Member indices sorted best first: higher W̄, then lower genome hash, then index.
pub fn ranking(members: &[Member]) -> Vec<usize> {
    let keys: Vec<(f64, u64)> = members.iter().map(|m| (m.w_bar(), m.genome.hash_key())).collect();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .0
            .total_cmp(&keys[a].0)
            .then(keys[a].1.cmp(&keys[b].1))
            .then(a.cmp(&b))
    });
    order
}

/// Picks survivors; returns `(member index, method)` pairs in method order.
///
/// Methods never share an individual, but roulette and tournament may pick
/// the same member several times.
pub fn select_survivors(
    members: &[Member],
    cfg: &SelectionConfig,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, Method)>, SsgaError> {
    let n = members.len();
    let order = ranking(members);
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let mut taken = vec![false; n];
    let mut picks = Vec::new();
    for &method in &cfg.method_order {
        let count = cfg.count(method, n);
        if count == 0 {
            continue;
        }
        let pool: Vec<usize> = order.iter().copied().filter(|&i| !taken[i]).collect();
        if pool.is_empty() {
            return Err(SsgaError::DegeneratePool(method));
        }
        let chosen: Vec<usize> = match method {
            Method::Elite => pool.iter().copied().take(count).collect(),
            Method::Roulette => {
                let weights: Vec<f64> = pool.iter().map(|&i| members[i].w_bar().max(0.0)).collect();
                match WeightedIndex::new(&weights) {
                    Ok(dist) => (0..count).map(|_| pool[dist.sample(rng)]).collect(),
                    Err(_) => (0..count).map(|_| pool[rng.random_range(0..pool.len())]).collect(),
                }
            }
            Method::Tournament => (0..count)
                .map(|_| {
                    (0..cfg.tournament_size.max(1))
                        .map(|_| pool[rng.random_range(0..pool.len())])
                        .min_by_key(|&i| rank[i])
                        .unwrap()
                })
                .collect(),
        };
        for &i in &chosen {
            taken[i] = true;
            picks.push((i, method));
        }
    }
    Ok(picks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproductionConfig {
    pub clone_probability: f64,
    pub mutation_rate: f64,
}

impl Default for ReproductionConfig {
    fn default() -> Self {
        Self {
            clone_probability: 0.3,
            mutation_rate: 0.01,
        }
    }
}

/// Survivors first, unchanged, then offspring until there are `n` members.
///
/// Offspring in slot `k` draw from the stream keyed by `(run_seed, generation, k)`.
pub fn reproduce(
    survivors: &[Member],
    n: usize,
    cfg: &ReproductionConfig,
    run_seed: u64,
    generation: u64,
) -> Result<Vec<Member>, SsgaError> {
    if survivors.is_empty() {
        return Err(SsgaError::NoSurvivors);
    }
    let mut next: Vec<Member> = survivors
        .iter()
        .map(|m| Member {
            genome: m.genome.clone(),
            fitness: None,
            origin: m.origin,
        })
        .collect();
    for slot in next.len()..n {
        let mut rng = stream(&[run_seed, generation, slot as u64]);
        let k = survivors.len();
        let clone = k < 2 || rng.random_bool(cfg.clone_probability);
        let a = rng.random_range(0..k);
        let (child, origin) = if clone {
            (survivors[a].genome.clone(), Origin::Clone)
        } else {
            let b = (a + rng.random_range(1..k)) % k;
            match survivors[a].genome.recombine(&survivors[b].genome, rng.random()) {
                Ok(g) => (g, Origin::Recombinant),
                Err(_) => (survivors[a].genome.clone(), Origin::Clone),
            }
        };
        next.push(Member {
            genome: child.mutate(rng.random(), cfg.mutation_rate),
            fitness: None,
            origin,
        });
    }
    next.truncate(n);
    Ok(next)
}

/// Scores every member on `plan`, in parallel; results land by index.
pub fn evaluate_population(members: &mut [Member], plan: &EvaluationPlan, evaluator: &dyn Evaluator) {
    let scores: Vec<FitnessBreakdown> = members
        .par_iter()
        .map(|m| evaluator.evaluate(&m.genome, plan))
        .collect();
    for (m, f) in members.iter_mut().zip(scores) {
        m.fitness = Some(f);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u64,
    pub best_w_bar: f64,
    pub mean_w_bar: f64,
    pub best_organism_id: String,
    pub plan_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "genome", rename_all = "snake_case")]
pub enum SeedGenome {
    Random,
    Genome(Genome),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: SeedGenome,
    pub population: usize,
    pub generations: u64,
    pub task: TaskSpec,
    pub selection: SelectionConfig,
    pub reproduction: ReproductionConfig,
    pub limits: GenomeLimits,
    pub world: WorldConfig,
    pub run_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: SeedGenome::Random,
            population: 200,
            generations: 50,
            task: TaskSpec::default(),
            selection: SelectionConfig::default(),
            reproduction: ReproductionConfig::default(),
            limits: GenomeLimits::default(),
            world: WorldConfig::default(),
            run_seed: 0,
        }
    }
}

impl RunConfig {
    /// The plan every member of `generation` is scored on.
    pub fn plan_for(&self, generation: u64) -> EvaluationPlan {
        make_plan(&self.task, derive_seed(&[self.run_seed, generation]))
    }

    pub fn initial_population(&self) -> Result<Population, SsgaError> {
        let members = (0..self.population)
            .map(|slot| {
                let genome = match &self.seed {
                    SeedGenome::Random => random_genome(derive_seed(&[self.run_seed, 0, slot as u64]), &self.limits)?,
                    SeedGenome::Genome(g) => g.clone(),
                };
                Ok(Member {
                    genome,
                    fitness: None,
                    origin: Origin::Initial,
                })
            })
            .collect::<Result<Vec<_>, SsgaError>>()?;
        Ok(Population { members, generation: 0 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub final_population: Population,
    pub log: Vec<GenerationRecord>,
    /// Best member of the last evaluated generation.
    pub best: Member,
}

/// Scores `pop` on its generation's plan and summarizes it.
pub fn score_generation(pop: &mut Population, cfg: &RunConfig, evaluator: &dyn Evaluator) -> GenerationRecord {
    let plan = cfg.plan_for(pop.generation);
    evaluate_population(&mut pop.members, &plan, evaluator);
    let best = ranking(&pop.members)[0];
    let mean = pop.members.iter().map(Member::w_bar).sum::<f64>() / pop.members.len() as f64;
    GenerationRecord {
        generation: pop.generation,
        best_w_bar: pop.members[best].w_bar(),
        mean_w_bar: mean,
        best_organism_id: pop.members[best].genome.content_id(),
        plan_digest: plan.digest(),
    }
}

/// Selection and reproduction on a scored population.
pub fn next_generation(pop: &Population, cfg: &RunConfig) -> Result<Population, SsgaError> {
    let mut rng = stream(&[cfg.run_seed, pop.generation, SELECTION_SLOT]);
    let picks = select_survivors(&pop.members, &cfg.selection, &mut rng)?;
    let survivors: Vec<Member> = picks
        .iter()
        .map(|&(i, method)| Member {
            origin: Origin::Survivor(method),
            ..pop.members[i].clone()
        })
        .collect();
    let generation = pop.generation + 1;
    let members = reproduce(&survivors, cfg.population, &cfg.reproduction, cfg.run_seed, generation)?;
    Ok(Population { members, generation })
}

pub fn run_evolution(cfg: &RunConfig, evaluator: &dyn Evaluator) -> Result<RunResult, SsgaError> {
    run_evolution_with(cfg, evaluator, |_| {})
}

/// Runs `cfg.generations` generations, calling `on_record` after each one is scored.
pub fn run_evolution_with(
    cfg: &RunConfig,
    evaluator: &dyn Evaluator,
    mut on_record: impl FnMut(&GenerationRecord),
) -> Result<RunResult, SsgaError> {
    let mut pop = cfg.initial_population()?;
    let mut log = Vec::new();
    loop {
        let record = score_generation(&mut pop, cfg, evaluator);
        on_record(&record);
        log.push(record);
        if pop.generation >= cfg.generations {
            break;
        }
        pop = next_generation(&pop, cfg)?;
    }
    let best = pop.members[ranking(&pop.members)[0]].clone();
    Ok(RunResult {
        final_population: pop,
        log,
        best,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::fitness::FitnessVariant;

    pub fn scored(seed: u64, n: usize, w: impl Fn(usize) -> f64) -> Vec<Member> {
        (0..n)
            .map(|i| Member {
                genome: random_genome(derive_seed(&[seed, i as u64]), &GenomeLimits::default()).unwrap(),
                fitness: Some(FitnessBreakdown {
                    w_bar: w(i),
                    ..FitnessBreakdown::invalid(FitnessVariant::A)
                }),
                origin: Origin::Initial,
            })
            .collect()
    }

    #[test]
    fn default_split_is_8_16_16() {
        let cfg = SelectionConfig::default();
        assert_eq!(cfg.survivors(200), 40);
        let counts: Vec<usize> = cfg.method_order.iter().map(|&m| cfg.count(m, 200)).collect();
        assert_eq!(counts, vec![8, 16, 16]);
        assert_eq!(cfg.survivors(20), 4);
        assert_eq!(cfg.count(Method::Elite, 20), 4);
        assert_eq!(cfg.count(Method::Roulette, 20) + cfg.count(Method::Tournament, 20), 0);
    }

    #[test]
    fn equal_fitness_elites_are_lowest_hash() {
        let members = scored(1, 40, |_| 1.0);
        let picks = select_survivors(&members, &SelectionConfig::default(), &mut stream(&[0])).unwrap();
        let mut hashes: Vec<u64> = members.iter().map(|m| m.genome.hash_key()).collect();
        hashes.sort();
        let elite: Vec<u64> = picks
            .iter()
            .filter(|p| p.1 == Method::Elite)
            .map(|p| members[p.0].genome.hash_key())
            .collect();
        assert_eq!(elite, hashes[..8]);
    }

    #[test]
    fn methods_are_mutually_exclusive() {
        let members = scored(2, 50, |i| (i % 7) as f64);
        let picks = select_survivors(&members, &SelectionConfig::default(), &mut stream(&[3])).unwrap();
        assert_eq!(picks.len(), 10);
        for a in &picks {
            for b in &picks {
                if a.0 == b.0 {
                    assert_eq!(a.1, b.1);
                }
            }
        }
    }

    #[test]
    fn empty_pool_is_reported() {
        // A repeated elite pass exhausts a two-member population before roulette runs.
        let members = scored(3, 2, |_| 1.0);
        let cfg = SelectionConfig {
            survival_fraction: 1.0,
            elite_count: 1,
            roulette_count: Some(1),
            method_order: vec![Method::Elite, Method::Elite, Method::Roulette],
            ..SelectionConfig::default()
        };
        assert_eq!(
            select_survivors(&members, &cfg, &mut stream(&[0])),
            Err(SsgaError::DegeneratePool(Method::Roulette))
        );
    }

    #[test]
    fn zero_fitness_roulette_is_uniform() {
        let members = scored(4, 30, |_| 0.0);
        let cfg = SelectionConfig {
            elite_count: 0,
            roulette_count: Some(6),
            ..SelectionConfig::default()
        };
        let picks = select_survivors(&members, &cfg, &mut stream(&[1])).unwrap();
        assert_eq!(picks.iter().filter(|p| p.1 == Method::Roulette).count(), 6);
    }

    #[test]
    fn reproduce_fills_vacancies() {
        let survivors = scored(5, 40, |_| 1.0);
        let next = reproduce(&survivors, 200, &ReproductionConfig::default(), 7, 1).unwrap();
        assert_eq!(next.len(), 200);
        for (a, b) in survivors.iter().zip(&next) {
            assert_eq!(a.genome, b.genome);
        }
        for m in &next[40..] {
            assert!(matches!(m.origin, Origin::Clone | Origin::Recombinant));
            m.genome.check_invariants().unwrap();
        }
    }

    #[test]
    fn single_survivor_yields_clones() {
        let survivors = scored(6, 1, |_| 1.0);
        let next = reproduce(&survivors, 30, &ReproductionConfig::default(), 1, 1).unwrap();
        assert!(next[1..].iter().all(|m| m.origin == Origin::Clone));
        assert_eq!(
            reproduce(&[], 3, &ReproductionConfig::default(), 1, 1),
            Err(SsgaError::NoSurvivors)
        );
    }

    fn small_run() -> RunConfig {
        RunConfig {
            population: 20,
            generations: 6,
            task: TaskSpec {
                placement: crate::foragingtask::Placement::Directions { r: 2, noise_p: 0.0 },
                ..TaskSpec::default()
            },
            run_seed: 17,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_generations_returns_scored_initial_population() {
        let cfg = RunConfig {
            generations: 0,
            ..small_run()
        };
        let r = run_evolution(&cfg, &SurrogateEvaluator).unwrap();
        assert_eq!(r.log.len(), 1);
        assert_eq!(r.final_population.generation, 0);
        assert!(r.final_population.members.iter().all(|m| m.fitness.is_some()));
    }

    #[test]
    fn surrogate_run_is_monotone_and_repeatable() {
        let cfg = small_run();
        let a = run_evolution(&cfg, &SurrogateEvaluator).unwrap();
        assert_eq!(a, run_evolution(&cfg, &SurrogateEvaluator).unwrap());
        assert_eq!(a.log.len(), 7);
        for (g, rec) in a.log.iter().enumerate() {
            assert_eq!(rec.generation, g as u64);
        }
        for w in a.log.windows(2) {
            assert!(w[1].best_w_bar >= w[0].best_w_bar);
        }
        assert_eq!(a.final_population.members.len(), 20);
    }

    #[test]
    fn seeded_run_starts_from_clones() {
        let seed = crate::morphogenome::tests::walker();
        let cfg = RunConfig {
            seed: SeedGenome::Genome(seed.clone()),
            ..small_run()
        };
        let pop = cfg.initial_population().unwrap();
        assert!(pop.members.iter().all(|m| m.genome == seed));
        let r = run_evolution(&cfg, &SurrogateEvaluator).unwrap();
        assert!(r.final_population.members.iter().any(|m| m.genome != seed));
    }
}

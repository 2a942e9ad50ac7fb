//! Fixed-inventory genetic-algorithm baseline.
//!
//! Individuals are sets of exactly [`GA_INVENTORY`] Gd positions. Variation
//! uses a set-preserving crossover and a swap mutation so the count never
//! changes; parents come from k-way tournaments. The loop is generational
//! with elitism and stops when the evaluation budget is spent exactly.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fitness::{FitnessConfig, Scored};
use crate::lattice::{free_cells, is_guide_tube, random_layout, Coord, LatticeLayout};
use crate::neutronics::{EvalRequest, Evaluator, FidelityTier};
use crate::record::EvalRecord;
use crate::Error;

/// Gd rods per GA individual.
pub const GA_INVENTORY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub tournament_k: usize,
    pub eval_budget: usize,
    pub elitism: usize,
    pub fidelity: FidelityTier,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 50,
            p_crossover: 0.5,
            p_mutation: 0.2,
            tournament_k: 3,
            eval_budget: 1000,
            elitism: 1,
            fidelity: FidelityTier::High,
            seed: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let fail = |m: &str| Err(Error::Config(format!("ga: {m}")));
        if self.population < 2 {
            return fail("population must be at least 2");
        }
        if self.eval_budget < self.population {
            return fail("eval_budget must be at least the population size");
        }
        if self.tournament_k == 0 || self.tournament_k > self.population {
            return fail("tournament_k must be in 1..=population");
        }
        if self.elitism >= self.population {
            return fail("elitism must be smaller than the population");
        }
        for p in [self.p_crossover, self.p_mutation] {
            if !(0.0..=1.0).contains(&p) {
                return fail("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// A fixed-size set of Gd positions, optionally with its evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    positions: BTreeSet<Coord>,
    scored: Option<Scored>,
}

impl Individual {
    pub fn new(positions: BTreeSet<Coord>) -> Result<Self, Error> {
        if positions.len() != GA_INVENTORY {
            return Err(Error::Config(format!(
                "individual needs {GA_INVENTORY} Gd positions, got {}",
                positions.len()
            )));
        }
        if let Some(c) = positions.iter().find(|c| is_guide_tube(**c)) {
            return Err(Error::Config(format!(
                "Gd position ({}, {}) is a guide tube",
                c.row(),
                c.col()
            )));
        }
        Ok(Individual {
            positions,
            scored: None,
        })
    }

    pub fn from_layout(layout: &LatticeLayout) -> Result<Self, Error> {
        Individual::new(layout.gd_positions().into_iter().collect())
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let layout = random_layout(GA_INVENTORY, rng).expect("16 <= 264");
        Individual::from_layout(&layout).expect("random layout is valid")
    }

    pub fn positions(&self) -> &BTreeSet<Coord> {
        &self.positions
    }

    pub fn scored(&self) -> Option<&Scored> {
        self.scored.as_ref()
    }

    pub fn layout(&self) -> LatticeLayout {
        LatticeLayout::from_gd_positions(self.positions.iter().copied())
            .expect("positions avoid guide tubes")
    }

    fn unevaluated(positions: BTreeSet<Coord>) -> Self {
        Individual {
            positions,
            scored: None,
        }
    }
}

/// Pads `set` with random free cells not yet in it, or trims random members,
/// until it holds exactly [`GA_INVENTORY`] positions.
fn repair<R: Rng + ?Sized>(set: &mut BTreeSet<Coord>, rng: &mut R) {
    while set.len() > GA_INVENTORY {
        let victim = *set
            .iter()
            .nth(rng.random_range(0..set.len()))
            .expect("in range");
        set.remove(&victim);
    }
    if set.len() < GA_INVENTORY {
        let mut pool: Vec<Coord> = free_cells()
            .iter()
            .copied()
            .filter(|c| !set.contains(c))
            .collect();
        pool.shuffle(rng);
        let need = GA_INVENTORY - set.len();
        set.extend(pool.into_iter().take(need));
    }
}

/// Set-based crossover: both children keep every shared position and split
/// the symmetric difference between them at random.
pub fn cx_set<R: Rng + ?Sized>(
    a: &Individual,
    b: &Individual,
    rng: &mut R,
) -> (Individual, Individual) {
    let shared: BTreeSet<Coord> = a.positions.intersection(&b.positions).copied().collect();
    let mut diff: Vec<Coord> = a
        .positions
        .symmetric_difference(&b.positions)
        .copied()
        .collect();
    diff.shuffle(rng);
    let (first, second) = diff.split_at(diff.len() / 2);
    let mut child_a = shared.clone();
    child_a.extend(first.iter().copied());
    let mut child_b = shared;
    child_b.extend(second.iter().copied());
    repair(&mut child_a, rng);
    repair(&mut child_b, rng);
    (
        Individual::unevaluated(child_a),
        Individual::unevaluated(child_b),
    )
}

/// Moves one random Gd rod to a random empty fuel cell.
pub fn mut_swap<R: Rng + ?Sized>(ind: &Individual, rng: &mut R) -> Individual {
    let mut positions = ind.positions.clone();
    let victim = *positions
        .iter()
        .nth(rng.random_range(0..positions.len()))
        .expect("in range");
    let empty: Vec<Coord> = free_cells()
        .iter()
        .copied()
        .filter(|c| !positions.contains(c))
        .collect();
    let target = empty[rng.random_range(0..empty.len())];
    positions.remove(&victim);
    positions.insert(target);
    Individual::unevaluated(positions)
}

/// Draws `k` distinct members and returns the index of the best one.
/// Every member must be evaluated.
pub fn select_tournament<R: Rng + ?Sized>(
    pop: &[Individual],
    k: usize,
    rng: &mut R,
    cfg: &FitnessConfig,
) -> usize {
    let scored = |i: usize| pop[i].scored.as_ref().expect("population is evaluated");
    index::sample(rng, pop.len(), k)
        .into_iter()
        .min_by(|&a, &b| scored(a).rank_cmp(scored(b), cfg))
        .expect("k >= 1")
}

/// One GA evaluation, as written to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaEvent {
    pub eval_index: usize,
    pub generation: usize,
    pub layout: LatticeLayout,
    pub k_eff: f64,
    pub fq: f64,
    pub fdh: f64,
    pub fitness: f64,
    pub gd_count: usize,
}

impl GaEvent {
    pub fn record(&self) -> EvalRecord {
        EvalRecord {
            eval_index: self.eval_index,
            layout: self.layout.clone(),
            k_eff: self.k_eff,
            fq: self.fq,
            fdh: self.fdh,
            fitness: self.fitness,
            gd_count: self.gd_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaRun {
    pub best: Scored,
    pub log: Vec<GaEvent>,
    pub generations: usize,
}

impl GaRun {
    pub fn evaluations(&self) -> usize {
        self.log.len()
    }
}

struct Budget<'a, E: ?Sized> {
    evaluator: &'a E,
    tier: FidelityTier,
    fitness: &'a FitnessConfig,
    log: Vec<GaEvent>,
}

impl<E: Evaluator + ?Sized> Budget<'_, E> {
    /// Evaluates every individual in `batch`, logging each call.
    fn evaluate(&mut self, batch: &mut [Individual], generation: usize) -> Result<(), Error> {
        let layouts: Vec<LatticeLayout> = batch.iter().map(Individual::layout).collect();
        let base = self.log.len();
        let requests: Vec<EvalRequest<'_>> = layouts
            .iter()
            .enumerate()
            .map(|(i, layout)| EvalRequest {
                layout,
                tier: self.tier,
                seed: (base + i) as u64 + 1,
            })
            .collect();
        let results = self.evaluator.evaluate_batch(&requests);
        for ((ind, layout), res) in batch.iter_mut().zip(layouts).zip(results) {
            let scored = Scored::new(layout, res?, self.fitness)?;
            self.log.push(GaEvent {
                eval_index: self.log.len(),
                generation,
                layout: scored.layout.clone(),
                k_eff: scored.result.k_eff,
                fq: scored.result.fq,
                fdh: scored.result.fdh,
                fitness: scored.fitness.total,
                gd_count: scored.layout.gd_count(),
            });
            ind.scored = Some(scored);
        }
        Ok(())
    }
}

fn sort_by_rank(pop: &mut [Individual], cfg: &FitnessConfig) {
    pop.sort_by(|a, b| {
        a.scored
            .as_ref()
            .expect("evaluated")
            .rank_cmp(b.scored.as_ref().expect("evaluated"), cfg)
    });
}

pub fn run_ga<E: Evaluator + ?Sized>(
    cfg: &GaConfig,
    evaluator: &E,
    fitness_cfg: &FitnessConfig,
) -> Result<GaRun, Error> {
    cfg.validate()?;
    fitness_cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut budget = Budget {
        evaluator,
        tier: cfg.fidelity,
        fitness: fitness_cfg,
        log: Vec::with_capacity(cfg.eval_budget),
    };

    let mut population: Vec<Individual> = (0..cfg.population)
        .map(|_| Individual::random(&mut rng))
        .collect();
    budget.evaluate(&mut population, 0)?;
    sort_by_rank(&mut population, fitness_cfg);
    let mut best = population[0].scored.clone().expect("evaluated");

    let mut generation = 0;
    while budget.log.len() < cfg.eval_budget {
        generation += 1;
        let n_offspring = cfg.population.min(cfg.eval_budget - budget.log.len());
        let mut offspring: Vec<Individual> = (0..n_offspring)
            .map(|_| {
                let i = select_tournament(&population, cfg.tournament_k, &mut rng, fitness_cfg);
                Individual::unevaluated(population[i].positions.clone())
            })
            .collect();
        for pair in offspring.chunks_exact_mut(2) {
            if rng.random::<f64>() < cfg.p_crossover {
                let (a, b) = cx_set(&pair[0], &pair[1], &mut rng);
                pair[0] = a;
                pair[1] = b;
            }
        }
        for child in offspring.iter_mut() {
            if rng.random::<f64>() < cfg.p_mutation {
                *child = mut_swap(child, &mut rng);
            }
        }
        budget.evaluate(&mut offspring, generation)?;
        sort_by_rank(&mut offspring, fitness_cfg);

        // Elites from the old population, then the best offspring, then (only
        // on a short final generation) the remaining old members.
        let mut next: Vec<Individual> = population[..cfg.elitism].to_vec();
        let keep = (cfg.population - cfg.elitism).min(offspring.len());
        next.extend(offspring.into_iter().take(keep));
        next.extend(
            population
                .into_iter()
                .skip(cfg.elitism)
                .take(cfg.population - next.len()),
        );
        sort_by_rank(&mut next, fitness_cfg);
        population = next;

        let gen_best = population[0].scored.as_ref().expect("evaluated");
        if gen_best.rank_cmp(&best, fitness_cfg).is_lt() {
            best = gen_best.clone();
        }
    }

    Ok(GaRun {
        best,
        log: budget.log,
        generations: generation,
    })
}

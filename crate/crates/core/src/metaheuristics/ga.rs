use rand::Rng as _;

use super::fitness::{FitnessEvaluator, FitnessSpec};
use super::pheromone::{sample_mask_from_pheromone, PheromoneTable};
use super::{AcoParams, Best, GaParams, SearchResult};
use crate::dataset::{Dataset, FeatureMask};
use crate::error::Result;
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

pub(crate) type Population<T> = Vec<(FeatureMask, T)>;

/// Initial GA population: every bit a fair coin, with the same empty-draw
/// repair as ant construction.
fn random_population<T: Scalar>(d: usize, size: usize, rng: &mut Rng) -> Vec<FeatureMask> {
    let table = PheromoneTable::<T>::uniform(d, 0.5);
    let coin = AcoParams {
        alpha: 0.0,
        beta: 0.0,
        heuristic: None,
        ..AcoParams::default()
    };
    (0..size)
        .map(|_| sample_mask_from_pheromone(&table, &coin, rng))
        .collect()
}

fn tournament<'a, T: Scalar>(pop: &'a Population<T>, size: usize, rng: &mut Rng) -> &'a FeatureMask {
    let mut best = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.gen_range(0..pop.len())];
        if super::outranks(c.1, &c.0, best.1, &best.0) {
            best = c;
        }
    }
    &best.0
}

fn mutate(mask: &mut FeatureMask, rate: f64, rng: &mut Rng) {
    for i in 0..mask.len() {
        if rng.gen::<f64>() < rate {
            mask.set(i, !mask.get(i));
        }
    }
    if !mask.any() {
        let i = rng.gen_range(0..mask.len());
        mask.set(i, true);
    }
}

/// Runs `ga.n_generations` generations from `pop`, returning the final
/// population. `on_generation` sees the best-ever record after each one.
pub(crate) fn evolve<T: Scalar>(
    mut pop: Population<T>,
    ga: &GaParams,
    eval: &FitnessEvaluator<T>,
    rng: &mut Rng,
    best: &mut Best<T>,
    mut on_generation: impl FnMut(&Best<T>),
) -> Result<Population<T>> {
    let d = eval.n_features();
    let size = pop.len();
    let mutation = ga.mutation_rate.unwrap_or(1.0 / d as f64);
    for _ in 0..ga.n_generations {
        super::rank(&mut pop);
        let mut next: Vec<FeatureMask> = pop.iter().take(ga.elitism).map(|(m, _)| m.clone()).collect();
        while next.len() < size {
            let a = tournament(&pop, ga.tournament_size, rng).clone();
            let b = tournament(&pop, ga.tournament_size, rng).clone();
            let (mut c1, mut c2) = if rng.gen::<f64>() < ga.crossover_rate {
                let mut c1 = a.clone();
                let mut c2 = b.clone();
                for i in 0..d {
                    if rng.gen::<bool>() {
                        c1.set(i, b.get(i));
                        c2.set(i, a.get(i));
                    }
                }
                (c1, c2)
            } else {
                (a, b)
            };
            mutate(&mut c1, mutation, rng);
            mutate(&mut c2, mutation, rng);
            next.push(c1);
            if next.len() < size {
                next.push(c2);
            }
        }
        let fitness = eval.evaluate_many(&next)?;
        pop = next.into_iter().zip(fitness).collect();
        best.observe(&pop);
        on_generation(best);
    }
    Ok(pop)
}

/// Standalone genetic search. `history[0]` is the best of the initial
/// population, followed by the best-ever fitness after each generation.
pub fn ga_select<T: Scalar>(
    train: &Dataset<T>,
    ga: &GaParams,
    spec: &FitnessSpec,
    seed: u64,
) -> Result<SearchResult<T>> {
    let eval = FitnessEvaluator::new(train, spec)?;
    ga_select_with(&eval, ga, seed)
}

pub fn ga_select_with<T: Scalar>(eval: &FitnessEvaluator<T>, ga: &GaParams, seed: u64) -> Result<SearchResult<T>> {
    let size = ga.population_size(AcoParams::default().n_ants);
    ga.validate(size)?;
    let mut rng = rng::seeded(seed);
    let masks = random_population::<T>(eval.n_features(), size, &mut rng);
    let fitness = eval.evaluate_many(&masks)?;
    let pop: Population<T> = masks.into_iter().zip(fitness).collect();
    let mut best = Best::new(eval.n_features());
    best.observe(&pop);
    let mut history = vec![best.fitness];
    evolve(pop, ga, eval, &mut rng, &mut best, |b| history.push(b.fitness))?;
    Ok(best.finish(history, eval.evaluations()))
}

use super::fitness::{FitnessEvaluator, FitnessSpec};
use super::ga::{evolve, Population};
use super::pheromone::{pheromone_update, sample_mask_from_pheromone, PheromoneTable};
use super::{rank, AcoParams, Best, GaParams, SearchResult};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

fn construct<T: Scalar>(
    table: &PheromoneTable<T>,
    aco: &AcoParams,
    eval: &FitnessEvaluator<T>,
    rng: &mut Rng,
) -> Result<Population<T>> {
    let masks: Vec<_> = (0..aco.n_ants)
        .map(|_| sample_mask_from_pheromone(table, aco, rng))
        .collect();
    let fitness = eval.evaluate_many(&masks)?;
    Ok(masks.into_iter().zip(fitness).collect())
}

fn deposit<T: Scalar>(table: &PheromoneTable<T>, mut pop: Population<T>, aco: &AcoParams) -> PheromoneTable<T> {
    rank(&mut pop);
    pop.truncate(aco.q_elites);
    pop.retain(|(_, f)| f.is_finite());
    pheromone_update(table, &pop, aco)
}

/// Binary ant colony search. `history` holds the best-ever fitness after
/// each iteration.
pub fn baco_select<T: Scalar>(
    train: &Dataset<T>,
    aco: &AcoParams,
    spec: &FitnessSpec,
    seed: u64,
) -> Result<SearchResult<T>> {
    let eval = FitnessEvaluator::new(train, spec)?;
    baco_select_with(&eval, aco, seed)
}

pub fn baco_select_with<T: Scalar>(eval: &FitnessEvaluator<T>, aco: &AcoParams, seed: u64) -> Result<SearchResult<T>> {
    hybrid(eval, aco, None, seed)
}

/// Hybrid search: every ant colony is refined by a GA run, and the GA's final
/// top `q_elites` individuals deposit pheromone. `history` holds the
/// best-ever fitness after each ant iteration. The GA population size is
/// `n_ants`.
pub fn ga_baco_select<T: Scalar>(
    train: &Dataset<T>,
    aco: &AcoParams,
    ga: &GaParams,
    spec: &FitnessSpec,
    seed: u64,
) -> Result<SearchResult<T>> {
    let eval = FitnessEvaluator::new(train, spec)?;
    ga_baco_select_with(&eval, aco, ga, seed)
}

pub fn ga_baco_select_with<T: Scalar>(
    eval: &FitnessEvaluator<T>,
    aco: &AcoParams,
    ga: &GaParams,
    seed: u64,
) -> Result<SearchResult<T>> {
    ga.validate(aco.n_ants)?;
    hybrid(eval, aco, Some(ga), seed)
}

fn hybrid<T: Scalar>(
    eval: &FitnessEvaluator<T>,
    aco: &AcoParams,
    ga: Option<&GaParams>,
    seed: u64,
) -> Result<SearchResult<T>> {
    let d = eval.n_features();
    aco.validate(d)?;
    let mut rng = rng::seeded(seed);
    let mut table = PheromoneTable::uniform(d, aco.tau0);
    let mut best = Best::new(d);
    let mut history = Vec::with_capacity(aco.n_iterations);
    for _ in 0..aco.n_iterations {
        let mut pop = construct(&table, aco, eval, &mut rng)?;
        best.observe(&pop);
        if let Some(ga) = ga {
            pop = evolve(pop, ga, eval, &mut rng, &mut best, |_| ())?;
        }
        table = deposit(&table, pop, aco);
        debug_assert!(table.within(aco.tau_bounds));
        history.push(best.fitness);
    }
    Ok(best.finish(history, eval.evaluations()))
}

/// Pheromone tables visited by a BACO run, one per iteration (initial
/// table first). Used to check the bound invariant.
pub fn baco_trace<T: Scalar>(eval: &FitnessEvaluator<T>, aco: &AcoParams, seed: u64) -> Result<Vec<PheromoneTable<T>>> {
    aco.validate(eval.n_features())?;
    let mut rng = rng::seeded(seed);
    let mut table = PheromoneTable::uniform(eval.n_features(), aco.tau0);
    let mut out = vec![table.clone()];
    for _ in 0..aco.n_iterations {
        let pop = construct(&table, aco, eval, &mut rng)?;
        table = deposit(&table, pop, aco);
        out.push(table.clone());
    }
    Ok(out)
}

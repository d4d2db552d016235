//! Wrapper feature-subset search: genetic algorithm, binary ant colony,
//! the GA-BACO hybrid, and an exhaustive oracle for small dimensions.

mod baco;
mod exhaustive;
mod fitness;
mod ga;
mod pheromone;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use baco::{baco_select, baco_select_with, baco_trace, ga_baco_select, ga_baco_select_with};
pub use exhaustive::{exhaustive_select, exhaustive_select_with, MAX_EXHAUSTIVE_DIM};
pub use fitness::{evaluate_fitness, FitnessEvaluator, FitnessSpec};
pub use ga::{ga_select, ga_select_with};
pub use pheromone::{pheromone_update, sample_mask_from_pheromone, PheromoneTable, EMPTY_RESAMPLES};

use crate::dataset::{Dataset, FeatureMask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcoParams {
    pub n_ants: usize,
    pub alpha: f64,
    pub beta: f64,
    pub n_iterations: usize,
    pub rho: f64,
    pub tau0: f64,
    /// Deposit scale `Q`.
    #[serde(rename = "Q", alias = "q_deposit", alias = "deposit")]
    pub deposit: f64,
    pub q_elites: usize,
    pub tau_bounds: [f64; 2],
    /// Per-feature desirability; `None` means 1 everywhere.
    pub heuristic: Option<Vec<f64>>,
}

impl Default for AcoParams {
    fn default() -> Self {
        Self {
            n_ants: 50,
            alpha: 1.0,
            beta: 0.0,
            n_iterations: 10,
            rho: 0.2,
            tau0: 0.5,
            deposit: 1.0,
            q_elites: 5,
            tau_bounds: [0.01, 10.0],
            heuristic: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParam(msg.into())
}

impl AcoParams {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.n_ants == 0 || self.n_iterations == 0 {
            return Err(invalid("n_ants and n_iterations must be positive"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite() && self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("alpha and beta must be finite and >= 0"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid(format!("rho {} outside (0, 1)", self.rho)));
        }
        let [lo, hi] = self.tau_bounds;
        if !(lo >= 0.0 && lo < self.tau0 && self.tau0 < hi && hi.is_finite()) {
            return Err(invalid(format!(
                "need 0 <= tau_min < tau0 < tau_max, got {lo} {} {hi}",
                self.tau0
            )));
        }
        if !(self.deposit >= 0.0 && self.deposit.is_finite()) {
            return Err(invalid("Q must be finite and >= 0"));
        }
        if self.q_elites == 0 || self.q_elites > self.n_ants {
            return Err(invalid(format!(
                "q_elites {} outside 1..={}",
                self.q_elites, self.n_ants
            )));
        }
        if let Some(h) = &self.heuristic {
            if h.len() != d {
                return Err(Error::LengthMismatch(h.len(), d));
            }
            if h.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(invalid("heuristic values must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub n_generations: usize,
    /// `None` uses the ant count.
    pub pop_size: Option<usize>,
    pub crossover_rate: f64,
    /// Per-bit flip probability; `None` means `1/d`.
    pub mutation_rate: Option<f64>,
    pub tournament_size: usize,
    pub elitism: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            n_generations: 20,
            pop_size: None,
            crossover_rate: 0.9,
            mutation_rate: None,
            tournament_size: 2,
            elitism: 1,
        }
    }
}

impl GaParams {
    pub fn population_size(&self, n_ants: usize) -> usize {
        self.pop_size.unwrap_or(n_ants)
    }

    /// Checks the parameters for a population of `pop_size`.
    pub fn validate(&self, pop_size: usize) -> Result<()> {
        if pop_size == 0 {
            return Err(invalid("pop_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(invalid("crossover_rate outside [0, 1]"));
        }
        if let Some(m) = self.mutation_rate {
            if !(0.0..=1.0).contains(&m) {
                return Err(invalid("mutation_rate outside [0, 1]"));
            }
        }
        if self.tournament_size < 2 {
            return Err(invalid("tournament_size must be >= 2"));
        }
        if self.elitism >= pop_size {
            return Err(invalid(format!(
                "elitism {} must be below pop_size {pop_size}",
                self.elitism
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult<T> {
    pub mask: FeatureMask,
    pub fitness: T,
    pub history: Vec<T>,
    /// Surrogate fits performed.
    pub evaluations: usize,
}

/// Total order used for ranking candidates: higher fitness, then fewer
/// features, then the smaller bit string.
pub(crate) fn outranks<T: Scalar>(fa: T, ma: &FeatureMask, fb: T, mb: &FeatureMask) -> bool {
    compare(fa, ma, fb, mb) == Ordering::Less
}

fn compare<T: Scalar>(fa: T, ma: &FeatureMask, fb: T, mb: &FeatureMask) -> Ordering {
    crate::scalar::cmp_scalar(fb, fa)
        .then(ma.count().cmp(&mb.count()))
        .then_with(|| ma.cmp(mb))
}

/// Sorts best first.
pub(crate) fn rank<T: Scalar>(pop: &mut [(FeatureMask, T)]) {
    pop.sort_by(|a, b| compare(a.1, &a.0, b.1, &b.0));
}

pub(crate) struct Best<T> {
    mask: FeatureMask,
    fitness: T,
}

impl<T: Scalar> Best<T> {
    fn new(d: usize) -> Self {
        Self {
            mask: FeatureMask::none(d),
            fitness: T::neg_infinity(),
        }
    }

    fn observe(&mut self, pop: &[(FeatureMask, T)]) {
        for (m, f) in pop {
            if outranks(*f, m, self.fitness, &self.mask) {
                self.mask = m.clone();
                self.fitness = *f;
            }
        }
    }

    fn finish(self, history: Vec<T>, evaluations: usize) -> SearchResult<T> {
        SearchResult {
            mask: self.mask,
            fitness: self.fitness,
            history,
            evaluations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchAlgo {
    Ga,
    Baco,
    #[serde(alias = "ga_baco", alias = "ga-baco")]
    Gabaco,
    Exhaustive,
}

impl std::str::FromStr for SearchAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ga" => Ok(Self::Ga),
            "baco" => Ok(Self::Baco),
            "gabaco" | "ga_baco" | "ga-baco" => Ok(Self::Gabaco),
            "exhaustive" => Ok(Self::Exhaustive),
            other => Err(invalid(format!("unknown search algorithm {other:?}"))),
        }
    }
}

/// Everything one search run needs apart from data and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub algo: SearchAlgo,
    pub aco: AcoParams,
    pub ga: GaParams,
    pub fitness: FitnessSpec,
    pub memoize: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            algo: SearchAlgo::Gabaco,
            aco: AcoParams::default(),
            ga: GaParams::default(),
            fitness: FitnessSpec::default(),
            memoize: true,
        }
    }
}

pub fn run_search<T: Scalar>(train: &Dataset<T>, cfg: &SearchConfig, seed: u64) -> Result<SearchResult<T>> {
    if cfg.algo == SearchAlgo::Exhaustive {
        return exhaustive_select(train, &cfg.fitness);
    }
    let eval = if cfg.memoize {
        FitnessEvaluator::new(train, &cfg.fitness)?
    } else {
        FitnessEvaluator::without_memo(train, &cfg.fitness)?
    };
    match cfg.algo {
        SearchAlgo::Ga => {
            let ga = GaParams {
                pop_size: Some(cfg.ga.population_size(cfg.aco.n_ants)),
                ..cfg.ga.clone()
            };
            ga_select_with(&eval, &ga, seed)
        }
        SearchAlgo::Baco => baco_select_with(&eval, &cfg.aco, seed),
        SearchAlgo::Gabaco => ga_baco_select_with(&eval, &cfg.aco, &cfg.ga, seed),
        SearchAlgo::Exhaustive => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::ClassifierConfig;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    /// `informative` leading columns drive the label, the rest are noise.
    fn planted(n: usize, d: usize, informative: usize, seed: u64) -> Dataset<f64> {
        let mut r = crate::rng::seeded(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
            let s: f64 = row[..informative].iter().sum::<f64>() + 0.3 * r.gen::<f64>();
            labels.push(u8::from(s > 0.15));
            rows.push(row);
        }
        Dataset::from_rows(&rows, labels).unwrap()
    }

    fn small_aco() -> AcoParams {
        AcoParams {
            n_ants: 12,
            n_iterations: 4,
            q_elites: 3,
            ..Default::default()
        }
    }

    fn small_ga() -> GaParams {
        GaParams {
            n_generations: 3,
            pop_size: Some(12),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_validate() {
        AcoParams::default().validate(10).unwrap();
        GaParams::default().validate(50).unwrap();
        FitnessSpec::default().validate().unwrap();
        assert!(AcoParams {
            tau0: 10.0,
            ..Default::default()
        }
        .validate(3)
        .is_err());
        assert!(AcoParams {
            q_elites: 51,
            ..Default::default()
        }
        .validate(3)
        .is_err());
        assert!(AcoParams {
            heuristic: Some(vec![1.0]),
            ..Default::default()
        }
        .validate(3)
        .is_err());
        assert!(GaParams {
            elitism: 4,
            ..Default::default()
        }
        .validate(4)
        .is_err());
        assert!(GaParams {
            tournament_size: 1,
            ..Default::default()
        }
        .validate(4)
        .is_err());
    }

    #[test]
    fn full_mask_without_penalty_is_validation_accuracy() {
        let ds = planted(80, 4, 2, 1);
        let spec = FitnessSpec {
            size_penalty_lambda: 0.0,
            seed: 3,
            ..Default::default()
        };
        let f = evaluate_fitness(&FeatureMask::all(4), &ds, &spec).unwrap();
        let split = crate::dataset::SplitSpec {
            t_percent: 0.2,
            seed: 3,
        };
        let (fit, val) = crate::dataset::stratified_split(&ds, &split).unwrap();
        let model = ClassifierConfig::Gnb.train(&fit).unwrap();
        let pred = model.predict_dataset(&val).unwrap();
        let hits = pred.labels.iter().zip(val.labels()).filter(|(a, b)| a == b).count();
        assert_eq!(f, hits as f64 / val.n_samples() as f64);
    }

    #[test]
    fn penalty_prefers_smaller_masks() {
        // f0 alone decides the label; f1 duplicates it so accuracy is equal.
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, i as f64]).collect();
        let labels = (0..40).map(|i| u8::from(i >= 20)).collect();
        let ds = Dataset::from_rows(&rows, labels).unwrap();
        let spec = FitnessSpec::default();
        let one = evaluate_fitness(&FeatureMask::from_indices(2, &[0]).unwrap(), &ds, &spec).unwrap();
        let both = evaluate_fitness(&FeatureMask::all(2), &ds, &spec).unwrap();
        assert!(one > both);
        assert!((one - both - 0.005).abs() < 1e-12);
    }

    #[test]
    fn deciding_feature_beats_adding_noise() {
        let mut r = crate::rng::seeded(5);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![if i < 30 { -1.0 } else { 1.0 } + 0.1 * r.gen::<f64>(), r.gen()])
            .collect();
        let labels = (0..60).map(|i| u8::from(i >= 30)).collect();
        let ds = Dataset::from_rows(&rows, labels).unwrap();
        let spec = FitnessSpec::default();
        let f0 = evaluate_fitness(&FeatureMask::from_indices(2, &[0]).unwrap(), &ds, &spec).unwrap();
        let f01 = evaluate_fitness(&FeatureMask::all(2), &ds, &spec).unwrap();
        assert!(f0 > f01);
    }

    #[test]
    fn empty_mask_is_never_chosen() {
        let ds = planted(40, 3, 1, 2);
        let f = evaluate_fitness(&FeatureMask::none(3), &ds, &FitnessSpec::default()).unwrap();
        assert_eq!(f, f64::NEG_INFINITY);
    }

    #[test]
    fn one_dimension_selects_the_only_mask() {
        let ds = planted(40, 1, 1, 4);
        let spec = FitnessSpec::default();
        let only = FeatureMask::all(1);
        assert_eq!(ga_select(&ds, &small_ga(), &spec, 1).unwrap().mask, only);
        assert_eq!(baco_select(&ds, &small_aco(), &spec, 1).unwrap().mask, only);
        assert_eq!(
            ga_baco_select(&ds, &small_aco(), &small_ga(), &spec, 1).unwrap().mask,
            only
        );
        assert_eq!(exhaustive_select(&ds, &spec).unwrap().mask, only);
    }

    #[test]
    fn exhaustive_matches_enumerated_table() {
        let ds = planted(60, 3, 2, 6);
        let spec = FitnessSpec {
            seed: 9,
            ..Default::default()
        };
        let mut table: Vec<(FeatureMask, f64)> = (1..8u32)
            .map(|c| {
                let m = FeatureMask::new((0..3).map(|i| c >> i & 1 == 1).collect());
                let f = evaluate_fitness(&m, &ds, &spec).unwrap();
                (m, f)
            })
            .collect();
        assert_eq!(table.len(), 7);
        table.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(a.0.count().cmp(&b.0.count()))
                .then(a.0.cmp(&b.0))
        });
        let got = exhaustive_select(&ds, &spec).unwrap();
        assert_eq!(got.mask, table[0].0);
        assert_eq!(got.fitness, table[0].1);
        assert_eq!(got.evaluations, 7);
    }

    #[test]
    fn exhaustive_tie_break() {
        // Two identical deciding columns plus noise: {f1} and {f0} tie.
        let mut r = crate::rng::seeded(8);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let v = if i < 20 { -1.0 } else { 1.0 };
                vec![v, v, r.gen()]
            })
            .collect();
        let labels = (0..40).map(|i| u8::from(i >= 20)).collect();
        let ds = Dataset::from_rows(&rows, labels).unwrap();
        let got = exhaustive_select(&ds, &FitnessSpec::default()).unwrap();
        assert_eq!(got.mask.bits(), &[false, true, false]);
    }

    #[test]
    fn exhaustive_rejects_large_dimension() {
        let ds = planted(30, 21, 1, 1);
        assert!(matches!(
            exhaustive_select(&ds, &FitnessSpec::default()),
            Err(Error::DimensionTooLarge(21))
        ));
    }

    #[test]
    fn histories_are_monotone_and_bounded_by_oracle() {
        let ds = planted(120, 8, 3, 11);
        let spec = FitnessSpec {
            seed: 2,
            ..Default::default()
        };
        let oracle = exhaustive_select(&ds, &spec).unwrap().fitness;
        let results = [
            ga_select(&ds, &small_ga(), &spec, 5).unwrap(),
            baco_select(&ds, &small_aco(), &spec, 5).unwrap(),
            ga_baco_select(&ds, &small_aco(), &small_ga(), &spec, 5).unwrap(),
        ];
        for r in &results {
            assert!(r.history.windows(2).all(|w| w[0] <= w[1]), "{:?}", r.history);
            assert_eq!(*r.history.last().unwrap(), r.fitness);
            assert!(r.fitness <= oracle);
        }
        assert_eq!(results[0].history.len(), 4);
        assert_eq!(results[1].history.len(), 4);
    }

    #[test]
    fn pheromone_stays_within_bounds() {
        let ds = planted(100, 6, 2, 12);
        let eval = FitnessEvaluator::new(&ds, &FitnessSpec::default()).unwrap();
        let aco = AcoParams {
            n_iterations: 15,
            ..small_aco()
        };
        for table in baco_trace(&eval, &aco, 3).unwrap() {
            assert!(table.within(aco.tau_bounds));
        }
    }

    #[test]
    fn hybrid_without_generations_is_baco() {
        let ds = planted(100, 7, 2, 13);
        let spec = FitnessSpec::default();
        let ga = GaParams {
            n_generations: 0,
            ..small_ga()
        };
        for seed in 0..3 {
            let a = baco_select(&ds, &small_aco(), &spec, seed).unwrap();
            let b = ga_baco_select(&ds, &small_aco(), &ga, &spec, seed).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn memoization_does_not_change_results() {
        let ds = planted(100, 7, 2, 14);
        for algo in [SearchAlgo::Ga, SearchAlgo::Baco, SearchAlgo::Gabaco] {
            let cfg = SearchConfig {
                algo,
                aco: small_aco(),
                ga: small_ga(),
                ..Default::default()
            };
            let a = run_search(&ds, &cfg, 21).unwrap();
            let b = run_search(&ds, &SearchConfig { memoize: false, ..cfg }, 21).unwrap();
            assert_eq!((a.mask, a.fitness, a.history), (b.mask, b.fitness, b.history));
            assert!(a.evaluations <= b.evaluations);
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let ds = planted(100, 9, 3, 15);
        let cfg = SearchConfig {
            aco: small_aco(),
            ga: small_ga(),
            ..Default::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_search(&ds, &cfg, 4).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn search_config_json_round_trip() {
        let cfg = SearchConfig {
            aco: AcoParams {
                heuristic: Some(vec![0.5, 1.0]),
                ..Default::default()
            },
            ..Default::default()
        };
        let s = serde_json::to_string(&cfg).unwrap();
        assert!(s.contains("\"Q\":1.0"));
        let back: SearchConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        let partial: SearchConfig = serde_json::from_str(r#"{"algo":"ga","aco":{"n_ants":8}}"#).unwrap();
        assert_eq!(partial.algo, SearchAlgo::Ga);
        assert_eq!(partial.aco.n_ants, 8);
        assert_eq!(partial.aco.q_elites, 5);
        assert_eq!("gabaco".parse::<SearchAlgo>().unwrap(), SearchAlgo::Gabaco);
    }
}

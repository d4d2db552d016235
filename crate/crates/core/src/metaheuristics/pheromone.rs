use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::AcoParams;
use crate::dataset::FeatureMask;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Extra draws allowed when an ant samples the empty mask.
pub const EMPTY_RESAMPLES: usize = 8;

/// Two pheromone values per feature: `tau[i][v]` for bit value `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PheromoneTable<T> {
    pub tau: Vec<[T; 2]>,
}

impl<T: Scalar> PheromoneTable<T> {
    pub fn uniform(d: usize, tau0: f64) -> Self {
        Self {
            tau: vec![[T::lit(tau0); 2]; d],
        }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn within(&self, bounds: [f64; 2]) -> bool {
        let (lo, hi) = (T::lit(bounds[0]), T::lit(bounds[1]));
        self.tau.iter().flatten().all(|&v| v >= lo && v <= hi)
    }

    /// `P_i(1) = tau_i(1)^a * eta_i^b / (tau_i(1)^a * eta_i^b + tau_i(0)^a)`,
    /// with `eta_i = 1` when no heuristic is configured.
    pub fn inclusion_probabilities(&self, params: &AcoParams) -> Vec<f64> {
        self.tau
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let eta = params.heuristic.as_ref().map_or(1.0, |h| h[i]);
                let on = t[1].to_f64_lossy().powf(params.alpha) * eta.powf(params.beta);
                let off = t[0].to_f64_lossy().powf(params.alpha);
                if on + off > 0.0 {
                    on / (on + off)
                } else {
                    0.5
                }
            })
            .collect()
    }
}

/// Draws one ant's mask. An all-zero draw is retried up to
/// [`EMPTY_RESAMPLES`] times, then only the most probable bit is set.
pub fn sample_mask_from_pheromone<T: Scalar>(
    table: &PheromoneTable<T>,
    params: &AcoParams,
    rng: &mut Rng,
) -> FeatureMask {
    let probs = table.inclusion_probabilities(params);
    for _ in 0..=EMPTY_RESAMPLES {
        let bits: Vec<bool> = probs.iter().map(|&p| rng.gen::<f64>() < p).collect();
        if bits.iter().any(|&b| b) {
            return FeatureMask::new(bits);
        }
    }
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    let mut mask = FeatureMask::none(probs.len());
    if !probs.is_empty() {
        mask.set(best, true);
    }
    mask
}

/// Evaporates every entry by `rho`, then each elite deposits
/// `Q * max(fitness, 0)` on the bit value it chose for every feature.
/// Entries are clamped to the configured bounds.
pub fn pheromone_update<T: Scalar>(
    table: &PheromoneTable<T>,
    elites: &[(FeatureMask, T)],
    params: &AcoParams,
) -> PheromoneTable<T> {
    let keep = T::one() - T::lit(params.rho);
    let (lo, hi) = (T::lit(params.tau_bounds[0]), T::lit(params.tau_bounds[1]));
    let mut tau: Vec<[T; 2]> = table.tau.iter().map(|t| [t[0] * keep, t[1] * keep]).collect();
    for (mask, fitness) in elites {
        let deposit = T::lit(params.deposit) * fitness.max(T::zero());
        for (i, t) in tau.iter_mut().enumerate() {
            t[usize::from(mask.get(i))] += deposit;
        }
    }
    for t in &mut tau {
        t[0] = t[0].max(lo).min(hi);
        t[1] = t[1].max(lo).min(hi);
    }
    PheromoneTable { tau }
}

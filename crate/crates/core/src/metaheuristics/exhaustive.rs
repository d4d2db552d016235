use rayon::prelude::*;

use super::fitness::{FitnessEvaluator, FitnessSpec};
use super::{outranks, SearchResult};
use crate::dataset::{Dataset, FeatureMask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_EXHAUSTIVE_DIM: usize = 20;

fn mask_from_code(code: u32, d: usize) -> FeatureMask {
    FeatureMask::new((0..d).map(|i| code >> i & 1 == 1).collect())
}

/// Scores every nonempty mask and returns the best. Ties go to the smaller
/// mask, then to the smaller bit string (`false < true`, feature 0 first).
pub fn exhaustive_select<T: Scalar>(train: &Dataset<T>, spec: &FitnessSpec) -> Result<SearchResult<T>> {
    let d = train.n_features();
    if d > MAX_EXHAUSTIVE_DIM {
        return Err(Error::DimensionTooLarge(d));
    }
    let eval = FitnessEvaluator::without_memo(train, spec)?;
    exhaustive_select_with(&eval)
}

pub fn exhaustive_select_with<T: Scalar>(eval: &FitnessEvaluator<T>) -> Result<SearchResult<T>> {
    let d = eval.n_features();
    if d > MAX_EXHAUSTIVE_DIM {
        return Err(Error::DimensionTooLarge(d));
    }
    let (mask, fitness) = (1u32..1 << d)
        .into_par_iter()
        .map(|code| {
            let mask = mask_from_code(code, d);
            eval.evaluate(&mask).map(|f| (mask, f))
        })
        .try_reduce_with(|a, b| Ok(if outranks(b.1, &b.0, a.1, &a.0) { b } else { a }))
        .expect("at least one nonempty mask")?;
    Ok(SearchResult {
        mask,
        fitness,
        history: vec![fitness],
        evaluations: eval.evaluations(),
    })
}

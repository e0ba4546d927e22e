//! Exact interventional Shapley values by full coalition enumeration.
//!
//! With three features there are only eight coalitions, so every value
//! function `v(S)` is computed directly: the mean prediction over the
//! background when features in `S` come from the instance and the rest from
//! each background row.

use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{FeatureMatrix, FeatureVector, N_FEATURES};
use crate::explanation::{rank, Attribution, DataPoint, Explanation, ExplanationDetail, ExplanationMethod, Family, Variant};
use crate::forest::Predictor;

const N_COALITIONS: usize = 1 << N_FEATURES;

#[derive(Debug, Error, PartialEq)]
pub enum ShapError {
    #[error("background sample is empty")]
    EmptyBackground,
    #[error("background_size must be at least 1")]
    InvalidConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapConfig {
    pub background_size: usize,
    pub background_seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            background_size: 100,
            background_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyExplanation {
    /// `v(∅)`: mean prediction over the background.
    pub base_value: f64,
    pub phi: [f64; N_FEATURES],
    pub instance: FeatureVector,
    pub predicted: f64,
}

/// Seeded subsample of `rows` without replacement, kept in source order.
/// Returns every row when `rows` is no larger than the requested size.
pub fn sample_background(rows: &FeatureMatrix, cfg: &ShapConfig) -> FeatureMatrix {
    if rows.len() <= cfg.background_size {
        return rows.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.background_seed);
    let mut picked = index::sample(&mut rng, rows.len(), cfg.background_size).into_vec();
    picked.sort_unstable();
    FeatureMatrix::from(picked.into_iter().map(|i| rows.rows[i]).collect::<Vec<_>>())
}

/// `|S|! (n - |S| - 1)! / n!` for every coalition size `|S|` in `0..n`.
fn coalition_weights() -> [f64; N_FEATURES] {
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let n = N_FEATURES;
    std::array::from_fn(|s| fact(s) * fact(n - s - 1) / fact(n))
}

/// `v(S)` for every coalition, indexed by bitmask (bit `j` set = feature `j`
/// taken from the instance).
pub fn coalition_values<P: Predictor + ?Sized>(p: &P, x: &FeatureVector, background: &FeatureMatrix) -> [f64; N_COALITIONS] {
    let xs = x.to_array();
    let n = background.len() as f64;
    std::array::from_fn(|mask| {
        let mut sum = 0.0;
        for b in &background.rows {
            let bs = b.to_array();
            let composite = std::array::from_fn(|j| if mask & (1 << j) != 0 { xs[j] } else { bs[j] });
            sum += p.predict(&FeatureVector::from_array(composite));
        }
        sum / n
    })
}

pub fn explain_shap<P: Predictor + ?Sized>(
    p: &P,
    x: &FeatureVector,
    background: &FeatureMatrix,
    cfg: &ShapConfig,
) -> Result<ShapleyExplanation, ShapError> {
    if cfg.background_size == 0 {
        return Err(ShapError::InvalidConfig);
    }
    if background.is_empty() {
        return Err(ShapError::EmptyBackground);
    }
    let background = sample_background(background, cfg);
    let v = coalition_values(p, x, &background);
    let weights = coalition_weights();

    let phi = std::array::from_fn(|j| {
        let bit = 1 << j;
        let mut total = 0.0;
        for mask in (0..N_COALITIONS).filter(|m| m & bit == 0) {
            let size = (mask as u32).count_ones() as usize;
            total += weights[size] * (v[mask | bit] - v[mask]);
        }
        total
    });
    Ok(ShapleyExplanation {
        base_value: v[0],
        phi,
        instance: *x,
        predicted: p.predict(x),
    })
}

/// Projects Shapley values onto the simplified or detailed explanation.
///
/// Detailed points follow the ranked order (descending `|φ|`) and carry the
/// running total from the base value up to the prediction.
pub fn shap_variant(e: &ShapleyExplanation, variant: Variant) -> Explanation {
    let values = e.instance.to_array();
    let ranked = rank(
        (0..N_FEATURES)
            .map(|j| Attribution {
                feature: j,
                raw_value: values[j],
                contribution: e.phi[j],
            })
            .collect(),
    );
    let detail = match variant {
        Variant::Simplified => None,
        Variant::Detailed => {
            let mut running = e.base_value;
            let points = ranked
                .iter()
                .map(|a| {
                    running += a.contribution;
                    DataPoint {
                        feature: a.feature,
                        raw_value: a.raw_value,
                        phi: a.contribution,
                        running_total: running,
                    }
                })
                .collect();
            Some(ExplanationDetail::Shap {
                base_value: e.base_value,
                points,
            })
        }
    };
    Explanation {
        method: ExplanationMethod::from_parts(Family::Shap, variant),
        predicted: e.predicted,
        ranked,
        detail,
    }
}

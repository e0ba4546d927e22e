//! Local surrogate explanations: perturb the instance, weight the samples by
//! proximity, and fit a weighted ridge regression to the model's outputs.
//!
//! All work happens in standardized feature space (training mean and std).
//! Samples are drawn from a standard normal per feature, the instance itself
//! is sample 0, and proximity weights are `exp(-‖z - x‖² / width²)`.
//! Features whose training std is 0 stay fixed at the instance value and get
//! a coefficient of exactly 0.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dataset::{FeatureStats, FeatureVector, N_FEATURES};
use crate::explanation::{rank, Attribution, Explanation, ExplanationDetail, ExplanationMethod, Family, Variant};
use crate::forest::Predictor;

#[derive(Debug, Error, PartialEq)]
pub enum LimeError {
    #[error("every feature has zero variance in the training stats")]
    DegenerateStats,
    #[error("invalid LIME config: {0}")]
    InvalidConfig(String),
    #[error("surrogate normal equations are not positive definite")]
    SingularSystem,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimeConfig {
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub seed: u64,
    /// With every feature constant, fall back to an intercept-only surrogate
    /// instead of failing.
    pub allow_degenerate: bool,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            kernel_width: 0.75 * (N_FEATURES as f64).sqrt(),
            ridge_lambda: 1.0,
            seed: 42,
            allow_degenerate: false,
        }
    }
}

impl LimeConfig {
    fn validate(&self) -> Result<(), LimeError> {
        if self.n_samples < 10 {
            return Err(LimeError::InvalidConfig("n_samples must be at least 10".into()));
        }
        if !(self.kernel_width > 0.0 && self.kernel_width.is_finite()) {
            return Err(LimeError::InvalidConfig("kernel_width must be positive".into()));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(LimeError::InvalidConfig("ridge_lambda must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateExplanation {
    pub intercept: f64,
    /// Per-feature slopes in standardized space.
    pub coefficients: [f64; N_FEATURES],
    /// `coefficient × standardized instance value`.
    pub attributions: [f64; N_FEATURES],
    pub fidelity_r2: f64,
    pub instance: FeatureVector,
    pub predicted: f64,
}

/// The sampled neighbourhood a surrogate is fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct LimeDesign {
    /// Standardized samples; row 0 is the instance.
    pub samples: Vec<[f64; N_FEATURES]>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    /// Features with non-zero training std.
    pub active: [bool; N_FEATURES],
    pub instance_std: [f64; N_FEATURES],
}

pub fn kernel_weight(distance_sq: f64, kernel_width: f64) -> f64 {
    (-distance_sq / (kernel_width * kernel_width)).exp()
}

fn scale(stats: &FeatureStats) -> f64 {
    if stats.std > 0.0 {
        stats.std
    } else {
        1.0
    }
}

pub fn standardize(x: &FeatureVector, stats: &[FeatureStats; N_FEATURES]) -> [f64; N_FEATURES] {
    let v = x.to_array();
    std::array::from_fn(|j| (v[j] - stats[j].mean) / scale(&stats[j]))
}

pub fn unstandardize(z: &[f64; N_FEATURES], stats: &[FeatureStats; N_FEATURES]) -> FeatureVector {
    FeatureVector::from_array(std::array::from_fn(|j| stats[j].mean + z[j] * scale(&stats[j])))
}

pub fn sample_design<P: Predictor + ?Sized>(
    p: &P,
    x: &FeatureVector,
    stats: &[FeatureStats; N_FEATURES],
    cfg: &LimeConfig,
) -> Result<LimeDesign, LimeError> {
    cfg.validate()?;
    let active: [bool; N_FEATURES] = std::array::from_fn(|j| stats[j].std > 0.0);
    if !active.iter().any(|&a| a) && !cfg.allow_degenerate {
        return Err(LimeError::DegenerateStats);
    }
    let x_std = standardize(x, stats);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut samples = Vec::with_capacity(cfg.n_samples);
    samples.push(x_std);
    for _ in 1..cfg.n_samples {
        let draw: [f64; N_FEATURES] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        samples.push(std::array::from_fn(|j| if active[j] { draw[j] } else { x_std[j] }));
    }

    let mut targets = Vec::with_capacity(samples.len());
    targets.push(p.predict(x));
    targets.extend(samples[1..].iter().map(|z| p.predict(&unstandardize(z, stats))));

    let weights = samples
        .iter()
        .map(|z| {
            let d2: f64 = z.iter().zip(&x_std).map(|(a, b)| (a - b) * (a - b)).sum();
            kernel_weight(d2, cfg.kernel_width)
        })
        .collect();

    Ok(LimeDesign {
        samples,
        targets,
        weights,
        active,
        instance_std: x_std,
    })
}

impl LimeDesign {
    /// Design rows `[1, z_j for active j]`.
    pub fn design_rows(&self) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|z| {
                std::iter::once(1.0)
                    .chain((0..N_FEATURES).filter(|&j| self.active[j]).map(|j| z[j]))
                    .collect()
            })
            .collect()
    }
}

/// Solves `(AᵀWA + λD)β = AᵀWy` where `D` is the identity with the first
/// (intercept) entry zeroed, via Cholesky factorization.
pub fn solve_weighted_ridge(
    rows: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, LimeError> {
    let k = rows.first().map_or(0, Vec::len);
    let mut gram = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for ((row, &y), &w) in rows.iter().zip(targets).zip(weights) {
        for a in 0..k {
            let wa = w * row[a];
            rhs[a] += wa * y;
            for b in 0..=a {
                gram[a][b] += wa * row[b];
            }
        }
    }
    for a in 1..k {
        gram[a][a] += lambda;
    }

    // Lower-triangular factor L with gram = L Lᵀ.
    let mut l = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..=a {
            let dot: f64 = (0..b).map(|c| l[a][c] * l[b][c]).sum();
            if a == b {
                let d = gram[a][a] - dot;
                if !(d > 0.0) {
                    return Err(LimeError::SingularSystem);
                }
                l[a][a] = d.sqrt();
            } else {
                l[a][b] = (gram[a][b] - dot) / l[b][b];
            }
        }
    }
    let mut fwd = vec![0.0; k];
    for a in 0..k {
        let dot: f64 = (0..a).map(|c| l[a][c] * fwd[c]).sum();
        fwd[a] = (rhs[a] - dot) / l[a][a];
    }
    let mut beta = vec![0.0; k];
    for a in (0..k).rev() {
        let dot: f64 = (a + 1..k).map(|c| l[c][a] * beta[c]).sum();
        beta[a] = (fwd[a] - dot) / l[a][a];
    }
    Ok(beta)
}

/// Weighted coefficient of determination of `fitted` against `targets`.
pub fn weighted_r2(targets: &[f64], fitted: &[f64], weights: &[f64]) -> f64 {
    let total_w: f64 = weights.iter().sum();
    let mean = targets.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / total_w;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for ((y, f), w) in targets.iter().zip(fitted).zip(weights) {
        ss_res += w * (y - f) * (y - f);
        ss_tot += w * (y - mean) * (y - mean);
    }
    // A flat target leaves only rounding noise in ss_tot; score the fit as
    // perfect if its residual is noise-sized too.
    let noise = 1e-20 * total_w * mean.abs().max(1.0).powi(2);
    if ss_tot <= noise {
        return if ss_res <= noise { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

pub fn fit_surrogate(design: &LimeDesign, instance: FeatureVector, lambda: f64) -> Result<SurrogateExplanation, LimeError> {
    let rows = design.design_rows();
    let beta = solve_weighted_ridge(&rows, &design.targets, &design.weights, lambda)?;
    let fitted: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect();

    let mut coefficients = [0.0; N_FEATURES];
    let mut next = 1;
    for j in 0..N_FEATURES {
        if design.active[j] {
            coefficients[j] = beta[next];
            next += 1;
        }
    }
    let attributions = std::array::from_fn(|j| coefficients[j] * design.instance_std[j]);
    Ok(SurrogateExplanation {
        intercept: beta[0],
        coefficients,
        attributions,
        fidelity_r2: weighted_r2(&design.targets, &fitted, &design.weights),
        instance,
        predicted: design.targets[0],
    })
}

pub fn explain_lime<P: Predictor + ?Sized>(
    p: &P,
    x: &FeatureVector,
    stats: &[FeatureStats; N_FEATURES],
    cfg: &LimeConfig,
) -> Result<SurrogateExplanation, LimeError> {
    let design = sample_design(p, x, stats, cfg)?;
    fit_surrogate(&design, *x, cfg.ridge_lambda)
}

/// Projects a surrogate fit onto the simplified or detailed explanation.
pub fn lime_variant(e: &SurrogateExplanation, variant: Variant) -> Explanation {
    let values = e.instance.to_array();
    let ranked = rank(
        (0..N_FEATURES)
            .map(|j| Attribution {
                feature: j,
                raw_value: values[j],
                contribution: e.attributions[j],
            })
            .collect(),
    );
    let detail = match variant {
        Variant::Simplified => None,
        Variant::Detailed => {
            let (pos, neg): (Vec<Attribution>, Vec<Attribution>) =
                ranked.iter().partition(|a| a.contribution >= 0.0);
            Some(ExplanationDetail::Lime {
                intercept: e.intercept,
                fidelity_r2: e.fidelity_r2,
                instance: e.instance,
                positive: (!pos.is_empty()).then_some(pos),
                negative: (!neg.is_empty()).then_some(neg),
            })
        }
    };
    Explanation {
        method: ExplanationMethod::from_parts(Family::Lime, variant),
        predicted: e.predicted,
        ranked,
        detail,
    }
}

//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance harness. Nothing here calls into the code it checks.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use traffic_xai::dataset::{feature_matrix, split, synthetic, write_csv, Dataset, FeatureMatrix, FeatureVector, TrafficRecord};
use traffic_xai::forest::{train, Forest, ForestConfig, Predictor};

pub const SAMPLE_CSV: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/utd19_sample.csv");

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Shapley values by the permutation definition: the average over all `n!`
/// feature orderings of each feature's marginal contribution, with every
/// coalition value recomputed from scratch over the background.
pub fn brute_force_shapley<P: Predictor + ?Sized>(p: &P, x: &FeatureVector, background: &FeatureMatrix) -> (f64, [f64; 3]) {
    let xs = x.to_array();
    let value = |coalition: &[usize]| -> f64 {
        let mut total = 0.0;
        for b in &background.rows {
            let mut z = b.to_array();
            for &j in coalition {
                z[j] = xs[j];
            }
            total += p.predict(&FeatureVector::from_array(z));
        }
        total / background.rows.len() as f64
    };
    let orderings = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut phi = [0.0; 3];
    for order in orderings {
        let mut members: Vec<usize> = Vec::new();
        for &j in &order {
            let before = value(&members);
            members.push(j);
            phi[j] += (value(&members) - before) / orderings.len() as f64;
        }
    }
    (value(&[]), phi)
}

/// Weighted ridge with an unpenalized intercept column, solved by Gaussian
/// elimination with partial pivoting on the normal equations.
pub fn gaussian_ridge(rows: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
    let k = rows[0].len();
    // Augmented matrix [XᵀWX + λD | XᵀWy].
    let mut m = vec![vec![0.0; k + 1]; k];
    for (i, row) in rows.iter().enumerate() {
        for a in 0..k {
            for b in 0..k {
                m[a][b] += w[i] * row[a] * row[b];
            }
            m[a][k] += w[i] * row[a] * y[i];
        }
    }
    for (a, r) in m.iter_mut().enumerate().skip(1) {
        r[a] += lambda;
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for r in col + 1..k {
            let f = m[r][col] / m[col][col];
            for c in col..=k {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut beta = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| m[r][c] * beta[c]).sum();
        beta[r] = (m[r][k] - s) / m[r][r];
    }
    beta
}

/// Synthetic rows plus a forest trained on the training split, the
/// inference split, and its feature matrix.
pub struct Trained {
    pub forest: Forest,
    pub train: Dataset,
    pub inference: Dataset,
}

pub fn trained(n_rows: usize, n_trees: usize, seed: u64) -> Trained {
    let d = synthetic(n_rows, seed);
    let (tr, inf) = split(&d, 0.8, 42).unwrap();
    let cfg = ForestConfig { n_trees, ..ForestConfig::default() };
    let forest = train(&feature_matrix(&tr), &tr.flows(), &cfg).unwrap();
    Trained { forest, train: tr, inference: inf }
}

/// Rows whose flow is a noise-free step function of occupancy alone, with
/// occupancy on a coarse grid so every level holds many rows, while interval
/// and speed vary independently.
pub fn occ_only_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let level = rng.random_range(0..12u32);
            let occ = 0.02 + 0.05 * f64::from(level);
            TrafficRecord {
                day: "2017-05-01".into(),
                interval: rng.random_range(0..288u32) * 300,
                detid: format!("D{i}"),
                flow: 400.0 + 3000.0 * occ - 2500.0 * occ * occ,
                occ,
                speed: 20.0 + 100.0 * rng.random::<f64>(),
                city: "testville".into(),
            }
        })
        .collect();
    Dataset {
        records,
        source: "occ-only".into(),
    }
}

pub fn random_instances(n: usize, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            FeatureVector::new(
                f64::from(rng.random_range(0..288u32) * 300),
                rng.random::<f64>() * 0.6,
                5.0 + rng.random::<f64>() * 115.0,
            )
        })
        .collect()
}

pub fn write_dataset(d: &Dataset, path: &Path) {
    write_csv(d, std::fs::File::create(path).unwrap()).unwrap();
}

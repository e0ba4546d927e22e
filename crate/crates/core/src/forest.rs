//! Random-forest regressor over `(interval, occ, speed)`.
//!
//! Every tree is a CART regressor grown on its own bootstrap sample, with all
//! three features considered at each split and variance reduction as the
//! criterion. Training is fully deterministic given the config seed; trees are
//! grown in parallel but each draws from its own ChaCha stream, so the result
//! does not depend on scheduling.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{feature_stats, FeatureMatrix, FeatureStats, FeatureVector, FEATURE_NAMES, N_FEATURES};

pub const FORMAT_MAGIC: &str = "traffic-xai-forest";
pub const FORMAT_VERSION: u32 = 1;
/// Default artifact file name.
pub const DEFAULT_MODEL_FILE: &str = "pretrained_model";

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("feature matrix has {rows} rows but {targets} targets were given")]
    ShapeMismatch { rows: usize, targets: usize },
    #[error("at least two training rows are required, got {0}")]
    DegenerateData(usize),
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("unsupported model format version {0}")]
    FormatVersionUnsupported(String),
    #[error("corrupt model artifact: {0}")]
    CorruptArtifact(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Anything that maps a feature vector to a flow prediction.
///
/// Implementations must be pure: the explainers call them many times and
/// rely on repeated calls agreeing exactly.
pub trait Predictor: Sync {
    fn predict(&self, x: &FeatureVector) -> f64;
}

impl<F> Predictor for F
where
    F: Fn(&FeatureVector) -> f64 + Sync,
{
    fn predict(&self, x: &FeatureVector) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

/// Flat node arena; node 0 is the root and children always follow parents.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self, ForestError> {
        if nodes.is_empty() {
            return Err(ForestError::CorruptArtifact("tree with no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if let TreeNode::Split {
                feature,
                left,
                right,
                threshold,
            } = *node
            {
                if feature >= N_FEATURES
                    || left <= i
                    || right <= i
                    || left >= nodes.len()
                    || right >= nodes.len()
                    || threshold.is_nan()
                {
                    return Err(ForestError::CorruptArtifact(format!("invalid split node {i}")));
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            bootstrap_seed: 42,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::InvalidConfig("min_samples_leaf must be at least 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(ForestError::InvalidConfig("max_depth must be positive".into()));
        }
        Ok(())
    }
}

/// How the training rows were carved out of the source file, so a consumer
/// holding the same file can recover the inference partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub config: ForestConfig,
    trees: Vec<Tree>,
    pub training_stats: [FeatureStats; N_FEATURES],
    pub split: Option<SplitSpec>,
}

impl Predictor for Forest {
    fn predict(&self, x: &FeatureVector) -> f64 {
        Forest::predict(self, x)
    }
}

impl Forest {
    /// Assembles a forest from prebuilt trees. `config.n_trees` is taken from
    /// `trees.len()`.
    pub fn from_trees(
        mut config: ForestConfig,
        trees: Vec<Tree>,
        training_stats: [FeatureStats; N_FEATURES],
    ) -> Result<Self, ForestError> {
        if trees.is_empty() {
            return Err(ForestError::InvalidConfig("a forest needs at least one tree".into()));
        }
        config.n_trees = trees.len();
        Ok(Self {
            config,
            trees,
            training_stats,
            split: None,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn feature_names(&self) -> [&'static str; N_FEATURES] {
        FEATURE_NAMES
    }

    /// Mean of the per-tree predictions, summed in tree order.
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let values = x.to_array();
        let mut sum = 0.0;
        for tree in &self.trees {
            sum += tree.predict(&values);
        }
        sum / self.trees.len() as f64
    }

    pub fn predict_batch(&self, x: &FeatureMatrix) -> Vec<f64> {
        x.rows.par_iter().map(|row| self.predict(row)).collect()
    }

    /// Feature indices that appear in at least one split.
    pub fn split_features(&self) -> BTreeSet<usize> {
        self.trees
            .iter()
            .flat_map(|t| t.nodes.iter())
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect()
    }
}

pub fn train(x: &FeatureMatrix, y: &[f64], cfg: &ForestConfig) -> Result<Forest, ForestError> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(ForestError::ShapeMismatch {
            rows: x.len(),
            targets: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(ForestError::DegenerateData(x.len()));
    }
    let columns: Vec<[f64; N_FEATURES]> = x.rows.iter().map(|r| r.to_array()).collect();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.bootstrap_seed);
            rng.set_stream(t as u64);
            let n = columns.len();
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            TreeBuilder {
                x: &columns,
                y,
                cfg,
                nodes: Vec::new(),
            }
            .build(sample)
        })
        .collect();
    let training_stats = feature_stats(x).map_err(|e| ForestError::InvalidConfig(e.to_string()))?;
    Ok(Forest {
        config: *cfg,
        trees,
        training_stats,
        split: None,
    })
}

struct TreeBuilder<'a> {
    x: &'a [[f64; N_FEATURES]],
    y: &'a [f64],
    cfg: &'a ForestConfig,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn build(mut self, rows: Vec<usize>) -> Tree {
        self.grow(rows, 0);
        Tree { nodes: self.nodes }
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(TreeNode::Leaf { value: mean });

        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&i| self.y[i] == first);
        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
        if pure || !depth_ok || rows.len() < 2 * self.cfg.min_samples_leaf {
            return id;
        }
        let Some(best) = self.best_split(&rows) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[i][best.feature] < best.threshold);
        let left_id = self.grow(left, depth + 1);
        let right_id = self.grow(right, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: left_id,
            right: right_id,
        };
        id
    }

    /// Exhaustive search over midpoints of consecutive distinct values.
    /// Only a strictly larger gain replaces the incumbent, so ties resolve to
    /// the lowest feature index and then the lowest threshold.
    fn best_split(&self, rows: &[usize]) -> Option<BestSplit> {
        let n = rows.len();
        let min_leaf = self.cfg.min_samples_leaf;
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let parent_score = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);

        for feature in 0..N_FEATURES {
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (self.x[i][feature], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += pairs[k - 1].1;
                let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
                if lo == hi || k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64;
                let gain = score - parent_score;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid > lo { mid } else { hi };
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Persistence

fn stats_line(name: &str, s: &FeatureStats) -> String {
    format!("stats {name} mean={} std={} min={} max={}", s.mean, s.std, s.min, s.max)
}

/// Serializes the forest into the versioned text artifact.
pub fn to_artifact_string(f: &Forest) -> String {
    let mut body = String::new();
    let cfg = &f.config;
    let _ = writeln!(body, "{FORMAT_MAGIC}");
    let _ = writeln!(body, "format_version {FORMAT_VERSION}");
    let depth = cfg.max_depth.map_or("none".to_string(), |d| d.to_string());
    let _ = writeln!(
        body,
        "config n_trees={} max_depth={depth} min_samples_leaf={} bootstrap_seed={}",
        cfg.n_trees, cfg.min_samples_leaf, cfg.bootstrap_seed
    );
    match f.split {
        Some(s) => {
            let _ = writeln!(body, "split train_fraction={} seed={}", s.train_fraction, s.seed);
        }
        None => body.push_str("split none\n"),
    }
    let _ = writeln!(body, "features {}", FEATURE_NAMES.join(" "));
    for (name, s) in FEATURE_NAMES.iter().zip(&f.training_stats) {
        body.push_str(&stats_line(name, s));
        body.push('\n');
    }
    for (t, tree) in f.trees.iter().enumerate() {
        let _ = writeln!(body, "tree {t} nodes={}", tree.nodes.len());
        for node in &tree.nodes {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(body, "S {feature} {threshold} {left} {right}");
                }
                TreeNode::Leaf { value } => {
                    let _ = writeln!(body, "L {value}");
                }
            }
        }
    }
    body.push_str("end\n");
    let digest = hex_digest(body.as_bytes());
    let _ = writeln!(body, "checksum sha256:{digest}");
    body
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn save<W: Write>(f: &Forest, mut sink: W) -> Result<(), ForestError> {
    sink.write_all(to_artifact_string(f).as_bytes())
        .and_then(|_| sink.flush())
        .map_err(|e| ForestError::Io(e.to_string()))
}

pub fn save_file(f: &Forest, path: &std::path::Path) -> Result<(), ForestError> {
    let file = std::fs::File::create(path)
        .map_err(|e| ForestError::Io(format!("{}: {e}", path.display())))?;
    save(f, std::io::BufWriter::new(file))
}

pub fn load_file(path: &std::path::Path) -> Result<Forest, ForestError> {
    let file = std::fs::File::open(path)
        .map_err(|e| ForestError::Io(format!("{}: {e}", path.display())))?;
    load(std::io::BufReader::new(file))
}

pub fn load<R: Read>(mut source: R) -> Result<Forest, ForestError> {
    let mut raw = Vec::new();
    source
        .read_to_end(&mut raw)
        .map_err(|e| ForestError::Io(e.to_string()))?;
    let text = String::from_utf8(raw).map_err(|_| corrupt("artifact is not valid UTF-8"))?;

    let mut lines = text.lines();
    if lines.next() != Some(FORMAT_MAGIC) {
        return Err(corrupt("missing format header"));
    }
    let version = lines
        .next()
        .and_then(|l| l.strip_prefix("format_version "))
        .ok_or_else(|| corrupt("missing format_version"))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(ForestError::FormatVersionUnsupported(version.to_string()));
    }

    let marker = "\nchecksum sha256:";
    let at = text.rfind(marker).ok_or_else(|| corrupt("missing checksum"))?;
    let body = &text[..=at];
    let stored = text[at + marker.len()..].trim_end_matches('\n');
    if stored != hex_digest(body.as_bytes()) {
        return Err(corrupt("checksum mismatch"));
    }
    parse_body(body)
}

fn corrupt(msg: &str) -> ForestError {
    ForestError::CorruptArtifact(msg.to_string())
}

/// Reads `key=value` fields following a fixed line prefix.
struct Fields<'a>(Vec<(&'a str, &'a str)>);

impl<'a> Fields<'a> {
    fn parse(line: &'a str, prefix: &str) -> Result<Self, ForestError> {
        let rest = line
            .strip_prefix(prefix)
            .ok_or_else(|| corrupt(&format!("expected `{prefix}` line")))?;
        Ok(Self(
            rest.split_whitespace()
                .filter_map(|kv| kv.split_once('='))
                .collect(),
        ))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, ForestError> {
        self.0
            .iter()
            .find(|(k, _)| *k == key)
            .and_then(|(_, v)| v.parse().ok())
            .ok_or_else(|| corrupt(&format!("bad or missing field `{key}`")))
    }

    fn raw(&self, key: &str) -> Result<&'a str, ForestError> {
        self.0
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| corrupt(&format!("missing field `{key}`")))
    }
}

fn parse_body(body: &str) -> Result<Forest, ForestError> {
    let mut lines = body.lines().skip(2);
    let mut next = || lines.next().ok_or_else(|| corrupt("unexpected end of artifact"));

    let cfg_line = Fields::parse(next()?, "config ")?;
    let max_depth = match cfg_line.raw("max_depth")? {
        "none" => None,
        d => Some(d.parse().map_err(|_| corrupt("bad max_depth"))?),
    };
    let config = ForestConfig {
        n_trees: cfg_line.get("n_trees")?,
        max_depth,
        min_samples_leaf: cfg_line.get("min_samples_leaf")?,
        bootstrap_seed: cfg_line.get("bootstrap_seed")?,
    };
    config.validate().map_err(|e| corrupt(&e.to_string()))?;

    let split_line = next()?;
    let split = if split_line == "split none" {
        None
    } else {
        let f = Fields::parse(split_line, "split ")?;
        Some(SplitSpec {
            train_fraction: f.get("train_fraction")?,
            seed: f.get("seed")?,
        })
    };

    let expected_features = format!("features {}", FEATURE_NAMES.join(" "));
    if next()? != expected_features {
        return Err(corrupt("unexpected feature names"));
    }
    let mut stats = [FeatureStats {
        mean: 0.0,
        std: 0.0,
        min: 0.0,
        max: 0.0,
    }; N_FEATURES];
    for (name, slot) in FEATURE_NAMES.iter().zip(stats.iter_mut()) {
        let f = Fields::parse(next()?, &format!("stats {name} "))?;
        *slot = FeatureStats {
            mean: f.get("mean")?,
            std: f.get("std")?,
            min: f.get("min")?,
            max: f.get("max")?,
        };
    }

    let mut trees = Vec::with_capacity(config.n_trees);
    for t in 0..config.n_trees {
        let header = next()?;
        let f = Fields::parse(header, &format!("tree {t} "))?;
        let count: usize = f.get("nodes")?;
        let mut nodes = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            nodes.push(parse_node(next()?)?);
        }
        trees.push(Tree::from_nodes(nodes)?);
    }
    if next()? != "end" {
        return Err(corrupt("trailing data after trees"));
    }
    Ok(Forest {
        config,
        trees,
        training_stats: stats,
        split,
    })
}

fn parse_node(line: &str) -> Result<TreeNode, ForestError> {
    let bad = || corrupt(&format!("bad node line `{line}`"));
    let parts: Vec<&str> = line.split(' ').collect();
    match parts.as_slice() {
        ["L", v] => Ok(TreeNode::Leaf {
            value: v.parse().map_err(|_| bad())?,
        }),
        ["S", f, t, l, r] => Ok(TreeNode::Split {
            feature: f.parse().map_err(|_| bad())?,
            threshold: t.parse().map_err(|_| bad())?,
            left: l.parse().map_err(|_| bad())?,
            right: r.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

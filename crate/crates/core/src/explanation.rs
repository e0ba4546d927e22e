//! Method-tagged attribution sets shared by both explainers and the renderer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureVector, FEATURE_NAMES};

/// The four explanation modes offered to users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplanationMethod {
    LimeSimplified,
    LimeDetailed,
    ShapSimplified,
    ShapDetailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Lime,
    Shap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Simplified,
    Detailed,
}

impl ExplanationMethod {
    pub const ALL: [ExplanationMethod; 4] = [
        Self::LimeSimplified,
        Self::LimeDetailed,
        Self::ShapSimplified,
        Self::ShapDetailed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LimeSimplified => "lime-simplified",
            Self::LimeDetailed => "lime-detailed",
            Self::ShapSimplified => "shap-simplified",
            Self::ShapDetailed => "shap-detailed",
        }
    }

    /// Human-facing label, e.g. for menus and headings.
    pub fn label(self) -> &'static str {
        match self {
            Self::LimeSimplified => "LIME - Simplified Explanation",
            Self::LimeDetailed => "LIME - Detailed Explanation",
            Self::ShapSimplified => "SHAP - Simplified Explanation",
            Self::ShapDetailed => "SHAP - Detailed Explanation",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Self::LimeSimplified | Self::LimeDetailed => Family::Lime,
            Self::ShapSimplified | Self::ShapDetailed => Family::Shap,
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            Self::LimeSimplified | Self::ShapSimplified => Variant::Simplified,
            Self::LimeDetailed | Self::ShapDetailed => Variant::Detailed,
        }
    }

    pub fn from_parts(family: Family, variant: Variant) -> Self {
        match (family, variant) {
            (Family::Lime, Variant::Simplified) => Self::LimeSimplified,
            (Family::Lime, Variant::Detailed) => Self::LimeDetailed,
            (Family::Shap, Variant::Simplified) => Self::ShapSimplified,
            (Family::Shap, Variant::Detailed) => Self::ShapDetailed,
        }
    }
}

impl fmt::Display for ExplanationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownMethod(pub String);

impl fmt::Display for UnknownMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown explanation method `{}`; expected one of: {}",
            self.0,
            ExplanationMethod::ALL.map(ExplanationMethod::as_str).join(", ")
        )
    }
}

impl std::error::Error for UnknownMethod {}

impl FromStr for ExplanationMethod {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

/// One feature's signed contribution to a single prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attribution {
    pub feature: usize,
    pub raw_value: f64,
    pub contribution: f64,
}

impl Attribution {
    pub fn name(&self) -> &'static str {
        FEATURE_NAMES[self.feature]
    }
}

/// Sorts by non-increasing `|contribution|`; equal magnitudes keep feature order.
pub fn rank(mut items: Vec<Attribution>) -> Vec<Attribution> {
    items.sort_by(|a, b| {
        b.contribution
            .abs()
            .total_cmp(&a.contribution.abs())
            .then(a.feature.cmp(&b.feature))
    });
    items
}

/// A SHAP data point, stepped through one at a time in detailed mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub feature: usize,
    pub raw_value: f64,
    pub phi: f64,
    /// Base value plus this and all earlier contributions.
    pub running_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExplanationDetail {
    Lime {
        intercept: f64,
        fidelity_r2: f64,
        instance: FeatureVector,
        /// Contributions `>= 0`; `None` when there are none.
        positive: Option<Vec<Attribution>>,
        /// Contributions `< 0`; `None` when there are none.
        negative: Option<Vec<Attribution>>,
    },
    Shap {
        base_value: f64,
        points: Vec<DataPoint>,
    },
}

impl ExplanationDetail {
    /// `[base, base + φ₁, …, prediction]` for SHAP; `None` for LIME.
    pub fn running_sums(&self) -> Option<Vec<f64>> {
        match self {
            Self::Shap { base_value, points } => Some(
                std::iter::once(*base_value)
                    .chain(points.iter().map(|p| p.running_total))
                    .collect(),
            ),
            Self::Lime { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub method: ExplanationMethod,
    pub predicted: f64,
    /// Always sorted by [`rank`].
    pub ranked: Vec<Attribution>,
    /// Present exactly for the detailed variants.
    pub detail: Option<ExplanationDetail>,
}

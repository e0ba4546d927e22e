//! Turns explanations into screen-reader-first artifacts.
//!
//! Everything here is a pure function of its inputs: the same explanation
//! always renders to byte-identical JSON. Text comes from fixed English
//! templates with numbers at one decimal place. Simplified modes produce a
//! paragraph plus a point-form list and never a table; detailed modes add a
//! `detail` block, and SHAP detailed adds one tone per data point.

pub mod contrast;
pub mod sonify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::N_FEATURES;
use crate::explanation::{Attribution, Explanation, ExplanationDetail, ExplanationMethod, Family, Variant};

pub use contrast::{contrast_ratio, high_contrast_dark, shipped_palettes, PaletteSpec, Rgb};
pub use sonify::{sonify, SonificationConfig, SonificationTrack, Tone};

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("explanation of kind `{found}` cannot be rendered as `{requested}`")]
    MethodMismatch {
        found: ExplanationMethod,
        requested: ExplanationMethod,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increases,
    Decreases,
    Neutral,
}

impl Direction {
    fn of(contribution: f64) -> Self {
        if contribution > 0.0 {
            Self::Increases
        } else if contribution < 0.0 {
            Self::Decreases
        } else {
            Self::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub feature: String,
    pub raw_value: f64,
    pub contribution: f64,
    pub direction: Direction,
    /// Sentence a screen reader announces for this item.
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignGroups {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<Vec<RankedItem>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative: Option<Vec<RankedItem>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointItem {
    pub feature: String,
    pub raw_value: f64,
    pub contribution: f64,
    pub running_total: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detail {
    /// SHAP base value or LIME surrogate intercept.
    pub base_or_intercept: f64,
    pub predicted: f64,
    /// Weighted R² of the LIME surrogate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_values: Option<Vec<FeatureValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_groups: Option<SignGroups>,
    /// `[base, base + φ₁, …, prediction]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running_sums: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<PointItem>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartBar {
    pub label: String,
    pub value: f64,
    /// Waterfall bars span `start..end`; plain bars start at 0.
    pub start: f64,
    pub end: f64,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    /// `bar` or `waterfall`.
    pub kind: String,
    pub title: String,
    pub value_axis_label: String,
    pub category_axis_label: String,
    pub bars: Vec<ChartBar>,
    pub palette: PaletteSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AriaSection {
    pub id: String,
    pub role: String,
    pub heading: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDescription {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AriaMeta {
    pub role: String,
    pub label: String,
    /// Politeness of the live region the summary is announced in.
    pub live: String,
    /// Section ids in reading order.
    pub reading_order: Vec<String>,
    pub sections: Vec<AriaSection>,
    pub descriptions: Vec<ElementDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessibleExplanation {
    pub method: ExplanationMethod,
    pub summary_text: String,
    pub ranked_items: Vec<RankedItem>,
    pub detail: Option<Detail>,
    pub sonification: Option<SonificationTrack>,
    pub chart_spec: ChartSpec,
    pub aria: AriaMeta,
}

impl AccessibleExplanation {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("explanations always serialize")
    }
}

// ---------------------------------------------------------------------------
// Number and feature formatting

/// One decimal place, never `-0.0`.
pub fn fmt1(v: f64) -> String {
    let s = format!("{v:.1}");
    if s == "-0.0" {
        "0.0".to_string()
    } else {
        s
    }
}

fn signed1(v: f64) -> String {
    let s = fmt1(v);
    if v > 0.0 && s != "0.0" {
        format!("+{s}")
    } else {
        s
    }
}

fn display_name(feature: usize) -> &'static str {
    ["time of day", "occupancy", "speed"][feature]
}

fn capitalized(feature: usize) -> &'static str {
    ["Time of day", "Occupancy", "Speed"][feature]
}

/// Raw feature value with its unit: `08:20`, `22.0%`, `85.0 km/h`.
pub fn format_value(feature: usize, value: f64) -> String {
    match feature {
        0 => {
            let secs = value.max(0.0).round() as u64;
            format!("{:02}:{:02}", (secs / 3600) % 24, (secs % 3600) / 60)
        }
        1 => format!("{}%", fmt1(value * 100.0)),
        _ => format!("{} km/h", fmt1(value)),
    }
}

/// "increases the predicted flow by 40.0", or "had no measurable effect"
/// when the magnitude rounds to zero at one decimal.
fn effect_phrase(contribution: f64) -> String {
    let magnitude = fmt1(contribution.abs());
    if magnitude == "0.0" {
        "had no measurable effect".to_string()
    } else if contribution > 0.0 {
        format!("increases the predicted flow by {magnitude}")
    } else {
        format!("decreases the predicted flow by {magnitude}")
    }
}

fn item_description(a: &Attribution) -> String {
    format!(
        "{} ({}) {}.",
        capitalized(a.feature),
        format_value(a.feature, a.raw_value),
        effect_phrase(a.contribution)
    )
}

fn point_description(p: &crate::explanation::DataPoint) -> String {
    format!(
        "{}, value {}, contribution {}, running total {}.",
        capitalized(p.feature),
        format_value(p.feature, p.raw_value),
        signed1(p.phi),
        fmt1(p.running_total)
    )
}

// ---------------------------------------------------------------------------
// Text

/// Deterministic summary paragraph: the prediction, the base value or
/// intercept where the method has one, then the top features in rank order.
pub fn describe_text(e: &Explanation, method: ExplanationMethod) -> String {
    let mut parts = vec![format!(
        "Predicted traffic flow: {} vehicles per hour.",
        fmt1(e.predicted)
    )];

    match method.family() {
        Family::Shap => parts.push(
            "SHAP splits the difference from the average prediction among the features.".into(),
        ),
        Family::Lime => parts.push(
            "LIME fits a simple local model around this reading to estimate each feature's effect."
                .into(),
        ),
    }
    match &e.detail {
        Some(ExplanationDetail::Shap { base_value, .. }) if method.variant() == Variant::Detailed => {
            parts.push(format!(
                "The average prediction over the reference data is {} vehicles per hour.",
                fmt1(*base_value)
            ));
        }
        Some(ExplanationDetail::Lime {
            intercept,
            fidelity_r2,
            ..
        }) if method.variant() == Variant::Detailed => {
            parts.push(format!(
                "The local model starts from {} vehicles per hour and reproduces the full model with a fit of {} percent.",
                fmt1(*intercept),
                fmt1(fidelity_r2 * 100.0)
            ));
        }
        _ => {}
    }

    let named: Vec<&Attribution> = e.ranked.iter().take(3.min(N_FEATURES)).collect();
    let silent = named.iter().all(|a| fmt1(a.contribution.abs()) == "0.0");
    if silent {
        let names: Vec<&str> = named.iter().map(|a| display_name(a.feature)).collect();
        let list = match names.as_slice() {
            [] => String::new(),
            [one] => (*one).to_string(),
            [init @ .., last] => format!("{} and {last}", init.join(", ")),
        };
        parts.push(format!("All features had no measurable effect: {list}."));
    } else {
        parts.extend(named.iter().map(|a| item_description(a)));
    }
    parts.join(" ")
}

// ---------------------------------------------------------------------------
// Render

fn ranked_item(a: &Attribution, description: String) -> RankedItem {
    RankedItem {
        feature: a.name().to_string(),
        raw_value: a.raw_value,
        contribution: a.contribution,
        direction: Direction::of(a.contribution),
        description,
    }
}

fn section(id: &str, role: &str, heading: &str) -> AriaSection {
    AriaSection {
        id: id.to_string(),
        role: role.to_string(),
        heading: heading.to_string(),
    }
}

fn series_color(palette: &PaletteSpec, contribution: f64) -> String {
    match Direction::of(contribution) {
        Direction::Increases => palette.positive.clone(),
        Direction::Decreases => palette.negative.clone(),
        Direction::Neutral => palette.neutral.clone(),
    }
}

pub fn render(e: &Explanation, method: ExplanationMethod) -> Result<AccessibleExplanation, RenderError> {
    render_with(e, method, &SonificationConfig::default(), high_contrast_dark())
}

pub fn render_with(
    e: &Explanation,
    method: ExplanationMethod,
    sound: &SonificationConfig,
    palette: PaletteSpec,
) -> Result<AccessibleExplanation, RenderError> {
    let mismatch = || RenderError::MethodMismatch {
        found: e.method,
        requested: method,
    };
    if e.method.family() != method.family() {
        return Err(mismatch());
    }
    let detailed = method.variant() == Variant::Detailed;
    let detail_src = if detailed {
        Some(e.detail.as_ref().ok_or_else(mismatch)?)
    } else {
        None
    };

    let shap_points = match detail_src {
        Some(ExplanationDetail::Shap { points, .. }) => Some(points),
        _ => None,
    };
    let ranked_items: Vec<RankedItem> = match shap_points {
        Some(points) => e
            .ranked
            .iter()
            .zip(points)
            .map(|(a, p)| ranked_item(a, point_description(p)))
            .collect(),
        None => e.ranked.iter().map(|a| ranked_item(a, item_description(a))).collect(),
    };

    let mut reading_order = vec!["summary".to_string(), "ranked-items".to_string()];
    let mut sections = vec![
        section("summary", "status", "Summary"),
        section("ranked-items", "list", "Features ranked by influence"),
    ];

    let detail = match detail_src {
        None => None,
        Some(ExplanationDetail::Lime {
            intercept,
            fidelity_r2,
            instance,
            positive,
            negative,
        }) => {
            let items = |group: &Option<Vec<Attribution>>| {
                group
                    .as_ref()
                    .map(|g| g.iter().map(|a| ranked_item(a, item_description(a))).collect())
            };
            if positive.is_some() {
                reading_order.push("positive-contributions".into());
                sections.push(section("positive-contributions", "list", "Positive contributions"));
            }
            if negative.is_some() {
                reading_order.push("negative-contributions".into());
                sections.push(section("negative-contributions", "list", "Negative contributions"));
            }
            reading_order.push("model-fit".into());
            sections.push(section("model-fit", "note", "Local model fit"));
            let values = instance.to_array();
            Some(Detail {
                base_or_intercept: *intercept,
                predicted: e.predicted,
                fidelity: Some(*fidelity_r2),
                feature_values: Some(
                    (0..N_FEATURES)
                        .map(|j| FeatureValue {
                            feature: crate::dataset::FEATURE_NAMES[j].to_string(),
                            value: values[j],
                        })
                        .collect(),
                ),
                sign_groups: Some(SignGroups {
                    positive: items(positive),
                    negative: items(negative),
                }),
                running_sums: None,
                points: None,
            })
        }
        Some(d @ ExplanationDetail::Shap { base_value, points }) => {
            reading_order.push("base-value".into());
            reading_order.push("data-points".into());
            sections.push(section("base-value", "note", "Average prediction"));
            sections.push(section("data-points", "list", "Step-by-step contributions"));
            Some(Detail {
                base_or_intercept: *base_value,
                predicted: e.predicted,
                fidelity: None,
                feature_values: None,
                sign_groups: None,
                running_sums: d.running_sums(),
                points: Some(
                    points
                        .iter()
                        .map(|p| PointItem {
                            feature: crate::dataset::FEATURE_NAMES[p.feature].to_string(),
                            raw_value: p.raw_value,
                            contribution: p.phi,
                            running_total: p.running_total,
                            description: point_description(p),
                        })
                        .collect(),
                ),
            })
        }
    };

    let sonification = (method == ExplanationMethod::ShapDetailed).then(|| {
        let contributions: Vec<f64> = ranked_items.iter().map(|i| i.contribution).collect();
        sonify(&contributions, sound)
    });

    let summary_text = describe_text(e, method);

    let bars = match (&detail, shap_points) {
        (Some(d), Some(points)) => {
            let mut start = d.base_or_intercept;
            points
                .iter()
                .map(|p| {
                    let bar = ChartBar {
                        label: capitalized(p.feature).to_string(),
                        value: p.phi,
                        start,
                        end: p.running_total,
                        color: series_color(&palette, p.phi),
                    };
                    start = p.running_total;
                    bar
                })
                .collect()
        }
        _ => e
            .ranked
            .iter()
            .map(|a| ChartBar {
                label: capitalized(a.feature).to_string(),
                value: a.contribution,
                start: 0.0,
                end: a.contribution,
                color: series_color(&palette, a.contribution),
            })
            .collect(),
    };
    let chart_spec = ChartSpec {
        kind: if shap_points.is_some() { "waterfall" } else { "bar" }.to_string(),
        title: format!("{}: predicted flow {} vehicles per hour", method.label(), fmt1(e.predicted)),
        value_axis_label: "Contribution to predicted flow (vehicles per hour)".to_string(),
        category_axis_label: "Feature".to_string(),
        bars,
        palette,
    };

    let mut descriptions = vec![ElementDescription {
        id: "summary".into(),
        text: summary_text.clone(),
    }];
    descriptions.extend(ranked_items.iter().enumerate().map(|(i, item)| ElementDescription {
        id: format!("item-{i}"),
        text: item.description.clone(),
    }));
    let aria = AriaMeta {
        role: "region".into(),
        label: method.label().to_string(),
        live: "assertive".into(),
        reading_order,
        sections,
        descriptions,
    };

    Ok(AccessibleExplanation {
        method,
        summary_text,
        ranked_items,
        detail,
        sonification,
        chart_spec,
        aria,
    })
}

/// Line width of [`plain_text`] output.
pub const TEXT_WIDTH: usize = 80;

/// Terminal text for screen readers: the summary paragraph, then one `- `
/// bullet per ranked item, wrapped at [`TEXT_WIDTH`]. No tabs, tables or
/// escape sequences.
pub fn plain_text(e: &AccessibleExplanation) -> String {
    // Break only at spaces so values like "85.0 km/h" or "-12.5" stay whole.
    let base = textwrap::Options::new(TEXT_WIDTH)
        .word_separator(textwrap::WordSeparator::AsciiSpace)
        .word_splitter(textwrap::WordSplitter::NoHyphenation);
    let mut out = textwrap::fill(&e.summary_text, &base);
    out.push('\n');
    let opts = base.initial_indent("- ").subsequent_indent("  ");
    for item in &e.ranked_items {
        out.push_str(&textwrap::fill(&item.description, &opts));
        out.push('\n');
    }
    out
}

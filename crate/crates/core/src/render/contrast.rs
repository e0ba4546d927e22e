//! WCAG relative luminance, contrast ratio, and the shipped chart palettes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Minimum contrast ratio for normal-size text.
pub const MIN_TEXT_CONTRAST: f64 = 4.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb(pub u8, pub u8, pub u8);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadColor(pub String);

impl fmt::Display for BadColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}` is not a #RRGGBB color", self.0)
    }
}

impl std::error::Error for BadColor {}

impl FromStr for Rgb {
    type Err = BadColor;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadColor(s.to_string());
        let hex = s.strip_prefix('#').ok_or_else(bad)?;
        if hex.len() != 6 || !hex.is_ascii() {
            return Err(bad());
        }
        let channel = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|_| bad());
        Ok(Rgb(channel(0)?, channel(2)?, channel(4)?))
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02X}{:02X}{:02X}", self.0, self.1, self.2)
    }
}

fn linearize(channel: u8) -> f64 {
    let v = f64::from(channel) / 255.0;
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn relative_luminance(c: Rgb) -> f64 {
    0.2126 * linearize(c.0) + 0.7152 * linearize(c.1) + 0.0722 * linearize(c.2)
}

/// `(L1 + 0.05) / (L2 + 0.05)` with `L1` the lighter of the two.
pub fn contrast_ratio(fg: Rgb, bg: Rgb) -> f64 {
    let (a, b) = (relative_luminance(fg), relative_luminance(bg));
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    (hi + 0.05) / (lo + 0.05)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorPair {
    pub role: String,
    pub foreground: String,
    pub background: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteSpec {
    pub name: String,
    pub background: String,
    pub text: String,
    pub positive: String,
    pub negative: String,
    pub neutral: String,
    /// Every foreground/background combination the chart draws.
    pub pairs: Vec<ColorPair>,
}

impl PaletteSpec {
    fn new(name: &str, background: &str, text: &str, positive: &str, negative: &str, neutral: &str) -> Self {
        let pair = |role: &str, fg: &str| ColorPair {
            role: role.to_string(),
            foreground: fg.to_string(),
            background: background.to_string(),
        };
        Self {
            name: name.to_string(),
            background: background.to_string(),
            text: text.to_string(),
            positive: positive.to_string(),
            negative: negative.to_string(),
            neutral: neutral.to_string(),
            pairs: vec![
                pair("text", text),
                pair("positive", positive),
                pair("negative", negative),
                pair("neutral", neutral),
            ],
        }
    }

    /// Lowest contrast among the palette's pairs.
    pub fn min_contrast(&self) -> Result<f64, BadColor> {
        self.pairs.iter().try_fold(f64::INFINITY, |acc, p| {
            Ok(acc.min(contrast_ratio(p.foreground.parse()?, p.background.parse()?)))
        })
    }
}

/// Amber/sky-blue series avoid the red/green pairing.
pub fn high_contrast_dark() -> PaletteSpec {
    PaletteSpec::new("high-contrast-dark", "#000000", "#FFFFFF", "#FFB000", "#5CC8FF", "#D0D0D0")
}

pub fn high_contrast_light() -> PaletteSpec {
    PaletteSpec::new("high-contrast-light", "#FFFFFF", "#000000", "#8A4B00", "#0050A0", "#444444")
}

pub fn shipped_palettes() -> Vec<PaletteSpec> {
    vec![high_contrast_dark(), high_contrast_light()]
}

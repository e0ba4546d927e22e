//! Maps ranked contributions to tones: pitch encodes magnitude, stereo pan
//! encodes sign.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SonificationConfig {
    pub min_hz: f64,
    pub max_hz: f64,
    pub duration_ms: u32,
}

impl Default for SonificationConfig {
    fn default() -> Self {
        Self {
            min_hz: 220.0,
            max_hz: 880.0,
            duration_ms: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub frequency: f64,
    pub duration_ms: u32,
    /// -1 (left, negative), 0 (centre, zero), +1 (right, positive).
    pub pan: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SonificationTrack {
    pub tones: Vec<Tone>,
}

/// One tone per contribution, in the given order. The largest magnitude maps
/// to `max_hz` and zero maps to `min_hz`, linearly in between.
pub fn sonify(contributions: &[f64], cfg: &SonificationConfig) -> SonificationTrack {
    let peak = contributions.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let tones = contributions
        .iter()
        .map(|&c| {
            let frequency = if peak > 0.0 {
                cfg.min_hz + (cfg.max_hz - cfg.min_hz) * (c.abs() / peak)
            } else {
                cfg.min_hz
            };
            let pan = if c > 0.0 {
                1.0
            } else if c < 0.0 {
                -1.0
            } else {
                0.0
            };
            Tone {
                frequency,
                duration_ms: cfg.duration_ms,
                pan,
            }
        })
        .collect();
    SonificationTrack { tones }
}

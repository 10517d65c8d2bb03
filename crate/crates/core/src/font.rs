//! The 26-letter stroke font and its JSON file format.
//!
//! ```text
//! {"units":"mm_ms","provenance":"...","glyphs":{"a":[[t,x,y,pen],...],...}}
//! ```
//!
//! `pen` is the integer 1 (down) or 0 (up). Numbers are written in shortest
//! round-trip decimal form, so `parse_font(serialize_font(f)) == f` bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;
use thiserror::Error;

use crate::trajectory::{Diagnostic, GlyphTrajectory, Letter, Pen, TimedSample};

pub const UNITS: &str = "mm_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeFont {
    glyphs: Vec<GlyphTrajectory>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FontError {
    #[error("format: line {line}, column {column}: {message}")]
    Format {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("format: unsupported units {0:?}, expected \"mm_ms\"")]
    Units(String),
    #[error("format: unexpected glyph key {0:?}")]
    UnknownGlyph(String),
    #[error("incomplete-font: {0}")]
    Incomplete(Letter),
    #[error("invalid-glyph: {letter}: {}", join_diagnostics(.diagnostics))]
    InvalidGlyph {
        letter: Letter,
        diagnostics: Vec<Diagnostic>,
    },
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
}

impl StrokeFont {
    /// Builds a font from exactly one valid glyph per letter.
    pub fn new(
        provenance: impl Into<String>,
        glyphs: impl IntoIterator<Item = GlyphTrajectory>,
    ) -> Result<Self, FontError> {
        let mut slots: Vec<Option<GlyphTrajectory>> = vec![None; Letter::COUNT];
        for g in glyphs {
            let diagnostics = g.validate();
            if !diagnostics.is_empty() {
                return Err(FontError::InvalidGlyph {
                    letter: g.letter,
                    diagnostics,
                });
            }
            let idx = g.letter.index();
            slots[idx] = Some(g);
        }
        let mut glyphs = Vec::with_capacity(Letter::COUNT);
        for (letter, slot) in Letter::all().zip(slots) {
            glyphs.push(slot.ok_or(FontError::Incomplete(letter))?);
        }
        Ok(StrokeFont {
            glyphs,
            provenance: provenance.into(),
        })
    }

    pub fn glyph(&self, letter: Letter) -> &GlyphTrajectory {
        &self.glyphs[letter.index()]
    }

    /// Glyphs in alphabetical order.
    pub fn glyphs(&self) -> &[GlyphTrajectory] {
        &self.glyphs
    }

    pub fn iter(&self) -> impl Iterator<Item = &GlyphTrajectory> {
        self.glyphs.iter()
    }

    /// Rebuilds the font by mapping every glyph; the result is revalidated.
    pub fn try_map(
        &self,
        provenance: impl Into<String>,
        f: impl FnMut(&GlyphTrajectory) -> GlyphTrajectory,
    ) -> Result<StrokeFont, FontError> {
        StrokeFont::new(provenance, self.glyphs.iter().map(f))
    }

    pub fn mean_height(&self) -> f64 {
        let total: f64 = self
            .glyphs
            .iter()
            .map(|g| g.height().unwrap_or(0.0))
            .sum();
        total / Letter::COUNT as f64
    }
}

struct PenCode(Pen);

impl<'de> Deserialize<'de> for PenCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PenVisitor;

        impl<'de> Visitor<'de> for PenVisitor {
            type Value = PenCode;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("pen state 0 or 1")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<PenCode, E> {
                Pen::from_code(v)
                    .map(PenCode)
                    .ok_or_else(|| E::invalid_value(de::Unexpected::Unsigned(v), &self))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<PenCode, E> {
                Err(E::invalid_value(de::Unexpected::Signed(v), &self))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<PenCode, E> {
                Err(E::invalid_value(de::Unexpected::Float(v), &self))
            }
        }

        deserializer.deserialize_any(PenVisitor)
    }
}

#[derive(Deserialize)]
struct RawSample(f64, f64, f64, PenCode);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFont {
    units: String,
    provenance: String,
    glyphs: BTreeMap<String, Vec<RawSample>>,
}

fn format_error(e: serde_json::Error) -> FontError {
    FontError::Format {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn raw_to_samples(raw: Vec<RawSample>) -> Vec<TimedSample> {
    raw.into_iter()
        .map(|RawSample(t, x, y, PenCode(pen))| TimedSample { t, x, y, pen })
        .collect()
}

/// Parses a bare sample array `[[t,x,y,pen],...]`, the glyph payload used by
/// font files, trace exports and playback.
pub fn parse_samples(bytes: &[u8]) -> Result<Vec<TimedSample>, FontError> {
    let raw: Vec<RawSample> = serde_json::from_slice(bytes).map_err(format_error)?;
    Ok(raw_to_samples(raw))
}

pub fn parse_font(bytes: &[u8]) -> Result<StrokeFont, FontError> {
    let raw: RawFont = serde_json::from_slice(bytes).map_err(format_error)?;
    if raw.units != UNITS {
        return Err(FontError::Units(raw.units));
    }
    let mut glyphs = Vec::with_capacity(Letter::COUNT);
    for (key, samples) in raw.glyphs {
        let letter = Letter::parse(&key).ok_or_else(|| FontError::UnknownGlyph(key.clone()))?;
        glyphs.push(GlyphTrajectory::new(letter, raw_to_samples(samples)));
    }
    // Report the first missing letter before any per-glyph problem.
    for letter in Letter::all() {
        if !glyphs.iter().any(|g| g.letter == letter) {
            return Err(FontError::Incomplete(letter));
        }
    }
    StrokeFont::new(raw.provenance, glyphs)
}

fn push_number(out: &mut String, v: f64) {
    // serde_json writes the shortest representation that parses back exactly.
    out.push_str(&serde_json::to_string(&v).expect("finite sample value"));
}

/// Writes `[[t,x,y,pen],...]` on one line.
pub fn write_samples(out: &mut String, samples: &[TimedSample]) {
    out.push('[');
    for (i, s) in samples.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        push_number(out, s.t);
        out.push(',');
        push_number(out, s.x);
        out.push(',');
        push_number(out, s.y);
        let _ = write!(out, ",{}]", s.pen.code());
    }
    out.push(']');
}

pub fn samples_to_json(samples: &[TimedSample]) -> String {
    let mut out = String::new();
    write_samples(&mut out, samples);
    out
}

/// One glyph per line, alphabetical.
pub fn serialize_font(font: &StrokeFont) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("{\"units\":\"mm_ms\",\"provenance\":");
    out.push_str(&serde_json::to_string(&font.provenance).expect("string"));
    out.push_str(",\"glyphs\":{\n");
    for (i, g) in font.glyphs.iter().enumerate() {
        let _ = write!(out, "\"{}\":", g.letter);
        write_samples(&mut out, &g.samples);
        out.push_str(if i + 1 < font.glyphs.len() { ",\n" } else { "\n" });
    }
    out.push_str("}}\n");
    out.into_bytes()
}

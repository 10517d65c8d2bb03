//! Timed pen trajectories for single letters.
//!
//! Units are fixed throughout the crate: positions in millimeters, times in
//! milliseconds. A sample's pen state governs the interval that starts at that
//! sample, so a stroke ends on the first pen-up sample.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Contact state of the stylus tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pen {
    Down,
    Up,
}

impl Pen {
    pub fn is_down(self) -> bool {
        self == Pen::Down
    }

    /// File encoding: 1 = down, 0 = up.
    pub fn code(self) -> u8 {
        match self {
            Pen::Down => 1,
            Pen::Up => 0,
        }
    }

    pub fn from_code(code: u64) -> Option<Pen> {
        match code {
            1 => Some(Pen::Down),
            0 => Some(Pen::Up),
            _ => None,
        }
    }
}

/// A lowercase latin letter `a`..=`z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter(u8);

impl Letter {
    pub const COUNT: usize = 26;

    pub fn new(c: char) -> Option<Letter> {
        c.is_ascii_lowercase().then(|| Letter(c as u8))
    }

    pub fn from_index(index: usize) -> Option<Letter> {
        (index < Self::COUNT).then(|| Letter(b'a' + index as u8))
    }

    /// Parses a string holding exactly one lowercase letter.
    pub fn parse(s: &str) -> Option<Letter> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Letter::new(c),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        (self.0 - b'a') as usize
    }

    pub fn as_char(self) -> char {
        self.0 as char
    }

    pub fn all() -> impl Iterator<Item = Letter> + Clone {
        (b'a'..=b'z').map(Letter)
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl Serialize for Letter {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Letter {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Letter::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("not a lowercase letter: {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub pen: Pen,
}

impl TimedSample {
    pub fn new(t: f64, x: f64, y: f64, pen: Pen) -> Self {
        TimedSample { t, x, y, pen }
    }

    pub fn distance_to(&self, other: &TimedSample) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphTrajectory {
    pub letter: Letter,
    pub samples: Vec<TimedSample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.min(other.x_min),
            x_max: self.x_max.max(other.x_max),
            y_min: self.y_min.min(other.y_min),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// Tight box over a set of samples, `None` when the set is empty.
    pub fn of_samples<'a>(samples: impl IntoIterator<Item = &'a TimedSample>) -> Option<Self> {
        samples.into_iter().fold(None, |acc, s| {
            let point = BoundingBox {
                x_min: s.x,
                x_max: s.x,
                y_min: s.y,
                y_max: s.y,
            };
            Some(match acc {
                None => point,
                Some(b) => b.union(&point),
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("empty")]
    Empty,
}

/// Name of the broken invariant in a [`Diagnostic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    TooShort,
    NonFinite,
    NegativeTime,
    StartTime,
    TimeOrder,
    NoPenDown,
    DuplicateSample,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::TooShort => "too-short",
            Rule::NonFinite => "non-finite",
            Rule::NegativeTime => "negative-time",
            Rule::StartTime => "start-time",
            Rule::TimeOrder => "time-order",
            Rule::NoPenDown => "no-pen-down",
            Rule::DuplicateSample => "duplicate-sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// Offending sample, or `None` for whole-trajectory rules.
    pub index: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{} at sample {i}", self.rule.name()),
            None => write!(f, "{}", self.rule.name()),
        }
    }
}

impl GlyphTrajectory {
    pub fn new(letter: Letter, samples: Vec<TimedSample>) -> Self {
        GlyphTrajectory { letter, samples }
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(first), Some(last)) => last.t - first.t,
            _ => 0.0,
        }
    }

    /// Checks every trajectory invariant; an empty result means the glyph is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_glyph(self)
    }

    pub fn bounding_box(&self) -> Result<BoundingBox, TrajectoryError> {
        BoundingBox::of_samples(&self.samples).ok_or(TrajectoryError::Empty)
    }

    pub fn height(&self) -> Result<f64, TrajectoryError> {
        Ok(self.bounding_box()?.height())
    }

    pub fn pen_down_path_length(&self) -> Result<f64, TrajectoryError> {
        if self.samples.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        Ok(self
            .samples
            .windows(2)
            .filter(|w| w[0].pen.is_down())
            .map(|w| w[0].distance_to(&w[1]))
            .sum())
    }

    /// Position at time `t` by linear interpolation, clamped to the ends.
    pub fn position_at(&self, t: f64) -> Option<(f64, f64)> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t <= first.t {
            return Some((first.x, first.y));
        }
        if t >= last.t {
            return Some((last.x, last.y));
        }
        // First sample strictly after t.
        let hi = self.samples.partition_point(|s| s.t <= t);
        let (a, b) = (&self.samples[hi - 1], &self.samples[hi]);
        let span = b.t - a.t;
        if span <= 0.0 {
            return Some((b.x, b.y));
        }
        let alpha = (t - a.t) / span;
        Some((a.x + (b.x - a.x) * alpha, a.y + (b.y - a.y) * alpha))
    }

    /// Pen state in force at time `t`.
    pub fn pen_at(&self, t: f64) -> Option<Pen> {
        let idx = self.samples.partition_point(|s| s.t <= t);
        self.samples
            .get(idx.saturating_sub(1))
            .map(|s| s.pen)
    }

    /// Sequence of pen states with consecutive repeats collapsed.
    pub fn pen_events(&self) -> Vec<Pen> {
        let mut events: Vec<Pen> = Vec::new();
        for s in &self.samples {
            if events.last() != Some(&s.pen) {
                events.push(s.pen);
            }
        }
        events
    }

    /// Applies `f` to every (x, y) position.
    pub fn map_positions(&self, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> GlyphTrajectory {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let (x, y) = f(s.x, s.y);
                TimedSample { x, y, ..*s }
            })
            .collect();
        GlyphTrajectory::new(self.letter, samples)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> GlyphTrajectory {
        self.map_positions(|x, y| (x + dx, y + dy))
    }

    /// Translates the glyph so its bounding-box center sits at the origin.
    pub fn centered(&self) -> GlyphTrajectory {
        match self.bounding_box() {
            Ok(b) => {
                let (cx, cy) = b.center();
                self.translated(-cx, -cy)
            }
            Err(_) => self.clone(),
        }
    }
}

pub fn validate_glyph(traj: &GlyphTrajectory) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let samples = &traj.samples;
    if samples.len() < 2 {
        out.push(Diagnostic {
            index: None,
            rule: Rule::TooShort,
        });
    }
    for (i, s) in samples.iter().enumerate() {
        if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite()) {
            out.push(Diagnostic {
                index: Some(i),
                rule: Rule::NonFinite,
            });
        } else if s.t < 0.0 {
            out.push(Diagnostic {
                index: Some(i),
                rule: Rule::NegativeTime,
            });
        }
    }
    if let Some(first) = samples.first() {
        if first.t.is_finite() && first.t != 0.0 && first.t >= 0.0 {
            out.push(Diagnostic {
                index: Some(0),
                rule: Rule::StartTime,
            });
        }
    }
    for (i, w) in samples.windows(2).enumerate() {
        if w[1].t < w[0].t {
            out.push(Diagnostic {
                index: Some(i + 1),
                rule: Rule::TimeOrder,
            });
        } else if w[0] == w[1] {
            out.push(Diagnostic {
                index: Some(i + 1),
                rule: Rule::DuplicateSample,
            });
        }
    }
    if !samples.is_empty() && !samples.iter().any(|s| s.pen.is_down()) {
        out.push(Diagnostic {
            index: None,
            rule: Rule::NoPenDown,
        });
    }
    out
}

pub fn bounding_box(traj: &GlyphTrajectory) -> Result<BoundingBox, TrajectoryError> {
    traj.bounding_box()
}

pub fn glyph_height(traj: &GlyphTrajectory) -> Result<f64, TrajectoryError> {
    traj.height()
}

pub fn pen_down_path_length(traj: &GlyphTrajectory) -> Result<f64, TrajectoryError> {
    traj.pen_down_path_length()
}

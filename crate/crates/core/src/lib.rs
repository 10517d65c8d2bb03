//! Stroke-to-motion engine and letter identification experiment harness.
//!
//! Recorded letter trajectories are conditioned ([`preprocess`]), compiled into
//! step/pen/dwell programs for a 2-axis stepper stage carrying an on/off
//! solenoid stylus ([`motion`]), executed on an ideal kinematic model
//! ([`sim`]), and presented to participants in identification sessions
//! ([`experiment`]). Participants are pluggable strategies looked up by name
//! ([`participant`]); the built-in synthetic one is a DTW template matcher
//! ([`recognizer`]). [`stats`] holds the paired t-test and two-way ANOVA used to
//! analyse session accuracies.

pub mod experiment;
pub mod fixture;
pub mod font;
pub mod motion;
pub mod participant;
pub mod preprocess;
pub mod recognizer;
pub mod sim;
pub mod stats;
pub mod trajectory;

pub use font::{parse_font, serialize_font, FontError, StrokeFont};
pub use preprocess::{PresentationCondition, SmoothingSpec};
pub use trajectory::{BoundingBox, GlyphTrajectory, Letter, Pen, TimedSample};

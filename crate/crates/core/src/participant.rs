//! Participants answer trials. Synthetic strategies are looked up by name in a
//! [`ParticipantRegistry`]; interactive sessions plug in a transport instead.

use std::collections::BTreeMap;
use std::sync::mpsc::{Receiver, Sender};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::font::StrokeFont;
use crate::preprocess::PresentationCondition;
use crate::recognizer::{add_noise, DtwParams, NoiseSpec, RecognizerError, TemplateClassifier};
use crate::trajectory::{GlyphTrajectory, Letter};

/// Samples kept per trajectory by the synthetic DTW participant.
pub const SYNTHETIC_POINTS: usize = 32;

/// One trial as delivered to a participant.
#[derive(Debug, Clone, PartialEq)]
pub struct Presentation {
    pub index: usize,
    pub condition: PresentationCondition,
    /// Prepared playback trajectory.
    pub glyph: GlyphTrajectory,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParticipantError {
    #[error("transport closed")]
    Disconnected,
    #[error(transparent)]
    Recognizer(#[from] RecognizerError),
}

pub trait Participant: Send {
    /// A single letter, or `None` when no answer was given.
    fn respond(&mut self, trial: &Presentation) -> Result<Option<Letter>, ParticipantError>;

    /// Training-mode correctness report for the last response.
    fn feedback(&mut self, _index: usize, _correct: bool) -> Result<(), ParticipantError> {
        Ok(())
    }
}

/// Everything a strategy may use when it is instantiated for one session.
#[derive(Debug, Clone)]
pub struct ParticipantContext<'a> {
    /// The font prepared at the session's condition.
    pub templates: &'a StrokeFont,
    pub noise: NoiseSpec,
    pub seed: u64,
}

/// Noisy DTW nearest-neighbour. The noise seed of trial `i` is `noise.seed + i`.
pub struct DtwParticipant {
    classifier: TemplateClassifier,
    noise: NoiseSpec,
}

impl DtwParticipant {
    pub fn new(templates: &StrokeFont, noise: NoiseSpec) -> Self {
        DtwParticipant {
            classifier: TemplateClassifier::new(
                templates,
                DtwParams::default(),
                Some(SYNTHETIC_POINTS),
            ),
            noise,
        }
    }
}

impl Participant for DtwParticipant {
    fn respond(&mut self, trial: &Presentation) -> Result<Option<Letter>, ParticipantError> {
        let noise = NoiseSpec {
            sigma: self.noise.sigma,
            seed: self.noise.seed.wrapping_add(trial.index as u64),
        };
        let felt = add_noise(&trial.glyph, noise)?;
        Ok(Some(self.classifier.classify(&felt)?.letter))
    }
}

/// Uniform guesser; the chance-level baseline.
pub struct RandomParticipant {
    rng: ChaCha8Rng,
}

impl RandomParticipant {
    pub fn new(seed: u64) -> Self {
        RandomParticipant {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Participant for RandomParticipant {
    fn respond(&mut self, _trial: &Presentation) -> Result<Option<Letter>, ParticipantError> {
        Ok(Letter::from_index(self.rng.random_range(0..Letter::COUNT)))
    }
}

/// Messages sent to the far end of a [`ChannelParticipant`].
#[derive(Debug, Clone, PartialEq)]
pub enum TransportEvent {
    Trial(Presentation),
    Feedback { index: usize, correct: bool },
}

/// Forwards trials over a channel and waits for the reply. Dropping either end
/// makes the next call fail with [`ParticipantError::Disconnected`].
pub struct ChannelParticipant {
    outgoing: Sender<TransportEvent>,
    incoming: Receiver<Option<Letter>>,
}

impl ChannelParticipant {
    pub fn new(outgoing: Sender<TransportEvent>, incoming: Receiver<Option<Letter>>) -> Self {
        ChannelParticipant { outgoing, incoming }
    }
}

impl Participant for ChannelParticipant {
    fn respond(&mut self, trial: &Presentation) -> Result<Option<Letter>, ParticipantError> {
        self.outgoing
            .send(TransportEvent::Trial(trial.clone()))
            .map_err(|_| ParticipantError::Disconnected)?;
        self.incoming
            .recv()
            .map_err(|_| ParticipantError::Disconnected)
    }

    fn feedback(&mut self, index: usize, correct: bool) -> Result<(), ParticipantError> {
        self.outgoing
            .send(TransportEvent::Feedback { index, correct })
            .map_err(|_| ParticipantError::Disconnected)
    }
}

type Factory = Box<dyn Fn(&ParticipantContext) -> Box<dyn Participant> + Send + Sync>;

pub struct ParticipantRegistry {
    factories: BTreeMap<String, Factory>,
}

impl ParticipantRegistry {
    pub fn empty() -> Self {
        ParticipantRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Replaces any strategy already registered under `name`.
    pub fn register(
        &mut self,
        name: impl Into<String>,
        factory: impl Fn(&ParticipantContext) -> Box<dyn Participant> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.into(), Box::new(factory));
    }

    pub fn create(&self, name: &str, ctx: &ParticipantContext) -> Option<Box<dyn Participant>> {
        self.factories.get(name).map(|f| f(ctx))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl Default for ParticipantRegistry {
    /// `dtw` and `random`.
    fn default() -> Self {
        let mut r = ParticipantRegistry::empty();
        r.register("dtw", |ctx| {
            Box::new(DtwParticipant::new(ctx.templates, ctx.noise))
        });
        r.register("random", |ctx| Box::new(RandomParticipant::new(ctx.seed)));
        r
    }
}

//! Identification sessions: trial order, the per-trial state machine shared by
//! offline runs and the HTTP service, the session log, and confusion matrices.
//!
//! Session log lines look like
//!
//! ```text
//! {"index":0,"displayed":"q","response":"g","correct":false,"height_mm":14.0,"duration_ms":1000.0,"mode":"test","latency_ms":0}
//! ```

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::font::StrokeFont;
use crate::participant::{
    Participant, ParticipantContext, ParticipantError, ParticipantRegistry, Presentation,
};
use crate::preprocess::{prepare_default, PreprocessError, PresentationCondition};
use crate::recognizer::NoiseSpec;
use crate::trajectory::Letter;

pub const DEFAULT_TRAINING_LIMIT_MS: u64 = 300_000;
pub const DEFAULT_TRAINING_TRIALS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Test,
    Training,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Test => "test",
            Mode::Training => "training",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParticipantKind {
    /// A registered strategy, e.g. `dtw` or `random`.
    Synthetic {
        #[serde(default = "default_strategy")]
        strategy: String,
        #[serde(default = "default_noise")]
        noise: NoiseSpec,
    },
    Interactive,
}

fn default_strategy() -> String {
    "dtw".to_string()
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::NONE
}

impl ParticipantKind {
    pub fn dtw(noise: NoiseSpec) -> Self {
        ParticipantKind::Synthetic {
            strategy: default_strategy(),
            noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub condition: PresentationCondition,
    pub repeats_per_letter: u32,
    pub mode: Mode,
    pub seed: u64,
    pub participant: ParticipantKind,
    /// Training stops once the summed response latencies reach this.
    pub training_duration_limit_ms: u64,
    /// Training trial cap for synthetic participants.
    pub training_trial_limit: Option<usize>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            condition: PresentationCondition::BASELINE,
            repeats_per_letter: 2,
            mode: Mode::Test,
            seed: 0,
            participant: ParticipantKind::dtw(NoiseSpec::NONE),
            training_duration_limit_ms: DEFAULT_TRAINING_LIMIT_MS,
            training_trial_limit: Some(DEFAULT_TRAINING_TRIALS),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.condition.check().map_err(|e| match e {
            PreprocessError::InvalidCondition(field) => {
                invalid(&format!("condition.{field}"), "must be positive and finite")
            }
            e => invalid("condition", e.to_string()),
        })?;
        if self.repeats_per_letter < 1 {
            return Err(invalid("repeats_per_letter", "must be at least 1"));
        }
        if let ParticipantKind::Synthetic { noise, .. } = &self.participant {
            if !(noise.sigma >= 0.0) || !noise.sigma.is_finite() {
                return Err(invalid("participant.noise.sigma", "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn is_interactive(&self) -> bool {
        matches!(self.participant, ParticipantKind::Interactive)
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidConfig {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("invalid-config: {field}: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("unknown-participant: {0}")]
    UnknownParticipant(String),
    #[error("interactive sessions need a transport")]
    NeedsTransport,
    #[error("session-aborted: {} records kept", .records.len())]
    SessionAborted { records: Vec<TrialRecord> },
    #[error("session-finished")]
    SessionFinished,
    #[error("incomplete-records")]
    IncompleteRecords,
    #[error("empty-matrix")]
    EmptyMatrix,
    #[error("letter-missing: {0}")]
    LetterMissing(Letter),
    #[error("log: line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("log-mismatch: record {index} does not follow the session plan")]
    LogMismatch { index: usize },
    #[error("matrix: {0}")]
    MatrixFormat(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Participant(ParticipantError),
}

/// Letter order of a session.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialPlan {
    Fixed(Vec<Letter>),
    /// Unbounded; letter `i` comes from ChaCha8 stream `i` under the seed.
    Stream { seed: u64 },
}

impl TrialPlan {
    pub fn letter(&self, index: usize) -> Option<Letter> {
        match self {
            TrialPlan::Fixed(v) => v.get(index).copied(),
            TrialPlan::Stream { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(index as u64);
                Letter::from_index(rng.random_range(0..Letter::COUNT))
            }
        }
    }

    pub fn len(&self) -> Option<usize> {
        match self {
            TrialPlan::Fixed(v) => Some(v.len()),
            TrialPlan::Stream { .. } => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }
}

/// Test mode: a seeded shuffle with every letter `repeats_per_letter` times.
/// Training mode: an unbounded seeded stream.
pub fn build_session(cfg: &SessionConfig) -> TrialPlan {
    match cfg.mode {
        Mode::Test => {
            let mut letters: Vec<Letter> = Letter::all()
                .flat_map(|l| std::iter::repeat_n(l, cfg.repeats_per_letter as usize))
                .collect();
            letters.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
            TrialPlan::Fixed(letters)
        }
        Mode::Training => TrialPlan::Stream { seed: cfg.seed },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub index: usize,
    pub displayed: Letter,
    pub response: Option<Letter>,
    pub correct: bool,
    pub condition: PresentationCondition,
    pub mode: Mode,
    pub latency_ms: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogLine {
    index: usize,
    displayed: Letter,
    response: String,
    correct: bool,
    height_mm: f64,
    duration_ms: f64,
    mode: Mode,
    latency_ms: u64,
}

impl TrialRecord {
    pub fn to_log_line(&self) -> String {
        let line = LogLine {
            index: self.index,
            displayed: self.displayed,
            response: self
                .response
                .map_or_else(|| "none".to_string(), |l| l.to_string()),
            correct: self.correct,
            height_mm: self.condition.target_mean_height,
            duration_ms: self.condition.target_duration,
            mode: self.mode,
            latency_ms: self.latency_ms,
        };
        serde_json::to_string(&line).expect("log line")
    }

    pub fn from_log_line(text: &str) -> Result<TrialRecord, String> {
        let line: LogLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let response = match line.response.as_str() {
            "none" => None,
            s => Some(Letter::parse(s).ok_or_else(|| format!("bad response {s:?}"))?),
        };
        if line.correct != (response == Some(line.displayed)) {
            return Err("correct flag disagrees with response".to_string());
        }
        Ok(TrialRecord {
            index: line.index,
            displayed: line.displayed,
            response,
            correct: line.correct,
            condition: PresentationCondition {
                target_mean_height: line.height_mm,
                target_duration: line.duration_ms,
            },
            mode: line.mode,
            latency_ms: line.latency_ms,
        })
    }
}

/// One JSON object per line, each terminated by a newline.
pub fn write_log(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_log_line());
        out.push('\n');
    }
    out
}

/// Blank lines are skipped.
pub fn parse_log(text: &str) -> Result<Vec<TrialRecord>, ExperimentError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            TrialRecord::from_log_line(l).map_err(|message| ExperimentError::Log {
                line: i + 1,
                message,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trial {
    pub index: usize,
    pub letter: Letter,
}

/// Sequential trial cursor. Trial `n + 1` is only offered after trial `n`
/// has a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    cfg: SessionConfig,
    plan: TrialPlan,
    records: Vec<TrialRecord>,
    elapsed_ms: u64,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Session, ExperimentError> {
        cfg.validate()?;
        let plan = build_session(&cfg);
        Ok(Session {
            cfg,
            plan,
            records: Vec::new(),
            elapsed_ms: 0,
        })
    }

    /// Rebuilds a session from its config and logged records.
    pub fn restore(
        cfg: SessionConfig,
        records: Vec<TrialRecord>,
    ) -> Result<Session, ExperimentError> {
        let mut s = Session::new(cfg)?;
        for r in records {
            match s.next_trial() {
                Some(t) if t.index == r.index && t.letter == r.displayed => {}
                _ => return Err(ExperimentError::LogMismatch { index: r.index }),
            }
            s.submit(r.response, r.latency_ms)?;
        }
        Ok(s)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &TrialPlan {
        &self.plan
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TrialRecord> {
        self.records
    }

    pub fn cursor(&self) -> usize {
        self.records.len()
    }

    /// Known in test mode only.
    pub fn trial_count(&self) -> Option<usize> {
        self.plan.len()
    }

    pub fn training_elapsed_ms(&self) -> u64 {
        self.elapsed_ms
    }

    pub fn is_finished(&self) -> bool {
        match self.cfg.mode {
            Mode::Test => Some(self.cursor()) >= self.plan.len(),
            Mode::Training => {
                let cap = if self.cfg.is_interactive() {
                    None
                } else {
                    self.cfg.training_trial_limit
                };
                self.elapsed_ms >= self.cfg.training_duration_limit_ms
                    || cap.is_some_and(|c| self.cursor() >= c)
            }
        }
    }

    pub fn next_trial(&self) -> Option<Trial> {
        if self.is_finished() {
            return None;
        }
        let index = self.cursor();
        self.plan.letter(index).map(|letter| Trial { index, letter })
    }

    pub fn submit(
        &mut self,
        response: Option<Letter>,
        latency_ms: u64,
    ) -> Result<&TrialRecord, ExperimentError> {
        let trial = self.next_trial().ok_or(ExperimentError::SessionFinished)?;
        self.elapsed_ms = self.elapsed_ms.saturating_add(latency_ms);
        self.records.push(TrialRecord {
            index: trial.index,
            displayed: trial.letter,
            response,
            correct: response == Some(trial.letter),
            condition: self.cfg.condition,
            mode: self.cfg.mode,
            latency_ms,
        });
        Ok(self.records.last().expect("just pushed"))
    }
}

/// Runs a session with a synthetic participant taken from the registry.
pub fn run_session(
    cfg: &SessionConfig,
    font: &StrokeFont,
    registry: &ParticipantRegistry,
) -> Result<Vec<TrialRecord>, ExperimentError> {
    cfg.validate()?;
    let prepared = prepare_default(font, cfg.condition)?;
    run_prepared(cfg, &prepared, registry)
}

/// [`run_session`] with the font already prepared at `cfg.condition`.
pub fn run_prepared(
    cfg: &SessionConfig,
    prepared: &StrokeFont,
    registry: &ParticipantRegistry,
) -> Result<Vec<TrialRecord>, ExperimentError> {
    let (strategy, noise) = match &cfg.participant {
        ParticipantKind::Synthetic { strategy, noise } => (strategy, *noise),
        ParticipantKind::Interactive => return Err(ExperimentError::NeedsTransport),
    };
    let ctx = ParticipantContext {
        templates: prepared,
        noise,
        seed: cfg.seed,
    };
    let mut participant = registry
        .create(strategy, &ctx)
        .ok_or_else(|| ExperimentError::UnknownParticipant(strategy.clone()))?;
    run_with_participant(cfg, prepared, participant.as_mut())
}

/// Drives any participant through a full session. Latency is measured for
/// interactive configs only. If the participant's transport closes, the
/// records gathered so far are returned inside the error.
pub fn run_with_participant(
    cfg: &SessionConfig,
    prepared: &StrokeFont,
    participant: &mut dyn Participant,
) -> Result<Vec<TrialRecord>, ExperimentError> {
    let mut session = Session::new(cfg.clone())?;
    let timed = cfg.is_interactive();
    while let Some(trial) = session.next_trial() {
        let presentation = Presentation {
            index: trial.index,
            condition: cfg.condition,
            glyph: prepared.glyph(trial.letter).clone(),
        };
        let started = Instant::now();
        let response = match participant.respond(&presentation) {
            Ok(r) => r,
            Err(ParticipantError::Disconnected) => {
                return Err(ExperimentError::SessionAborted {
                    records: session.into_records(),
                })
            }
            Err(e) => return Err(ExperimentError::Participant(e)),
        };
        let latency = if timed {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        let correct = session.submit(response, latency)?.correct;
        if cfg.mode == Mode::Training {
            if let Err(e) = participant.feedback(trial.index, correct) {
                return match e {
                    ParticipantError::Disconnected => Err(ExperimentError::SessionAborted {
                        records: session.into_records(),
                    }),
                    e => Err(ExperimentError::Participant(e)),
                };
            }
        }
    }
    Ok(session.into_records())
}

/// Rows are displayed letters, columns responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<[u32; Letter::COUNT]>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        ConfusionMatrix {
            counts: vec![[0; Letter::COUNT]; Letter::COUNT],
        }
    }
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, displayed: Letter, response: Letter) {
        self.counts[displayed.index()][response.index()] += 1;
    }

    pub fn get(&self, displayed: Letter, response: Letter) -> u32 {
        self.counts[displayed.index()][response.index()]
    }

    pub fn row(&self, displayed: Letter) -> &[u32; Letter::COUNT] {
        &self.counts[displayed.index()]
    }

    pub fn row_sum(&self, displayed: Letter) -> u64 {
        self.row(displayed).iter().map(|&c| c as u64).sum()
    }

    pub fn total(&self) -> u64 {
        Letter::all().map(|l| self.row_sum(l)).sum()
    }

    pub fn trace(&self) -> u64 {
        Letter::all().map(|l| self.get(l, l) as u64).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Percent correct over all entries.
    pub fn accuracy(&self) -> Result<f64, ExperimentError> {
        let total = self.total();
        if total == 0 {
            return Err(ExperimentError::EmptyMatrix);
        }
        Ok(self.trace() as f64 / total as f64 * 100.0)
    }

    pub fn per_letter_accuracy(&self) -> Result<Vec<f64>, ExperimentError> {
        Letter::all()
            .map(|l| match self.row_sum(l) {
                0 => Err(ExperimentError::LetterMissing(l)),
                n => Ok(100.0 * self.get(l, l) as f64 / n as f64),
            })
            .collect()
    }

    /// Non-zero off-diagonal cells, largest first; ties alphabetical by
    /// (displayed, response).
    pub fn most_confused(&self) -> Vec<(Letter, Letter, u32)> {
        let mut pairs: Vec<(Letter, Letter, u32)> = Letter::all()
            .flat_map(|d| Letter::all().map(move |r| (d, r)))
            .filter(|(d, r)| d != r)
            .map(|(d, r)| (d, r, self.get(d, r)))
            .filter(|p| p.2 > 0)
            .collect();
        pairs.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        pairs
    }

    /// Header `,a,...,z`, then one row per displayed letter.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for l in Letter::all() {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for d in Letter::all() {
            out.push(d.as_char());
            for c in self.row(d) {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ConfusionMatrix, ExperimentError> {
        let bad = |m: String| ExperimentError::MatrixFormat(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let expected: String = Letter::all().map(|l| format!(",{l}")).collect();
        if header.trim() != expected {
            return Err(bad("header must be ',a,...,z'".into()));
        }
        let mut m = ConfusionMatrix::new();
        let mut seen = 0;
        for (i, line) in lines.enumerate() {
            let mut cells = line.trim().split(',');
            let letter = cells
                .next()
                .and_then(Letter::parse)
                .filter(|l| l.index() == i)
                .ok_or_else(|| bad(format!("row {} must start with its letter", i + 1)))?;
            let values: Vec<u32> = cells
                .map(|c| c.trim().parse::<u32>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(format!("row {letter}: {e}")))?;
            if values.len() != Letter::COUNT {
                return Err(bad(format!("row {letter}: expected 26 counts")));
            }
            m.counts[i].copy_from_slice(&values);
            seen += 1;
        }
        if seen != Letter::COUNT {
            return Err(bad(format!("expected 26 rows, found {seen}")));
        }
        Ok(m)
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(mut self, rhs: ConfusionMatrix) -> ConfusionMatrix {
        self.merge(&rhs);
        self
    }
}

pub fn confusion_matrix(records: &[TrialRecord]) -> Result<ConfusionMatrix, ExperimentError> {
    let mut m = ConfusionMatrix::new();
    for r in records {
        let response = r.response.ok_or(ExperimentError::IncompleteRecords)?;
        m.add(r.displayed, response);
    }
    Ok(m)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one condition of one participant. Independent of run order.
pub fn condition_seed(base: u64, cond: PresentationCondition) -> u64 {
    let h = splitmix64(cond.target_mean_height.to_bits());
    let d = splitmix64(cond.target_duration.to_bits() ^ 0xD1B5_4A32_D192_ED03);
    splitmix64(base ^ h ^ d.rotate_left(17))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub condition: PresentationCondition,
    /// One record list per participant, in participant order.
    pub sessions: Vec<Vec<TrialRecord>>,
    pub pooled: ConfusionMatrix,
    pub accuracy: f64,
    pub participant_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    /// In the order the conditions were requested.
    pub conditions: Vec<ConditionSummary>,
    /// Per participant, the randomized order (indices into `conditions`) in
    /// which that participant ran them.
    pub orders: Vec<Vec<usize>>,
}

/// `participants` synthetic participants, each running every condition.
/// Participant `p` uses `condition_seed(base.seed + p, condition)` for its
/// letter order and a further derived seed for its noise, so results do not
/// depend on the order or on sigma.
pub fn run_batch(
    base: &SessionConfig,
    font: &StrokeFont,
    registry: &ParticipantRegistry,
    participants: usize,
    conditions: &[PresentationCondition],
) -> Result<BatchResult, ExperimentError> {
    base.validate()?;
    let prepared: Vec<StrokeFont> = conditions
        .par_iter()
        .map(|&c| prepare_default(font, c))
        .collect::<Result<_, _>>()?;
    let orders: Vec<Vec<usize>> = (0..participants)
        .map(|p| {
            let mut order: Vec<usize> = (0..conditions.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(
                base.seed.wrapping_add(p as u64),
            ));
            order
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..conditions.len())
        .flat_map(|c| (0..participants).map(move |p| (c, p)))
        .collect();
    let runs: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&(c, p)| {
            let cfg = participant_config(base, p, conditions[c]);
            run_prepared(&cfg, &prepared[c], registry)
        })
        .collect::<Result<_, _>>()?;
    let mut runs = runs.into_iter();
    let mut summaries = Vec::with_capacity(conditions.len());
    for &condition in conditions {
        let sessions: Vec<Vec<TrialRecord>> = runs.by_ref().take(participants).collect();
        let mut pooled = ConfusionMatrix::new();
        let mut participant_accuracy = Vec::with_capacity(participants);
        for s in &sessions {
            let m = confusion_matrix(s)?;
            participant_accuracy.push(m.accuracy().unwrap_or(0.0));
            pooled.merge(&m);
        }
        summaries.push(ConditionSummary {
            condition,
            accuracy: pooled.accuracy().unwrap_or(0.0),
            sessions,
            pooled,
            participant_accuracy,
        });
    }
    Ok(BatchResult {
        conditions: summaries,
        orders,
    })
}

/// The config participant `p` runs under `condition` in [`run_batch`].
pub fn participant_config(
    base: &SessionConfig,
    p: usize,
    condition: PresentationCondition,
) -> SessionConfig {
    let seed = condition_seed(base.seed.wrapping_add(p as u64), condition);
    let participant = match &base.participant {
        ParticipantKind::Synthetic { strategy, noise } => ParticipantKind::Synthetic {
            strategy: strategy.clone(),
            noise: NoiseSpec {
                sigma: noise.sigma,
                seed: splitmix64(seed ^ noise.seed.rotate_left(29)),
            },
        },
        ParticipantKind::Interactive => ParticipantKind::Interactive,
    };
    SessionConfig {
        condition,
        seed,
        participant,
        ..base.clone()
    }
}

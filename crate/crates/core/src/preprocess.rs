//! Trajectory conditioning: uniform resampling, zero-phase FIR smoothing,
//! font-wide spatial resizing and constant-duration temporal stretching.
//!
//! [`prepare_presentation`] runs the stages in a fixed order:
//! resample, smooth, resize to the target mean height, stretch to the target
//! duration. Spatial and temporal scaling are both uniform, so the shape of
//! each glyph's speed profile is preserved across presentation conditions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::font::{FontError, StrokeFont};
use crate::trajectory::{GlyphTrajectory, TimedSample};

pub const DEFAULT_DT_MS: f64 = 5.0;
pub const DEFAULT_WINDOW: usize = 5;

/// Relative tolerance used when checking that sample spacing is uniform.
const UNIFORM_TOLERANCE: f64 = 1e-9;

/// A (letter height, display duration) presentation condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresentationCondition {
    pub target_mean_height: f64,
    pub target_duration: f64,
}

impl PresentationCondition {
    pub const BASELINE: PresentationCondition = PresentationCondition {
        target_mean_height: 14.0,
        target_duration: 1000.0,
    };

    /// The four height x duration conditions, baseline first.
    pub const ALL: [PresentationCondition; 4] = [
        PresentationCondition::BASELINE,
        PresentationCondition {
            target_mean_height: 7.0,
            target_duration: 1000.0,
        },
        PresentationCondition {
            target_mean_height: 14.0,
            target_duration: 500.0,
        },
        PresentationCondition {
            target_mean_height: 7.0,
            target_duration: 500.0,
        },
    ];

    pub fn new(height_mm: f64, duration_ms: f64) -> Result<Self, PreprocessError> {
        let c = PresentationCondition {
            target_mean_height: height_mm,
            target_duration: duration_ms,
        };
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<(), PreprocessError> {
        if !(self.target_mean_height.is_finite() && self.target_mean_height > 0.0) {
            return Err(PreprocessError::InvalidCondition("target_mean_height"));
        }
        if !(self.target_duration.is_finite() && self.target_duration > 0.0) {
            return Err(PreprocessError::InvalidCondition("target_duration"));
        }
        Ok(())
    }

    /// Short label such as `14mm/1000ms`.
    pub fn label(&self) -> String {
        format!("{}mm/{}ms", self.target_mean_height, self.target_duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothingSpec {
    window_length: usize,
}

impl SmoothingSpec {
    pub fn new(window_length: usize) -> Result<Self, PreprocessError> {
        if window_length == 0 || window_length % 2 == 0 {
            return Err(PreprocessError::EvenWindow(window_length));
        }
        Ok(SmoothingSpec { window_length })
    }

    pub const fn identity() -> Self {
        SmoothingSpec { window_length: 1 }
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        SmoothingSpec {
            window_length: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("degenerate-dt: dt {dt} ms is not below the duration {duration} ms")]
    DegenerateDt { dt: f64, duration: f64 },
    #[error("requires-uniform: sample {0} breaks uniform spacing")]
    RequiresUniform(usize),
    #[error("degenerate-font: mean glyph height is zero")]
    DegenerateFont,
    #[error("degenerate-duration: trajectory has zero duration")]
    DegenerateDuration,
    #[error("too-short: need at least 2 samples")]
    TooShort,
    #[error("window length must be odd and positive, got {0}")]
    EvenWindow(usize),
    #[error("invalid condition: {0} must be positive")]
    InvalidCondition(&'static str),
    #[error(transparent)]
    Font(#[from] FontError),
}

/// Resamples onto ticks `0, dt, 2dt, ...` plus the final time.
///
/// Positions are interpolated linearly. Pen state at each tick is the state of
/// the last original sample at or before it, so every transition lands on the
/// first tick at or after its original time.
pub fn resample_uniform(
    traj: &GlyphTrajectory,
    dt: f64,
) -> Result<GlyphTrajectory, PreprocessError> {
    let samples = &traj.samples;
    if samples.len() < 2 {
        return Err(PreprocessError::TooShort);
    }
    let t0 = samples[0].t;
    let duration = samples[samples.len() - 1].t - t0;
    if !(dt > 0.0) || dt >= duration {
        return Err(PreprocessError::DegenerateDt { dt, duration });
    }

    let mut out = Vec::with_capacity((duration / dt).ceil() as usize + 1);
    let mut j = 0usize;
    let mut k = 0usize;
    loop {
        let rel = k as f64 * dt;
        if rel >= duration - UNIFORM_TOLERANCE * dt {
            break;
        }
        let t = t0 + rel;
        while j + 1 < samples.len() && samples[j + 1].t <= t {
            j += 1;
        }
        let a = &samples[j];
        let (x, y) = match samples.get(j + 1) {
            Some(b) if b.t > a.t => {
                let alpha = (t - a.t) / (b.t - a.t);
                (a.x + (b.x - a.x) * alpha, a.y + (b.y - a.y) * alpha)
            }
            _ => (a.x, a.y),
        };
        out.push(TimedSample::new(rel, x, y, a.pen));
        k += 1;
    }
    let last = samples[samples.len() - 1];
    out.push(TimedSample::new(duration, last.x, last.y, last.pen));
    Ok(GlyphTrajectory::new(traj.letter, out))
}

/// Checks that intervals are equal, allowing a shorter final interval left by
/// clamping; returns the common step.
pub fn uniform_step(traj: &GlyphTrajectory) -> Result<f64, PreprocessError> {
    let s = &traj.samples;
    if s.len() < 2 {
        return Err(PreprocessError::TooShort);
    }
    let dt = s[1].t - s[0].t;
    if !(dt > 0.0) {
        return Err(PreprocessError::RequiresUniform(1));
    }
    let tol = UNIFORM_TOLERANCE * dt.max(1.0) * 1e3;
    let n = s.len();
    for i in 1..n {
        let step = s[i].t - s[i - 1].t;
        let ok = if i == n - 1 && n > 2 {
            step > 0.0 && step <= dt + tol
        } else {
            (step - dt).abs() <= tol
        };
        if !ok {
            return Err(PreprocessError::RequiresUniform(i));
        }
    }
    Ok(dt)
}

/// Mirror index without repeating the edge: -1 -> 1, n -> n-2.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Value at padded index `i` under point reflection about the nearer end:
/// `x[-k] = 2 x[0] - x[k]`. End samples stay fixed and linear motion passes
/// through unchanged, so adjacent pen segments still meet.
fn padded(values: &[f64], i: isize) -> f64 {
    let n = values.len() as isize;
    if (0..n).contains(&i) {
        return values[i as usize];
    }
    let (anchor, mirrored) = if i < 0 {
        (values[0], -i)
    } else {
        (values[n as usize - 1], 2 * (n - 1) - i)
    };
    2.0 * anchor - values[reflect(mirrored, values.len())]
}

fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = (window / 2) as isize;
    let n = values.len();
    (0..n as isize)
        .map(|i| {
            let sum: f64 = (i - half..=i + half).map(|k| padded(values, k)).sum();
            sum / window as f64
        })
        .collect()
}

/// Zero-phase moving average of x and y within each run of equal pen state,
/// with point-reflection padding at run ends.
pub fn smooth_fir(
    traj: &GlyphTrajectory,
    spec: SmoothingSpec,
) -> Result<GlyphTrajectory, PreprocessError> {
    uniform_step(traj)?;
    if spec.window_length == 1 {
        return Ok(traj.clone());
    }
    let mut out = traj.samples.clone();
    let mut start = 0;
    while start < out.len() {
        let pen = out[start].pen;
        let end = start + out[start..].iter().take_while(|s| s.pen == pen).count();
        let seg = &traj.samples[start..end];
        let xs: Vec<f64> = seg.iter().map(|s| s.x).collect();
        let ys: Vec<f64> = seg.iter().map(|s| s.y).collect();
        let xs = moving_average(&xs, spec.window_length);
        let ys = moving_average(&ys, spec.window_length);
        for (k, s) in out[start..end].iter_mut().enumerate() {
            s.x = xs[k];
            s.y = ys[k];
        }
        start = end;
    }
    Ok(GlyphTrajectory::new(traj.letter, out))
}

/// Scales about the glyph's bounding-box center by `factor`.
pub fn scale_glyph_about_center(traj: &GlyphTrajectory, factor: f64) -> GlyphTrajectory {
    let Ok(b) = traj.bounding_box() else {
        return traj.clone();
    };
    let (cx, cy) = b.center();
    traj.map_positions(|x, y| (cx + factor * (x - cx), cy + factor * (y - cy)))
}

/// One uniform factor `h / mean height`, applied to every glyph about its own
/// bounding-box center. Returns the scaled font and the factor.
pub fn scale_font_to_mean_height(
    font: &StrokeFont,
    h: f64,
) -> Result<(StrokeFont, f64), PreprocessError> {
    let mean = font.mean_height();
    if !(mean > 0.0) {
        return Err(PreprocessError::DegenerateFont);
    }
    let factor = h / mean;
    let scaled = font.try_map(font.provenance.clone(), |g| {
        scale_glyph_about_center(g, factor)
    })?;
    Ok((scaled, factor))
}

/// Multiplies every timestamp by `d / T`; the last sample lands exactly on `d`.
pub fn scale_temporal(
    traj: &GlyphTrajectory,
    d: f64,
) -> Result<GlyphTrajectory, PreprocessError> {
    let duration = traj.duration();
    if !(duration > 0.0) {
        return Err(PreprocessError::DegenerateDuration);
    }
    let t0 = traj.samples[0].t;
    let ratio = d / duration;
    let n = traj.samples.len();
    let samples = traj
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = if i == n - 1 { d } else { (s.t - t0) * ratio };
            TimedSample { t, ..*s }
        })
        .collect();
    Ok(GlyphTrajectory::new(traj.letter, samples))
}

/// Speed magnitude in mm/s per sample: central differences inside, one-sided
/// at the ends.
pub fn velocity_profile(traj: &GlyphTrajectory) -> Result<Vec<(f64, f64)>, PreprocessError> {
    let s = &traj.samples;
    let n = s.len();
    if n < 2 {
        return Err(PreprocessError::TooShort);
    }
    let speed = |a: &TimedSample, b: &TimedSample| {
        let dt = (b.t - a.t) / 1000.0;
        if dt > 0.0 {
            a.distance_to(b) / dt
        } else {
            0.0
        }
    };
    Ok((0..n)
        .map(|i| {
            let v = if i == 0 {
                speed(&s[0], &s[1])
            } else if i == n - 1 {
                speed(&s[n - 2], &s[n - 1])
            } else {
                speed(&s[i - 1], &s[i + 1])
            };
            (s[i].t, v)
        })
        .collect())
}

/// Full conditioning pipeline for one presentation condition.
pub fn prepare_presentation(
    font: &StrokeFont,
    cond: PresentationCondition,
    smoothing: SmoothingSpec,
    dt: f64,
) -> Result<StrokeFont, PreprocessError> {
    cond.check()?;
    let mut conditioned = Vec::with_capacity(font.glyphs().len());
    for g in font.iter() {
        let resampled = resample_uniform(g, dt)?;
        conditioned.push(smooth_fir(&resampled, smoothing)?);
    }
    let conditioned = StrokeFont::new(font.provenance.clone(), conditioned)?;
    let (scaled, _) = scale_font_to_mean_height(&conditioned, cond.target_mean_height)?;
    let mut timed = Vec::with_capacity(scaled.glyphs().len());
    for g in scaled.iter() {
        timed.push(scale_temporal(g, cond.target_duration)?);
    }
    let provenance = format!(
        "{}; prepared {} (dt {} ms, window {})",
        font.provenance,
        cond.label(),
        dt,
        smoothing.window_length
    );
    Ok(StrokeFont::new(provenance, timed)?)
}

/// [`prepare_presentation`] with the default 5 ms resampling and 5-sample window.
pub fn prepare_default(
    font: &StrokeFont,
    cond: PresentationCondition,
) -> Result<StrokeFont, PreprocessError> {
    prepare_presentation(font, cond, SmoothingSpec::default(), DEFAULT_DT_MS)
}

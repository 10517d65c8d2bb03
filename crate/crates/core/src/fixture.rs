//! Deterministic generated lowercase stroke font.
//!
//! Shapes are built from line segments and circular arcs on a 5 mm x-height
//! with 10 mm ascenders (about 2x the x-height, so `d` never reads as `a`) and
//! 5 mm descenders. Each glyph is "written" in exactly 1000 ms and sampled every
//! 5 ms like a tablet recording. Within a stroke the tip speed follows
//! `1 - 0.4 cos(2π τ)`, slow at the stroke ends and fastest mid-stroke; pen-up
//! travel between strokes gets proportionally less time than ink.

use std::f64::consts::PI;

use crate::font::StrokeFont;
use crate::trajectory::{GlyphTrajectory, Letter, Pen, TimedSample};

pub const X_HEIGHT: f64 = 5.0;
pub const ASCENDER: f64 = 10.0;
pub const DESCENDER: f64 = -5.0;
pub const GLYPH_DURATION_MS: f64 = 1000.0;
pub const SAMPLE_PERIOD_MS: f64 = 5.0;

const SPEED_MODULATION: f64 = 0.4;
const TRAVEL_WEIGHT: f64 = 1.0;
const MIN_SEGMENT_TICKS: usize = 3;

type Point = (f64, f64);

#[derive(Default)]
struct Stroke {
    points: Vec<Point>,
}

impl Stroke {
    fn from(p: Point) -> Self {
        Stroke { points: vec![p] }
    }

    fn line(mut self, p: Point) -> Self {
        self.points.push(p);
        self
    }

    /// Arc around `c` from `start_deg`, sweeping `sweep_deg` (positive = ccw).
    /// The arc starts wherever the angle puts it; a connecting line is implied.
    fn arc(mut self, c: Point, r: f64, start_deg: f64, sweep_deg: f64) -> Self {
        let n = ((sweep_deg.abs() / 5.0).ceil() as usize).max(2);
        for k in 0..=n {
            let a = (start_deg + sweep_deg * k as f64 / n as f64).to_radians();
            let p = (c.0 + r * a.cos(), c.1 + r * a.sin());
            if self.points.last().is_some_and(|q| dist(*q, p) < 1e-9) {
                continue;
            }
            self.points.push(p);
        }
        self
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn strokes_for(letter: char) -> Vec<Stroke> {
    let xh = X_HEIGHT;
    let asc = ASCENDER;
    let desc = DESCENDER;
    let r = xh / 2.0;
    let bowl = (r, r);
    match letter {
        'a' => vec![Stroke::default()
            .arc(bowl, r, 45.0, 315.0)
            .line((xh, xh))
            .line((xh, 0.0))],
        'b' => vec![Stroke::from((0.0, asc))
            .line((0.0, 0.0))
            .line((0.0, r))
            .arc(bowl, r, 180.0, -360.0)],
        'c' => vec![Stroke::default().arc(bowl, r, 45.0, 270.0)],
        'd' => vec![Stroke::default()
            .arc(bowl, r, 45.0, 315.0)
            .line((xh, asc))
            .line((xh, 0.0))],
        'e' => vec![Stroke::from((0.0, r)).line((xh, r)).arc(bowl, r, 0.0, 315.0)],
        'f' => vec![
            Stroke::default()
                .arc((3.5, 8.5), 1.5, 30.0, 150.0)
                .line((2.0, 0.0)),
            Stroke::from((0.5, xh)).line((4.0, xh)),
        ],
        'g' => vec![Stroke::default()
            .arc(bowl, r, 45.0, 315.0)
            .line((xh, xh))
            .line((xh, -2.5))
            .arc((r, -2.5), r, 0.0, -180.0)],
        'h' => vec![Stroke::from((0.0, asc))
            .line((0.0, 0.0))
            .line((0.0, r))
            .arc(bowl, r, 180.0, -180.0)
            .line((xh, 0.0))],
        'i' => vec![
            Stroke::from((0.0, xh)).line((0.0, 0.0)),
            Stroke::from((0.0, 7.0)).line((0.0, 7.3)),
        ],
        'j' => vec![
            Stroke::from((2.0, xh))
                .line((2.0, -3.5))
                .arc((0.5, -3.5), 1.5, 0.0, -180.0),
            Stroke::from((2.0, 7.0)).line((2.0, 7.3)),
        ],
        'k' => vec![
            Stroke::from((0.0, asc)).line((0.0, 0.0)),
            Stroke::from((4.0, xh)).line((0.0, 2.0)).line((4.0, 0.0)),
        ],
        'l' => vec![Stroke::from((0.0, asc)).line((0.0, 0.0))],
        'm' => vec![Stroke::from((0.0, xh))
            .line((0.0, 0.0))
            .line((0.0, 3.75))
            .arc((1.25, 3.75), 1.25, 180.0, -180.0)
            .line((2.5, 0.0))
            .line((2.5, 3.75))
            .arc((3.75, 3.75), 1.25, 180.0, -180.0)
            .line((xh, 0.0))],
        'n' => vec![Stroke::from((0.0, xh))
            .line((0.0, 0.0))
            .line((0.0, r))
            .arc(bowl, r, 180.0, -180.0)
            .line((xh, 0.0))],
        'o' => vec![Stroke::default().arc(bowl, r, 90.0, 360.0)],
        'p' => vec![Stroke::from((0.0, xh))
            .line((0.0, desc))
            .line((0.0, r))
            .arc(bowl, r, 180.0, -360.0)],
        'q' => vec![Stroke::default()
            .arc(bowl, r, 45.0, 315.0)
            .line((xh, xh))
            .line((xh, desc))
            .line((6.0, -4.0))],
        'r' => vec![Stroke::from((0.0, xh))
            .line((0.0, 0.0))
            .line((0.0, 3.0))
            .arc((2.0, 3.0), 2.0, 180.0, -135.0)],
        's' => vec![Stroke::default()
            .arc((r, 3.75), 1.25, 30.0, 240.0)
            .arc((r, 1.25), 1.25, 90.0, -270.0)],
        't' => vec![
            Stroke::from((1.5, 8.0))
                .line((1.5, 0.8))
                .arc((2.5, 0.8), 1.0, 180.0, 90.0),
            Stroke::from((0.0, xh)).line((3.5, xh)),
        ],
        'u' => vec![Stroke::from((0.0, xh))
            .line((0.0, r))
            .arc(bowl, r, 180.0, 180.0)
            .line((xh, xh))
            .line((xh, 0.0))],
        'v' => vec![Stroke::from((0.0, xh)).line((r, 0.0)).line((xh, xh))],
        'w' => vec![Stroke::from((0.0, xh))
            .line((1.25, 0.0))
            .line((r, 4.0))
            .line((3.75, 0.0))
            .line((xh, xh))],
        'x' => vec![
            Stroke::from((0.0, xh)).line((xh, 0.0)),
            Stroke::from((xh, xh)).line((0.0, 0.0)),
        ],
        'y' => vec![
            Stroke::from((0.0, xh)).line((r, 0.0)),
            Stroke::from((xh, xh)).line((1.0, desc)),
        ],
        'z' => vec![Stroke::from((0.0, xh))
            .line((xh, xh))
            .line((0.0, 0.0))
            .line((xh, 0.0))],
        _ => unreachable!("lowercase latin only"),
    }
}

/// A polyline traversed with one pen state.
struct Segment {
    points: Vec<Point>,
    cumulative: Vec<f64>,
    pen: Pen,
}

impl Segment {
    fn new(points: Vec<Point>, pen: Pen) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + dist(w[0], w[1]));
        }
        Segment {
            points,
            cumulative,
            pen,
        }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn point_at_length(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.length());
        let hi = self
            .cumulative
            .partition_point(|&c| c < s)
            .clamp(1, self.points.len() - 1);
        let (c0, c1) = (self.cumulative[hi - 1], self.cumulative[hi]);
        let (a, b) = (self.points[hi - 1], self.points[hi]);
        let alpha = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
        (a.0 + (b.0 - a.0) * alpha, a.1 + (b.1 - a.1) * alpha)
    }

    fn weight(&self) -> f64 {
        let w = match self.pen {
            Pen::Down => self.length(),
            Pen::Up => TRAVEL_WEIGHT * self.length(),
        };
        w.max(0.5)
    }
}

/// Fraction of the segment length covered at normalized time `tau`.
fn progress(tau: f64) -> f64 {
    tau - SPEED_MODULATION * (2.0 * PI * tau).sin() / (2.0 * PI)
}

/// Splits `total` ticks across weights by largest remainder, at least
/// `MIN_SEGMENT_TICKS` each.
fn allocate_ticks(weights: &[f64], total: usize) -> Vec<usize> {
    let reserved = MIN_SEGMENT_TICKS * weights.len();
    let spare = total - reserved;
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * spare as f64).collect();
    let mut ticks: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = spare - ticks.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        ticks[i] += 1;
        remaining -= 1;
    }
    ticks.iter().map(|t| t + MIN_SEGMENT_TICKS).collect()
}

pub fn fixture_glyph(letter: Letter) -> GlyphTrajectory {
    let strokes = strokes_for(letter.as_char());
    let mut segments = Vec::new();
    for (i, stroke) in strokes.into_iter().enumerate() {
        if i > 0 {
            let prev: &Segment = segments.last().unwrap();
            let from = *prev.points.last().unwrap();
            let to = stroke.points[0];
            segments.push(Segment::new(vec![from, to], Pen::Up));
        }
        segments.push(Segment::new(stroke.points, Pen::Down));
    }

    let total_ticks = (GLYPH_DURATION_MS / SAMPLE_PERIOD_MS).round() as usize;
    let weights: Vec<f64> = segments.iter().map(Segment::weight).collect();
    let ticks = allocate_ticks(&weights, total_ticks);

    let mut samples = Vec::with_capacity(total_ticks + 1);
    let mut tick = 0usize;
    for (seg, &n) in segments.iter().zip(&ticks) {
        for k in 0..n {
            let (x, y) = seg.point_at_length(progress(k as f64 / n as f64) * seg.length());
            samples.push(TimedSample::new(
                tick as f64 * SAMPLE_PERIOD_MS,
                x,
                y,
                seg.pen,
            ));
            tick += 1;
        }
    }
    let last = segments.last().unwrap();
    let (x, y) = *last.points.last().unwrap();
    samples.push(TimedSample::new(
        tick as f64 * SAMPLE_PERIOD_MS,
        x,
        y,
        last.pen,
    ));
    GlyphTrajectory::new(letter, samples)
}

/// The full 26-letter generated font.
pub fn fixture_font() -> StrokeFont {
    StrokeFont::new(
        "generated fixture: single-stroke lowercase, 5 mm x-height, 1000 ms per letter, 200 Hz",
        Letter::all().map(fixture_glyph),
    )
    .expect("generated fixture font is valid")
}

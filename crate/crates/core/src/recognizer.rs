//! DTW nearest-neighbour letter classifier used as the synthetic participant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::font::StrokeFont;
use crate::trajectory::{GlyphTrajectory, Letter, TimedSample};

pub const DEFAULT_PEN_PENALTY: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwParams {
    /// Added to the pair cost when the two samples disagree on pen state (mm).
    pub pen_penalty: f64,
}

impl Default for DtwParams {
    fn default() -> Self {
        DtwParams {
            pen_penalty: DEFAULT_PEN_PENALTY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec { sigma: 0.0, seed: 0 };
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecognizerError {
    #[error("empty")]
    Empty,
    #[error("invalid noise sigma {0}")]
    BadSigma(f64),
}

fn pair_cost(a: &TimedSample, b: &TimedSample, params: DtwParams) -> f64 {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    let d = (dx * dx + dy * dy).sqrt();
    if a.pen == b.pen {
        d
    } else {
        d + params.pen_penalty
    }
}

/// Accumulated cost of the cheapest warping path divided by its length.
/// Among equally cheap paths the shortest one is used.
pub fn dtw_samples(
    a: &[TimedSample],
    b: &[TimedSample],
    params: DtwParams,
) -> Result<f64, RecognizerError> {
    if a.is_empty() || b.is_empty() {
        return Err(RecognizerError::Empty);
    }
    let m = b.len();
    // (cost, path length), compared lexicographically.
    let mut prev: Vec<(f64, u32)> = vec![(f64::INFINITY, 0); m];
    let mut cur: Vec<(f64, u32)> = vec![(f64::INFINITY, 0); m];
    let better = |p: (f64, u32), q: (f64, u32)| p.0 < q.0 || (p.0 == q.0 && p.1 < q.1);
    for (i, sa) in a.iter().enumerate() {
        for (j, sb) in b.iter().enumerate() {
            let c = pair_cost(sa, sb, params);
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, u32::MAX);
                if i > 0 && j > 0 && better(prev[j - 1], best) {
                    best = prev[j - 1];
                }
                if i > 0 && better(prev[j], best) {
                    best = prev[j];
                }
                if j > 0 && better(cur[j - 1], best) {
                    best = cur[j - 1];
                }
                best
            };
            cur[j] = (best.0 + c, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, len) = prev[m - 1];
    Ok(cost / len as f64)
}

/// [`dtw_samples`] over two glyphs with the default pen penalty.
pub fn dtw_distance(a: &GlyphTrajectory, b: &GlyphTrajectory) -> Result<f64, RecognizerError> {
    dtw_samples(&a.samples, &b.samples, DtwParams::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub letter: Letter,
    /// All 26 letters, best first; equal scores in alphabetical order.
    pub ranking: Vec<(Letter, f64)>,
}

/// Nearest template by DTW distance after centering input and templates on
/// their bounding boxes.
pub fn classify(
    traj: &GlyphTrajectory,
    templates: &StrokeFont,
) -> Result<Classification, RecognizerError> {
    TemplateClassifier::new(templates, DtwParams::default(), None).classify(traj)
}

/// Keeps `points` samples spread evenly by index, always including both ends.
pub fn downsample(samples: &[TimedSample], points: usize) -> Vec<TimedSample> {
    let n = samples.len();
    if points >= n || points < 2 {
        return samples.to_vec();
    }
    (0..points)
        .map(|k| samples[(k * (n - 1) + (points - 1) / 2) / (points - 1)])
        .collect()
}

/// Precomputed, centered (and optionally downsampled) templates.
#[derive(Debug, Clone)]
pub struct TemplateClassifier {
    templates: Vec<(Letter, Vec<TimedSample>)>,
    params: DtwParams,
    points: Option<usize>,
}

impl TemplateClassifier {
    pub fn new(font: &StrokeFont, params: DtwParams, points: Option<usize>) -> Self {
        let templates = font
            .iter()
            .map(|g| (g.letter, Self::reduce(&g.centered(), points)))
            .collect();
        TemplateClassifier {
            templates,
            params,
            points,
        }
    }

    fn reduce(g: &GlyphTrajectory, points: Option<usize>) -> Vec<TimedSample> {
        match points {
            Some(p) => downsample(&g.samples, p),
            None => g.samples.clone(),
        }
    }

    pub fn classify(&self, traj: &GlyphTrajectory) -> Result<Classification, RecognizerError> {
        if traj.samples.is_empty() {
            return Err(RecognizerError::Empty);
        }
        let input = Self::reduce(&traj.centered(), self.points);
        let mut ranking = self
            .templates
            .iter()
            .map(|(letter, t)| Ok((*letter, dtw_samples(&input, t, self.params)?)))
            .collect::<Result<Vec<_>, RecognizerError>>()?;
        ranking.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        Ok(Classification {
            letter: ranking[0].0,
            ranking,
        })
    }
}

/// Independent N(0, sigma²) offsets on x and y of every sample, drawn from a
/// ChaCha8 stream seeded with `noise.seed`.
pub fn add_noise(
    traj: &GlyphTrajectory,
    noise: NoiseSpec,
) -> Result<GlyphTrajectory, RecognizerError> {
    if !(noise.sigma >= 0.0) || !noise.sigma.is_finite() {
        return Err(RecognizerError::BadSigma(noise.sigma));
    }
    if noise.sigma == 0.0 {
        return Ok(traj.clone());
    }
    let normal = Normal::new(0.0, noise.sigma).map_err(|_| RecognizerError::BadSigma(noise.sigma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    Ok(traj.map_positions(|x, y| {
        let dx = normal.sample(&mut rng);
        let dy = normal.sample(&mut rng);
        (x + dx, y + dy)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{fixture_font, fixture_glyph};
    use crate::trajectory::Pen;

    fn seq(points: &[(f64, f64, Pen)]) -> Vec<TimedSample> {
        points
            .iter()
            .enumerate()
            .map(|(i, &(x, y, p))| TimedSample::new(i as f64, x, y, p))
            .collect()
    }

    /// Minimum-cost, then shortest, path over every monotone warping path.
    fn brute_force(a: &[TimedSample], b: &[TimedSample], params: DtwParams) -> f64 {
        fn walk(
            a: &[TimedSample],
            b: &[TimedSample],
            params: DtwParams,
            i: usize,
            j: usize,
            cost: f64,
            len: u32,
            best: &mut (f64, u32),
        ) {
            let cost = cost + pair_cost(&a[i], &b[j], params);
            let len = len + 1;
            if i + 1 == a.len() && j + 1 == b.len() {
                if cost < best.0 || (cost == best.0 && len < best.1) {
                    *best = (cost, len);
                }
                return;
            }
            if i + 1 < a.len() {
                walk(a, b, params, i + 1, j, cost, len, best);
            }
            if j + 1 < b.len() {
                walk(a, b, params, i, j + 1, cost, len, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, params, i + 1, j + 1, cost, len, best);
            }
        }
        let mut best = (f64::INFINITY, u32::MAX);
        walk(a, b, params, 0, 0, 0.0, 0, &mut best);
        best.0 / best.1 as f64
    }

    #[test]
    fn identical_sequences_cost_nothing() {
        let g = fixture_glyph(Letter::new('s').unwrap());
        assert_eq!(dtw_distance(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn single_samples_five_apart() {
        let a = seq(&[(0.0, 0.0, Pen::Down)]);
        let b = seq(&[(3.0, 4.0, Pen::Down)]);
        assert_eq!(dtw_samples(&a, &b, DtwParams::default()).unwrap(), 5.0);
        let c = seq(&[(3.0, 4.0, Pen::Up)]);
        assert_eq!(dtw_samples(&a, &c, DtwParams::default()).unwrap(), 7.0);
    }

    #[test]
    fn empty_input_is_rejected() {
        let a = seq(&[(0.0, 0.0, Pen::Down)]);
        assert_eq!(
            dtw_samples(&a, &[], DtwParams::default()),
            Err(RecognizerError::Empty)
        );
    }

    #[test]
    fn matches_exhaustive_path_enumeration() {
        let a = seq(&[(0.0, 0.0, Pen::Down), (1.0, 0.5, Pen::Down), (2.0, 2.0, Pen::Up)]);
        let b = seq(&[(0.2, 0.1, Pen::Down), (2.1, 1.9, Pen::Up), (2.0, 2.2, Pen::Up)]);
        let p = DtwParams::default();
        assert!((dtw_samples(&a, &b, p).unwrap() - brute_force(&a, &b, p)).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        use rand::Rng;
        for _ in 0..300 {
            let make = |rng: &mut ChaCha8Rng, n: usize| -> Vec<TimedSample> {
                (0..n)
                    .map(|i| {
                        let pen = if rng.random_bool(0.7) { Pen::Down } else { Pen::Up };
                        TimedSample::new(
                            i as f64,
                            rng.random_range(-3.0..3.0),
                            rng.random_range(-3.0..3.0),
                            pen,
                        )
                    })
                    .collect()
            };
            let na = rng.random_range(1..=4);
            let nb = rng.random_range(1..=4);
            let (a, b) = (make(&mut rng, na), make(&mut rng, nb));
            let fast = dtw_samples(&a, &b, p).unwrap();
            let slow = brute_force(&a, &b, p);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn template_classifies_to_itself_with_zero_score() {
        let font = fixture_font();
        let g = font.glyph(Letter::new('g').unwrap());
        let c = classify(g, &font).unwrap();
        assert_eq!(c.letter.as_char(), 'g');
        assert_eq!(c.ranking[0].1, 0.0);
        assert_eq!(c.ranking.len(), 26);
    }

    #[test]
    fn translation_does_not_change_the_answer() {
        let font = fixture_font();
        let g = font.glyph(Letter::new('r').unwrap());
        let moved = g.translated(17.0, -4.5);
        assert_eq!(classify(&moved, &font).unwrap().letter, classify(g, &font).unwrap().letter);
    }

    #[test]
    fn noisy_x_is_still_x() {
        let font = fixture_font();
        let x = fixture_glyph(Letter::new('x').unwrap());
        let noisy = add_noise(&x, NoiseSpec { sigma: 0.2, seed: 42 }).unwrap();
        assert_eq!(classify(&noisy, &font).unwrap().letter.as_char(), 'x');
    }

    #[test]
    fn noise_is_deterministic_and_zero_sigma_is_identity() {
        let x = fixture_glyph(Letter::new('x').unwrap());
        let spec = NoiseSpec { sigma: 0.7, seed: 3 };
        assert_eq!(add_noise(&x, spec).unwrap(), add_noise(&x, spec).unwrap());
        assert_eq!(add_noise(&x, NoiseSpec { sigma: 0.0, seed: 3 }).unwrap(), x);
        let noisy = add_noise(&x, spec).unwrap();
        for (a, b) in noisy.samples.iter().zip(&x.samples) {
            assert_eq!((a.t, a.pen), (b.t, b.pen));
        }
        assert!(add_noise(&x, NoiseSpec { sigma: -1.0, seed: 0 }).is_err());
    }

    #[test]
    fn noise_mean_is_near_zero() {
        let n = 100_000;
        let base = GlyphTrajectory::new(
            Letter::new('a').unwrap(),
            (0..n).map(|i| TimedSample::new(i as f64, 0.0, 0.0, Pen::Down)).collect(),
        );
        let sigma = 1.5;
        let noisy = add_noise(&base, NoiseSpec { sigma, seed: 11 }).unwrap();
        let bound = 3.0 * sigma / (n as f64).sqrt();
        let mx = noisy.samples.iter().map(|s| s.x).sum::<f64>() / n as f64;
        let my = noisy.samples.iter().map(|s| s.y).sum::<f64>() / n as f64;
        assert!(mx.abs() < bound && my.abs() < bound, "{mx} {my} {bound}");
    }

    #[test]
    fn downsample_keeps_ends() {
        let s = seq(&[(0.0, 0.0, Pen::Down); 201]);
        let d = downsample(&s, 32);
        assert_eq!(d.len(), 32);
        assert_eq!(d[0].t, 0.0);
        assert_eq!(d[31].t, 200.0);
        assert_eq!(downsample(&s[..10], 32).len(), 10);
    }
}

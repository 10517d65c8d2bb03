//! Distribution functions and ANOVA checked against independent computations:
//! Gauss-Legendre quadrature of the densities and direct sums of squares.

use glyphmotion::stats::{f_cdf, paired_t_test, t_cdf, two_way_anova, AnovaTable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::gamma::ln_gamma;

/// Nodes and weights on [-1, 1] by Newton iteration on P_n.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(16);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + h / 2.0;
        total += rule.iter().map(|&(x, w)| w * f(mid + x * h / 2.0)).sum::<f64>() * h / 2.0;
    }
    total
}

fn t_density(t: f64, df: f64) -> f64 {
    let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp()
}

fn t_cdf_oracle(t: f64, df: f64) -> f64 {
    let panels = ((t.abs() * 40.0).ceil() as usize).max(8);
    0.5 + t.signum() * integrate(|u| t_density(u, df), 0.0, t.abs(), panels)
}

fn f_density(x: f64, d1: f64, d2: f64) -> f64 {
    let ln_c = ln_gamma((d1 + d2) / 2.0) - ln_gamma(d1 / 2.0) - ln_gamma(d2 / 2.0)
        + d1 / 2.0 * (d1 / d2).ln();
    (ln_c + (d1 / 2.0 - 1.0) * x.ln() - (d1 + d2) / 2.0 * (1.0 + d1 * x / d2).ln()).exp()
}

/// Substituting x = u² removes the x^(d1/2 - 1) singularity at zero.
fn f_cdf_oracle(f: f64, d1: f64, d2: f64) -> f64 {
    let r = f.sqrt();
    let panels = ((r * 60.0).ceil() as usize).max(16);
    integrate(|u| if u == 0.0 { 0.0 } else { 2.0 * u * f_density(u * u, d1, d2) }, 0.0, r, panels)
}

#[test]
fn t_cdf_matches_quadrature() {
    for df in [1.0, 2.0, 3.0, 4.0, 7.0, 20.0, 63.0] {
        for &t in &[-50.0, -12.0, -3.3, -1.0, -0.2, 0.0, 0.4, 1.725, 2.5, 6.0, 20.0, 50.0] {
            let got = t_cdf(t, df).unwrap();
            let want = t_cdf_oracle(t, df);
            assert!((got - want).abs() < 1e-10, "t={t} df={df}: {got} vs {want}");
        }
    }
}

#[test]
fn f_cdf_matches_quadrature() {
    for (d1, d2) in [(1.0, 1.0), (1.0, 12.0), (2.0, 5.0), (3.0, 76.0), (4.0, 30.0), (10.0, 3.0)] {
        for &f in &[0.01, 0.3, 1.0, 2.7, 9.0, 55.0, 400.0, 10_000.0] {
            let got = f_cdf(f, d1, d2).unwrap();
            let want = f_cdf_oracle(f, d1, d2);
            assert!((got - want).abs() < 1e-10, "F={f} ({d1},{d2}): {got} vs {want}");
        }
    }
}

#[test]
fn paired_t_on_one_to_five() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [0.0; 5];
    let r = paired_t_test(&a, &b).unwrap();
    // mean 3, sd sqrt(2.5): t = 3 / (sqrt(2.5) / sqrt(5)) = 3 sqrt(2).
    let t = 3.0 * 2.0f64.sqrt();
    assert!((r.statistic - t).abs() < 1e-12);
    assert_eq!(r.df1, 4.0);
    let p = 2.0 * (1.0 - t_cdf_oracle(t, 4.0));
    assert!((r.p_value - p).abs() < 1e-6, "{} vs {p}", r.p_value);
}

#[test]
fn cdfs_are_monotone_and_bounded() {
    let mut prev = 0.0;
    for k in -2000..=2000 {
        let v = t_cdf(k as f64 * 0.025, 5.0).unwrap();
        assert!((0.0..=1.0).contains(&v) && v >= prev);
        prev = v;
    }
    let mut prev = 0.0;
    for k in 0..=4000 {
        let v = f_cdf(k as f64 * 0.01, 3.0, 17.0).unwrap();
        assert!((0.0..=1.0).contains(&v) && v >= prev);
        prev = v;
    }
}

/// Cell means are whole numbers, so every sum below is exact in f64.
#[test]
fn hand_picked_table_matches_direct_summation() {
    let cells = vec![
        vec![vec![70.0, 74.0, 72.0], vec![60.0, 66.0, 63.0]],
        vec![vec![52.0, 50.0, 57.0], vec![40.0, 47.0, 45.0]],
    ];
    let tbl = AnovaTable::new("h", "d", vec![14.0, 7.0], vec![1000.0, 500.0], cells.clone()).unwrap();
    let r = two_way_anova(&tbl).unwrap().sums_of_squares;

    let ys: Vec<f64> = cells.iter().flatten().flatten().copied().collect();
    let grand = ys.iter().sum::<f64>() / 12.0;
    let cm = |i: usize, j: usize| cells[i][j].iter().sum::<f64>() / 3.0;
    let am = |i: usize| (cm(i, 0) + cm(i, 1)) / 2.0;
    let bm = |j: usize| (cm(0, j) + cm(1, j)) / 2.0;
    let mut ss_a = 0.0;
    let mut ss_b = 0.0;
    let mut ss_cells = 0.0;
    let mut ss_e = 0.0;
    let mut ss_t = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for &y in &cells[i][j] {
                ss_a += (am(i) - grand).powi(2);
                ss_b += (bm(j) - grand).powi(2);
                ss_cells += (cm(i, j) - grand).powi(2);
                ss_e += (y - cm(i, j)).powi(2);
                ss_t += (y - grand).powi(2);
            }
        }
    }
    assert_eq!(r.a, ss_a);
    assert_eq!(r.b, ss_b);
    assert_eq!(r.interaction, ss_cells - ss_a - ss_b);
    assert_eq!(r.error, ss_e);
    assert_eq!(r.total, ss_t);
}

fn random_table(rng: &mut ChaCha8Rng) -> AnovaTable {
    let a = rng.random_range(2..=4);
    let b = rng.random_range(2..=4);
    let n = rng.random_range(2..=6);
    let cells = (0..a)
        .map(|_| {
            (0..b)
                .map(|_| (0..n).map(|_| rng.random_range(0.0..100.0)).collect())
                .collect()
        })
        .collect();
    AnovaTable::new(
        "a",
        "b",
        (0..a).map(|i| i as f64).collect(),
        (0..b).map(|j| j as f64).collect(),
        cells,
    )
    .unwrap()
}

#[test]
fn decomposition_identity_on_random_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let ss = two_way_anova(&random_table(&mut rng)).unwrap().sums_of_squares;
        let parts = ss.a + ss.b + ss.interaction + ss.error;
        assert!((parts - ss.total).abs() <= 1e-9 * ss.total, "{ss:?}");
    }
}

#[test]
fn additive_construction_has_no_interaction() {
    let heights = [14.0, 7.0];
    let durations = [1000.0, 500.0];
    let (mu, alpha, beta) = (70.0, [8.0, -8.0], [10.0, -10.0]);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|i| {
                (0..2)
                    .map(|j| {
                        let e: Vec<f64> = (0..10).map(|_| noise.sample(&mut rng)).collect();
                        let m = e.iter().sum::<f64>() / e.len() as f64;
                        e.iter().map(|x| mu + alpha[i] + beta[j] + (x - m)).collect()
                    })
                    .collect()
            })
            .collect();
        let tbl = AnovaTable::new("h", "d", heights.to_vec(), durations.to_vec(), cells).unwrap();
        let r = two_way_anova(&tbl).unwrap();
        if r.interaction.p_value > 0.9 && r.factor_a.p_value < 0.01 && r.factor_b.p_value < 0.01 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

proptest! {
    #[test]
    fn shift_leaves_f_unchanged(seed in any::<u64>(), shift in -1000.0f64..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_table(&mut rng);
        let mut shifted = t.clone();
        for y in shifted.cells.iter_mut().flatten().flatten() {
            *y += shift;
        }
        let r0 = two_way_anova(&t).unwrap();
        let r1 = two_way_anova(&shifted).unwrap();
        for (x, y) in r0.reports().iter().zip(r1.reports()) {
            prop_assert!((x.statistic - y.statistic).abs() <= 1e-9 * x.statistic.abs().max(1.0));
        }
    }

    #[test]
    fn t_statistic_is_antisymmetric(a in prop::collection::vec(0.0f64..100.0, 2..30), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.random_range(0.0..100.0)).collect();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.statistic, -ba.statistic);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }
}

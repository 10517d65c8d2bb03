//! Paired t-test and balanced two-way ANOVA on accuracy percents, with the
//! distribution functions they need, plus two unit conversions.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("bad-df: {0}")]
    BadDf(f64),
    #[error("length-mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("too-few: need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("degenerate-variance")]
    DegenerateVariance,
    #[error("unbalanced: {0}")]
    Unbalanced(String),
    #[error("degenerate-error")]
    DegenerateError,
    #[error("bad-arm: {0}")]
    BadArm(f64),
    #[error("bad-duration: {0}")]
    BadDuration(f64),
    #[error("format: line {line}: {message}")]
    Format { line: usize, message: String },
}

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for I_x(a, b), modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn check_df(df: f64) -> Result<(), StatsError> {
    if df >= 1.0 && df.is_finite() {
        Ok(())
    } else {
        Err(StatsError::BadDf(df))
    }
}

/// Two-sided tail P(|T| ≥ |t|).
fn t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Student t distribution function.
pub fn t_cdf(t: f64, df: f64) -> Result<f64, StatsError> {
    check_df(df)?;
    if t.is_nan() {
        return Ok(f64::NAN);
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    let tail = 0.5 * t_two_sided(t, df);
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// F distribution function.
pub fn f_cdf(f: f64, df1: f64, df2: f64) -> Result<f64, StatsError> {
    check_df(df1)?;
    check_df(df2)?;
    if f <= 0.0 {
        return Ok(0.0);
    }
    Ok(inc_beta(df1 / 2.0, df2 / 2.0, df1 * f / (df1 * f + df2)))
}

/// Upper tail P(F' ≥ f), computed directly for accuracy at small p.
fn f_upper(f: f64, df1: f64, df2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    inc_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub effect: String,
    pub statistic: f64,
    pub df1: f64,
    /// Denominator degrees of freedom; absent for t.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df2: Option<f64>,
    pub p_value: f64,
}

impl StatsReport {
    fn df_text(&self) -> String {
        match self.df2 {
            Some(d2) => format!("{}, {}", self.df1, d2),
            None => format!("{}", self.df1),
        }
    }
}

/// Plain-text table, one effect per row.
pub fn render_table(reports: &[StatsReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.effect.len())
        .max()
        .unwrap_or(0)
        .max(6);
    let mut out = format!("{:<width$}  {:>12}  {:>10}  {:>12}\n", "effect", "statistic", "df", "p");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>12.6}  {:>10}  {:>12.6e}",
            r.effect,
            r.statistic,
            r.df_text(),
            r.p_value
        );
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-sided paired t-test of `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<StatsReport, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as f64;
    let (t, p) = if var == 0.0 {
        if m != 0.0 {
            return Err(StatsError::DegenerateVariance);
        }
        (0.0, 1.0)
    } else {
        let t = m / (var.sqrt() / (n as f64).sqrt());
        (t, t_two_sided(t, df))
    };
    Ok(StatsReport {
        effect: "paired difference".to_string(),
        statistic: t,
        df1: df,
        df2: None,
        p_value: p.clamp(0.0, 1.0),
    })
}

/// Balanced two-factor layout: `cells[i][j]` holds the replicates for level
/// `i` of factor A and level `j` of factor B.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaTable {
    pub factor_a: String,
    pub factor_b: String,
    pub a_levels: Vec<f64>,
    pub b_levels: Vec<f64>,
    pub cells: Vec<Vec<Vec<f64>>>,
}

impl AnovaTable {
    pub fn new(
        factor_a: impl Into<String>,
        factor_b: impl Into<String>,
        a_levels: Vec<f64>,
        b_levels: Vec<f64>,
        cells: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, StatsError> {
        let t = AnovaTable {
            factor_a: factor_a.into(),
            factor_b: factor_b.into(),
            a_levels,
            b_levels,
            cells,
        };
        t.replicates()?;
        Ok(t)
    }

    /// Rows of (level A, level B, value); levels are sorted ascending.
    pub fn from_rows(
        factor_a: &str,
        factor_b: &str,
        rows: &[(f64, f64, f64)],
    ) -> Result<Self, StatsError> {
        let levels = |f: fn(&(f64, f64, f64)) -> f64| {
            let mut v: Vec<f64> = rows.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let a_levels = levels(|r| r.0);
        let b_levels = levels(|r| r.1);
        let mut cells = vec![vec![Vec::new(); b_levels.len()]; a_levels.len()];
        for &(a, b, y) in rows {
            let i = a_levels.iter().position(|&l| l == a).expect("level");
            let j = b_levels.iter().position(|&l| l == b).expect("level");
            cells[i][j].push(y);
        }
        AnovaTable::new(factor_a, factor_b, a_levels, b_levels, cells)
    }

    /// CSV with header `height,duration,accuracy`.
    pub fn from_csv(text: &str) -> Result<Self, StatsError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(StatsError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        if names.len() != 3 {
            return Err(StatsError::Format {
                line: 1,
                message: "expected three columns".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let vals = parse_fields(line, i + 1)?;
            if vals.len() != 3 {
                return Err(StatsError::Format {
                    line: i + 1,
                    message: "expected three values".into(),
                });
            }
            rows.push((vals[0], vals[1], vals[2]));
        }
        AnovaTable::from_rows(names[0], names[1], &rows)
    }

    /// Replicates per cell, after checking the layout.
    pub fn replicates(&self) -> Result<usize, StatsError> {
        let (a, b) = (self.cells.len(), self.cells.first().map_or(0, Vec::len));
        if a < 2 || b < 2 {
            return Err(StatsError::Unbalanced(format!(
                "need at least 2 levels per factor, got {a}x{b}"
            )));
        }
        if self.a_levels.len() != a || self.b_levels.len() != b {
            return Err(StatsError::Unbalanced("level labels do not match cells".into()));
        }
        let n = self.cells[0][0].len();
        for row in &self.cells {
            if row.len() != b {
                return Err(StatsError::Unbalanced("ragged layout".into()));
            }
            for cell in row {
                if cell.len() != n {
                    return Err(StatsError::Unbalanced(format!(
                        "cell sizes differ ({} vs {n})",
                        cell.len()
                    )));
                }
            }
        }
        if n < 2 {
            return Err(StatsError::Unbalanced(format!(
                "need at least 2 replicates per cell, got {n}"
            )));
        }
        Ok(n)
    }
}

fn parse_fields(line: &str, line_no: usize) -> Result<Vec<f64>, StatsError> {
    line.split(',')
        .map(|f| {
            f.trim().parse::<f64>().map_err(|e| StatsError::Format {
                line: line_no,
                message: format!("{:?}: {e}", f.trim()),
            })
        })
        .collect()
}

/// One number per line; an optional non-numeric first line is a header.
pub fn parse_column(text: &str) -> Result<Vec<f64>, StatsError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() {
            continue;
        }
        match l.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if out.is_empty() && i == 0 => {}
            Err(e) => {
                return Err(StatsError::Format {
                    line: i + 1,
                    message: format!("{l:?}: {e}"),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SumsOfSquares {
    pub a: f64,
    pub b: f64,
    pub interaction: f64,
    pub error: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaResult {
    pub factor_a: StatsReport,
    pub factor_b: StatsReport,
    pub interaction: StatsReport,
    pub sums_of_squares: SumsOfSquares,
}

impl AnovaResult {
    pub fn reports(&self) -> [&StatsReport; 3] {
        [&self.factor_a, &self.factor_b, &self.interaction]
    }

    pub fn to_table(&self) -> String {
        render_table(&self.reports().map(Clone::clone))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("anova json")
    }
}

/// Fixed-effects two-way ANOVA with replication.
pub fn two_way_anova(tbl: &AnovaTable) -> Result<AnovaResult, StatsError> {
    let n = tbl.replicates()?;
    let a = tbl.cells.len();
    let b = tbl.cells[0].len();
    let nf = n as f64;
    let all: Vec<f64> = tbl.cells.iter().flatten().flatten().copied().collect();
    let grand = mean(&all);
    let cell_mean: Vec<Vec<f64>> = tbl
        .cells
        .iter()
        .map(|row| row.iter().map(|c| mean(c)).collect())
        .collect();
    let a_mean: Vec<f64> = cell_mean.iter().map(|row| mean(row)).collect();
    let b_mean: Vec<f64> = (0..b)
        .map(|j| cell_mean.iter().map(|row| row[j]).sum::<f64>() / a as f64)
        .collect();

    let sq = |x: f64| x * x;
    let ss_a = b as f64 * nf * a_mean.iter().map(|m| sq(m - grand)).sum::<f64>();
    let ss_b = a as f64 * nf * b_mean.iter().map(|m| sq(m - grand)).sum::<f64>();
    let mut ss_ab = 0.0;
    let mut ss_e = 0.0;
    for i in 0..a {
        for j in 0..b {
            ss_ab += nf * sq(cell_mean[i][j] - a_mean[i] - b_mean[j] + grand);
            ss_e += tbl.cells[i][j]
                .iter()
                .map(|y| sq(y - cell_mean[i][j]))
                .sum::<f64>();
        }
    }
    let ss_t = all.iter().map(|y| sq(y - grand)).sum::<f64>();
    let ss = SumsOfSquares {
        a: ss_a,
        b: ss_b,
        interaction: ss_ab,
        error: ss_e,
        total: ss_t,
    };

    let df_a = (a - 1) as f64;
    let df_b = (b - 1) as f64;
    let df_ab = df_a * df_b;
    let df_e = (a * b * (n - 1)) as f64;
    let scale = all.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE);
    let constant = ss_t <= 1e-24 * scale;
    if !constant && ss_e <= 1e-12 * ss_t {
        return Err(StatsError::DegenerateError);
    }
    let ms_e = ss_e / df_e;
    let report = |effect: &str, ss_x: f64, df: f64| {
        let (f, p) = if constant {
            (0.0, 1.0)
        } else {
            let f = (ss_x / df) / ms_e;
            (f, f_upper(f, df, df_e).clamp(0.0, 1.0))
        };
        StatsReport {
            effect: effect.to_string(),
            statistic: f,
            df1: df,
            df2: Some(df_e),
            p_value: p,
        }
    };
    Ok(AnovaResult {
        factor_a: report(&tbl.factor_a, ss_a, df_a),
        factor_b: report(&tbl.factor_b, ss_b, df_b),
        interaction: report(
            &format!("{} x {}", tbl.factor_a, tbl.factor_b),
            ss_ab,
            df_ab,
        ),
        sums_of_squares: ss,
    })
}

/// Angular speed (deg/s) of a joint whose lever of `arm_length_mm` moves its
/// tip at `linear_speed_mm_s`.
pub fn joint_angular_velocity(linear_speed_mm_s: f64, arm_length_mm: f64) -> Result<f64, StatsError> {
    if !(arm_length_mm > 0.0) {
        return Err(StatsError::BadArm(arm_length_mm));
    }
    Ok(linear_speed_mm_s / arm_length_mm * (180.0 / std::f64::consts::PI))
}

pub fn letters_per_minute(duration_ms_per_letter: f64) -> Result<f64, StatsError> {
    if !(duration_ms_per_letter > 0.0) {
        return Err(StatsError::BadDuration(duration_ms_per_letter));
    }
    Ok(60_000.0 / duration_ms_per_letter)
}

//! Ideal kinematic stage: steps move instantly at their scheduled time, the
//! solenoid follows pen commands after a fixed actuation delay.

use thiserror::Error;

use crate::font::write_samples;
use crate::motion::{check_limits, CommandProgram, DeviceConfig, LimitFlag, MotionCommand};
use crate::trajectory::{GlyphTrajectory, Pen, TimedSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceState {
    pub t_us: u64,
    pub x: f64,
    pub y: f64,
    /// `None` until the first pen command takes effect.
    pub pen: Option<Pen>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrace {
    pub origin: (f64, f64),
    pub samples: Vec<TraceState>,
    pub final_position: (f64, f64),
    pub duration_us: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("limit-violation: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    LimitViolation(Vec<LimitFlag>),
    #[error("runaway: position ({x}, {y}) left the workspace at {t_us} us")]
    Runaway { t_us: u64, x: f64, y: f64 },
    #[error("duration-mismatch: reference {reference_us} us, trace {trace_us} us")]
    DurationMismatch { reference_us: f64, trace_us: u64 },
    #[error("empty reference trajectory")]
    EmptyReference,
}

pub fn execute(prog: &CommandProgram, cfg: &DeviceConfig) -> Result<SimulatedTrace, SimError> {
    let report = check_limits(prog, cfg);
    if !report.is_clean() {
        return Err(SimError::LimitViolation(report.flags));
    }
    let res = cfg.step_resolution;
    let delay_us = (cfg.solenoid_actuation_delay_ms * 1000.0).round() as u64;
    let inside = |x: f64, y: f64| {
        let eps = 1e-9;
        (-eps..=cfg.workspace_x + eps).contains(&x) && (-eps..=cfg.workspace_y + eps).contains(&y)
    };

    let (mut x, mut y) = prog.origin;
    let mut pen: Option<Pen> = None;
    let mut now = 0u64;
    let mut pending: Vec<(u64, Pen)> = Vec::new();
    let mut samples = vec![TraceState {
        t_us: 0,
        x,
        y,
        pen,
    }];

    // Applies pen changes that come due at or before `until`.
    fn settle(
        pending: &mut Vec<(u64, Pen)>,
        until: u64,
        pen: &mut Option<Pen>,
        x: f64,
        y: f64,
        samples: &mut Vec<TraceState>,
    ) {
        while let Some(&(at, p)) = pending.first() {
            if at > until {
                break;
            }
            pending.remove(0);
            *pen = Some(p);
            samples.push(TraceState {
                t_us: at,
                x,
                y,
                pen: *pen,
            });
        }
    }

    for c in &prog.commands {
        match *c {
            MotionCommand::Dwell(us) => {
                settle(&mut pending, now + us - 1, &mut pen, x, y, &mut samples);
                now += us;
                settle(&mut pending, now, &mut pen, x, y, &mut samples);
            }
            MotionCommand::StepX(d) => x += d as f64 * res,
            MotionCommand::StepY(d) => y += d as f64 * res,
            MotionCommand::Pen(p) => {
                if delay_us == 0 {
                    pen = Some(p);
                } else {
                    pending.push((now + delay_us, p));
                    continue;
                }
            }
        }
        if !inside(x, y) {
            return Err(SimError::Runaway { t_us: now, x, y });
        }
        let is_dwell = matches!(c, MotionCommand::Dwell(_));
        if !is_dwell || samples.last().is_some_and(|s| s.t_us < now) {
            samples.push(TraceState {
                t_us: now,
                x,
                y,
                pen,
            });
        }
    }
    settle(&mut pending, u64::MAX, &mut pen, x, y, &mut samples);
    Ok(SimulatedTrace {
        origin: prog.origin,
        samples,
        final_position: (x, y),
        duration_us: now,
    })
}

impl SimulatedTrace {
    /// Latest state at or before `t_us`.
    pub fn state_at(&self, t_us: u64) -> TraceState {
        let idx = self.samples.partition_point(|s| s.t_us <= t_us);
        self.samples[idx.saturating_sub(1)]
    }

    /// Pen states in order of change, consecutive repeats collapsed.
    pub fn pen_events(&self) -> Vec<Pen> {
        let mut events: Vec<Pen> = Vec::new();
        for s in &self.samples {
            if let Some(p) = s.pen {
                if events.last() != Some(&p) {
                    events.push(p);
                }
            }
        }
        events
    }

    /// Resampled at 1 ms as `[t_ms, x, y, pen]` rows (stage coordinates).
    pub fn export_samples(&self) -> Vec<TimedSample> {
        let steps = self.duration_us / 1000;
        let mut out: Vec<TimedSample> = (0..=steps)
            .map(|ms| {
                let s = self.state_at(ms * 1000);
                TimedSample::new(ms as f64, s.x, s.y, s.pen.unwrap_or(Pen::Up))
            })
            .collect();
        if self.duration_us % 1000 != 0 {
            let s = self.state_at(self.duration_us);
            out.push(TimedSample::new(
                self.duration_us as f64 / 1000.0,
                s.x,
                s.y,
                s.pen.unwrap_or(Pen::Up),
            ));
        }
        out
    }

    pub fn export_json(&self) -> String {
        let mut out = String::new();
        write_samples(&mut out, &self.export_samples());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingError {
    pub max: f64,
    pub rms: f64,
}

/// Pointwise tip error sampled every millisecond, comparing displacements from
/// the start: the trace is taken relative to its origin and the intended path
/// relative to its first sample.
pub fn tracking_error(
    intended: &GlyphTrajectory,
    trace: &SimulatedTrace,
) -> Result<TrackingError, SimError> {
    let first = intended.samples.first().ok_or(SimError::EmptyReference)?;
    let reference_us = intended.duration() * 1000.0;
    if (reference_us - trace.duration_us as f64).abs() > 1.0 {
        return Err(SimError::DurationMismatch {
            reference_us,
            trace_us: trace.duration_us,
        });
    }
    let mut max = 0.0f64;
    let mut sum_sq = 0.0;
    let mut n = 0usize;
    let mut times: Vec<u64> = (0..=trace.duration_us / 1000).map(|ms| ms * 1000).collect();
    if trace.duration_us % 1000 != 0 {
        times.push(trace.duration_us);
    }
    for t_us in times {
        let s = trace.state_at(t_us);
        let (px, py) = intended
            .position_at(first.t + t_us as f64 / 1000.0)
            .ok_or(SimError::EmptyReference)?;
        let ex = (s.x - trace.origin.0) - (px - first.x);
        let ey = (s.y - trace.origin.1) - (py - first.y);
        let e = ex.hypot(ey);
        max = max.max(e);
        sum_sq += e * e;
        n += 1;
    }
    Ok(TrackingError {
        max,
        rms: (sum_sq / n as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::compile;
    use crate::trajectory::Letter;

    fn line(dx: f64, dy: f64, ms: f64) -> GlyphTrajectory {
        GlyphTrajectory::new(
            Letter::new('l').unwrap(),
            vec![
                TimedSample::new(0.0, 0.0, 0.0, Pen::Down),
                TimedSample::new(ms, dx, dy, Pen::Down),
            ],
        )
    }

    #[test]
    fn seven_hundred_steps_move_seven_millimeters() {
        let cfg = DeviceConfig::default();
        let prog = compile(&line(7.0, 0.0, 1000.0), &cfg).unwrap();
        let trace = execute(&prog, &cfg).unwrap();
        assert!((trace.final_position.0 - prog.origin.0 - 7.0).abs() < 1e-9);
        assert_eq!(trace.duration_us, 1_000_000);
    }

    #[test]
    fn empty_program_has_single_state() {
        let prog = CommandProgram::new((10.0, 10.0), vec![]);
        let trace = execute(&prog, &DeviceConfig::default()).unwrap();
        assert_eq!(trace.samples.len(), 1);
        assert_eq!(trace.final_position, (10.0, 10.0));
    }

    #[test]
    fn solenoid_delay_shifts_pen_change() {
        let cfg = DeviceConfig {
            solenoid_actuation_delay_ms: 5.0,
            ..DeviceConfig::default()
        };
        let prog = CommandProgram::new(
            (10.0, 10.0),
            vec![
                MotionCommand::Dwell(2000),
                MotionCommand::Pen(Pen::Down),
                MotionCommand::Dwell(20_000),
            ],
        );
        let trace = execute(&prog, &cfg).unwrap();
        let first_down = trace
            .samples
            .iter()
            .find(|s| s.pen == Some(Pen::Down))
            .unwrap();
        assert_eq!(first_down.t_us, 2000 + 5000);
        assert_eq!(trace.state_at(6999).pen, None);
    }

    #[test]
    fn flagged_program_is_refused() {
        let prog = CommandProgram::new(
            (10.0, 10.0),
            vec![
                MotionCommand::StepX(1),
                MotionCommand::StepX(1),
                MotionCommand::Dwell(10),
            ],
        );
        assert!(matches!(
            execute(&prog, &DeviceConfig::default()),
            Err(SimError::LimitViolation(_))
        ));
    }

    #[test]
    fn excursion_is_refused_before_running() {
        let mut commands = Vec::new();
        for _ in 0..5 {
            commands.push(MotionCommand::StepX(1));
            commands.push(MotionCommand::Dwell(1000));
        }
        let prog = CommandProgram::new((49.98, 10.0), commands);
        match execute(&prog, &DeviceConfig::default()) {
            Err(SimError::LimitViolation(flags)) => {
                assert!(flags.iter().any(|f| matches!(f, LimitFlag::Workspace { .. })))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn compile_execute_tracks_within_half_step_diagonal() {
        let cfg = DeviceConfig::default();
        let g = line(3.3333, -2.71, 400.0);
        let trace = execute(&compile(&g, &cfg).unwrap(), &cfg).unwrap();
        let err = tracking_error(&g, &trace).unwrap();
        assert!(err.max <= 0.0071, "{err:?}");
        assert!(err.rms <= err.max);
    }

    #[test]
    fn identical_paths_have_zero_error() {
        let cfg = DeviceConfig::default();
        let g = line(0.0, 0.0, 50.0);
        let trace = execute(&compile(&g, &cfg).unwrap(), &cfg).unwrap();
        let err = tracking_error(&g, &trace).unwrap();
        assert_eq!((err.max, err.rms), (0.0, 0.0));
    }

    #[test]
    fn duration_mismatch() {
        let cfg = DeviceConfig::default();
        let trace = execute(&compile(&line(1.0, 0.0, 100.0), &cfg).unwrap(), &cfg).unwrap();
        assert!(matches!(
            tracking_error(&line(1.0, 0.0, 200.0), &trace),
            Err(SimError::DurationMismatch { .. })
        ));
    }

    #[test]
    fn export_is_one_row_per_millisecond() {
        let cfg = DeviceConfig::default();
        let trace = execute(&compile(&line(1.0, 0.0, 100.0), &cfg).unwrap(), &cfg).unwrap();
        let rows = trace.export_samples();
        assert_eq!(rows.len(), 101);
        assert_eq!(rows[100].t, 100.0);
        let json = trace.export_json();
        let back = crate::font::parse_samples(json.as_bytes()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn execution_is_deterministic() {
        let cfg = DeviceConfig::default();
        let prog = compile(&line(4.0, 5.0, 300.0), &cfg).unwrap();
        assert_eq!(execute(&prog, &cfg).unwrap(), execute(&prog, &cfg).unwrap());
    }
}

//! Compilation of prepared trajectories into step/pen/dwell programs for a
//! 2-axis stepper stage with an on/off solenoid stylus.
//!
//! Each axis is tracked by a time-domain DDA: the axis steps when the linear
//! interpolant of the trajectory crosses the next half-step boundary, so the
//! stepped position never deviates from the path by more than half a step.
//! Step times are rounded up to whole microseconds and consecutive steps on
//! one axis are kept at least one step period apart.
//!
//! Program text format, one item per line:
//!
//! ```text
//! ORIGIN <x> <y>
//! DUR <ms>
//! SX +1 | SX -1 | SY +1 | SY -1 | PEN 0 | PEN 1 | W <microseconds>
//! ```

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::trajectory::{GlyphTrajectory, Pen};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceConfig {
    pub workspace_x: f64,
    pub workspace_y: f64,
    /// Millimeters per step.
    pub step_resolution: f64,
    /// Vertical stroke of the solenoid tip; not used by the kinematics.
    pub solenoid_travel: f64,
    /// Steps per second, per axis.
    pub max_step_rate: f64,
    pub solenoid_actuation_delay_ms: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            workspace_x: 50.0,
            workspace_y: 50.0,
            step_resolution: 0.01,
            solenoid_travel: 1.0,
            max_step_rate: 20_000.0,
            solenoid_actuation_delay_ms: 0.0,
        }
    }
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<(), CompileError> {
        let positive = [
            ("workspace_x", self.workspace_x),
            ("workspace_y", self.workspace_y),
            ("step_resolution", self.step_resolution),
            ("solenoid_travel", self.solenoid_travel),
            ("max_step_rate", self.max_step_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CompileError::InvalidConfig(name));
            }
        }
        if !(self.solenoid_actuation_delay_ms.is_finite() && self.solenoid_actuation_delay_ms >= 0.0)
        {
            return Err(CompileError::InvalidConfig("solenoid_actuation_delay"));
        }
        Ok(())
    }

    /// Shortest allowed spacing of two steps on one axis, in whole microseconds.
    pub fn step_period_us(&self) -> u64 {
        (1e6 / self.max_step_rate).ceil() as u64
    }

    pub fn workspace(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.workspace_x,
            Axis::Y => self.workspace_y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionCommand {
    /// One step on X; direction is +1 or -1.
    StepX(i8),
    StepY(i8),
    Pen(Pen),
    /// Wait, in microseconds. Always positive.
    Dwell(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandProgram {
    pub origin: (f64, f64),
    pub commands: Vec<MotionCommand>,
    pub declared_duration_ms: f64,
}

impl CommandProgram {
    pub fn new(origin: (f64, f64), commands: Vec<MotionCommand>) -> Self {
        let total_us = dwell_total_us(&commands);
        CommandProgram {
            origin,
            commands,
            declared_duration_ms: total_us as f64 / 1000.0,
        }
    }

    pub fn step_count(&self, axis: Axis) -> usize {
        self.commands
            .iter()
            .filter(|c| match (axis, c) {
                (Axis::X, MotionCommand::StepX(_)) | (Axis::Y, MotionCommand::StepY(_)) => true,
                _ => false,
            })
            .count()
    }

    /// Net signed steps per axis.
    pub fn net_steps(&self) -> (i64, i64) {
        self.commands.iter().fold((0, 0), |(x, y), c| match c {
            MotionCommand::StepX(d) => (x + *d as i64, y),
            MotionCommand::StepY(d) => (x, y + *d as i64),
            _ => (x, y),
        })
    }

    pub fn pen_commands(&self) -> Vec<Pen> {
        self.commands
            .iter()
            .filter_map(|c| match c {
                MotionCommand::Pen(p) => Some(*p),
                _ => None,
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ORIGIN {} {}", self.origin.0, self.origin.1);
        let _ = writeln!(out, "DUR {}", self.declared_duration_ms);
        for c in &self.commands {
            let line = match c {
                MotionCommand::StepX(d) => format!("SX {}", sign(*d)),
                MotionCommand::StepY(d) => format!("SY {}", sign(*d)),
                MotionCommand::Pen(p) => format!("PEN {}", p.code()),
                MotionCommand::Dwell(us) => format!("W {us}"),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<CommandProgram, ProgramFormatError> {
        let mut origin = None;
        let mut declared = None;
        let mut commands = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: &str| ProgramFormatError {
                line: line_no,
                message: format!("{message}: {line:?}"),
            };
            let mut parts = line.split_ascii_whitespace();
            let head = parts.next().unwrap_or_default();
            let args: Vec<&str> = parts.collect();
            match (head, args.as_slice()) {
                ("ORIGIN", [x, y]) => {
                    let x: f64 = x.parse().map_err(|_| err("bad origin"))?;
                    let y: f64 = y.parse().map_err(|_| err("bad origin"))?;
                    origin = Some((x, y));
                }
                ("DUR", [ms]) => {
                    declared = Some(ms.parse::<f64>().map_err(|_| err("bad duration"))?);
                }
                ("SX", [d]) => commands.push(MotionCommand::StepX(parse_dir(d).ok_or_else(|| err("bad direction"))?)),
                ("SY", [d]) => commands.push(MotionCommand::StepY(parse_dir(d).ok_or_else(|| err("bad direction"))?)),
                ("PEN", [p]) => {
                    let pen = match *p {
                        "1" => Pen::Down,
                        "0" => Pen::Up,
                        _ => return Err(err("bad pen state")),
                    };
                    commands.push(MotionCommand::Pen(pen));
                }
                ("W", [us]) => {
                    let us: u64 = us.parse().map_err(|_| err("bad dwell"))?;
                    if us == 0 {
                        return Err(err("dwell must be positive"));
                    }
                    commands.push(MotionCommand::Dwell(us));
                }
                _ => return Err(err("unrecognized line")),
            }
        }
        let origin = origin.ok_or(ProgramFormatError {
            line: 0,
            message: "missing ORIGIN header".into(),
        })?;
        let declared = declared.ok_or(ProgramFormatError {
            line: 0,
            message: "missing DUR header".into(),
        })?;
        let total_us = dwell_total_us(&commands);
        if (declared * 1000.0 - total_us as f64).abs() > 1e-6 {
            return Err(ProgramFormatError {
                line: 0,
                message: format!("DUR {declared} ms disagrees with dwell total {total_us} us"),
            });
        }
        Ok(CommandProgram {
            origin,
            commands,
            declared_duration_ms: declared,
        })
    }
}

fn sign(d: i8) -> &'static str {
    if d > 0 {
        "+1"
    } else {
        "-1"
    }
}

fn parse_dir(s: &str) -> Option<i8> {
    match s {
        "+1" => Some(1),
        "-1" => Some(-1),
        _ => None,
    }
}

fn dwell_total_us(commands: &[MotionCommand]) -> u64 {
    commands
        .iter()
        .map(|c| match c {
            MotionCommand::Dwell(us) => *us,
            _ => 0,
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("program format: line {line}: {message}")]
pub struct ProgramFormatError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("workspace-overflow: {axis}")]
    WorkspaceOverflow { axis: Axis },
    #[error("rate-limit: interval {interval} needs {rate:.0} steps/s on {axis}")]
    RateLimit {
        interval: usize,
        axis: Axis,
        rate: f64,
    },
    #[error("empty trajectory")]
    Empty,
    #[error("trajectory times must be non-decreasing (sample {0})")]
    TimeOrder(usize),
    #[error("invalid device config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Pen(bool),
    Step(u8, i8),
}

/// Compiles a prepared trajectory into a timed command program.
pub fn compile(traj: &GlyphTrajectory, cfg: &DeviceConfig) -> Result<CommandProgram, CompileError> {
    cfg.validate()?;
    let samples = &traj.samples;
    let first = samples.first().ok_or(CompileError::Empty)?;
    let bbox = traj.bounding_box().map_err(|_| CompileError::Empty)?;
    for (axis, extent) in [(Axis::X, bbox.width()), (Axis::Y, bbox.height())] {
        if extent > cfg.workspace(axis) {
            return Err(CompileError::WorkspaceOverflow { axis });
        }
    }
    let (cx, cy) = bbox.center();
    let origin = (
        cfg.workspace_x / 2.0 + (first.x - cx),
        cfg.workspace_y / 2.0 + (first.y - cy),
    );

    let res = cfg.step_resolution;
    let t0 = first.t;
    let end_us = ((samples[samples.len() - 1].t - t0) * 1000.0).round() as u64;

    // (ideal time in us, event), later sorted by time.
    let mut events: Vec<(f64, EventKind)> = Vec::new();
    events.push((0.0, EventKind::Pen(first.pen.is_down())));
    let mut q = [0i64; 2];
    for (i, w) in samples.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let dt_ms = b.t - a.t;
        if dt_ms < 0.0 {
            return Err(CompileError::TimeOrder(i + 1));
        }
        if b.pen != a.pen {
            events.push(((b.t - t0) * 1000.0, EventKind::Pen(b.pen.is_down())));
        }
        let ua = [(a.x - first.x) / res, (a.y - first.y) / res];
        let ub = [(b.x - first.x) / res, (b.y - first.y) / res];
        for axis in 0..2 {
            let du = ub[axis] - ua[axis];
            if du == 0.0 {
                continue;
            }
            if dt_ms > 0.0 {
                let rate = du.abs() / (dt_ms / 1000.0);
                if rate > cfg.max_step_rate {
                    return Err(CompileError::RateLimit {
                        interval: i,
                        axis: if axis == 0 { Axis::X } else { Axis::Y },
                        rate,
                    });
                }
            }
            let time_at = |u: f64| {
                let alpha = if dt_ms > 0.0 { (u - ua[axis]) / du } else { 1.0 };
                (a.t - t0 + alpha * dt_ms) * 1000.0
            };
            while ub[axis] > q[axis] as f64 + 0.5 {
                events.push((time_at(q[axis] as f64 + 0.5), EventKind::Step(axis as u8, 1)));
                q[axis] += 1;
            }
            while ub[axis] < q[axis] as f64 - 0.5 {
                events.push((time_at(q[axis] as f64 - 0.5), EventKind::Step(axis as u8, -1)));
                q[axis] -= 1;
            }
        }
    }
    // Stable: same-time events keep emission order.
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let period = cfg.step_period_us();
    let mut last_step: [Option<u64>; 2] = [None, None];
    let mut scheduled: Vec<(u64, EventKind)> = Vec::with_capacity(events.len());
    for (ideal, kind) in events {
        let mut at = (ideal.max(0.0) - 1e-6).ceil() as u64;
        if let EventKind::Pen(_) = kind {
            at = ideal.max(0.0).round() as u64;
        }
        if let EventKind::Step(axis, _) = kind {
            if let Some(prev) = last_step[axis as usize] {
                at = at.max(prev + period);
            }
            last_step[axis as usize] = Some(at);
        }
        scheduled.push((at.min(end_us), kind));
    }
    scheduled.sort_by_key(|e| e.0);

    let mut commands = Vec::with_capacity(scheduled.len() * 2);
    let mut now = 0u64;
    for (at, kind) in scheduled {
        if at > now {
            commands.push(MotionCommand::Dwell(at - now));
            now = at;
        }
        commands.push(match kind {
            EventKind::Pen(down) => MotionCommand::Pen(if down { Pen::Down } else { Pen::Up }),
            EventKind::Step(0, d) => MotionCommand::StepX(d),
            EventKind::Step(_, d) => MotionCommand::StepY(d),
        });
    }
    if end_us > now {
        commands.push(MotionCommand::Dwell(end_us - now));
    }
    Ok(CommandProgram::new(origin, commands))
}

#[derive(Debug, Clone, PartialEq)]
pub enum LimitFlag {
    RateLimit { axis: Axis, rate: f64, at_us: u64 },
    Workspace { axis: Axis, position: f64, at_us: u64 },
}

impl fmt::Display for LimitFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LimitFlag::RateLimit { axis, rate, at_us } => {
                write!(f, "rate-limit: {axis} at {rate:.0} steps/s (t = {at_us} us)")
            }
            LimitFlag::Workspace {
                axis,
                position,
                at_us,
            } => write!(f, "workspace: {axis} at {position} mm (t = {at_us} us)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitReport {
    pub peak_rate_x: f64,
    pub peak_rate_y: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub pen_toggles: usize,
    pub flags: Vec<LimitFlag>,
}

impl LimitReport {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

impl fmt::Display for LimitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "peak step rate x: {:.1} steps/s", self.peak_rate_x)?;
        writeln!(f, "peak step rate y: {:.1} steps/s", self.peak_rate_y)?;
        writeln!(f, "x range: {:.4} .. {:.4} mm", self.x_range.0, self.x_range.1)?;
        writeln!(f, "y range: {:.4} .. {:.4} mm", self.y_range.0, self.y_range.1)?;
        writeln!(f, "pen toggles: {}", self.pen_toggles)?;
        if self.flags.is_empty() {
            writeln!(f, "flags: none")
        } else {
            for flag in &self.flags {
                writeln!(f, "flag: {flag}")?;
            }
            Ok(())
        }
    }
}

/// Per-axis step groups: (time, count) for steps issued at the same instant.
fn step_groups(prog: &CommandProgram) -> [Vec<(u64, usize)>; 2] {
    let mut groups: [Vec<(u64, usize)>; 2] = [Vec::new(), Vec::new()];
    let mut now = 0u64;
    for c in &prog.commands {
        let axis = match c {
            MotionCommand::Dwell(us) => {
                now += us;
                continue;
            }
            MotionCommand::StepX(_) => 0,
            MotionCommand::StepY(_) => 1,
            MotionCommand::Pen(_) => continue,
        };
        match groups[axis].last_mut() {
            Some((t, n)) if *t == now => *n += 1,
            _ => groups[axis].push((now, 1)),
        }
    }
    groups
}

/// Audits step rates, excursions and pen activity of a program.
///
/// The rate of a group of same-instant steps on one axis is its size divided
/// by the time until that axis steps again. The last group uses the gap since
/// the previous one; a lone group uses the time left in the program.
pub fn check_limits(prog: &CommandProgram, cfg: &DeviceConfig) -> LimitReport {
    let end = dwell_total_us(&prog.commands);
    let groups = step_groups(prog);
    let mut flags = Vec::new();
    let mut peaks = [0.0f64; 2];
    for (axis_idx, g) in groups.iter().enumerate() {
        let axis = if axis_idx == 0 { Axis::X } else { Axis::Y };
        for (k, &(t, n)) in g.iter().enumerate() {
            let window = match (g.get(k + 1), k.checked_sub(1)) {
                (Some(next), _) => next.0 - t,
                (None, Some(prev)) => t - g[prev].0,
                (None, None) => end.saturating_sub(t),
            };
            let rate = if window == 0 {
                f64::INFINITY
            } else {
                n as f64 * 1e6 / window as f64
            };
            if rate > peaks[axis_idx] {
                peaks[axis_idx] = rate;
            }
            if rate > cfg.max_step_rate {
                flags.push(LimitFlag::RateLimit { axis, rate, at_us: t });
            }
        }
    }

    let res = cfg.step_resolution;
    let (mut x, mut y) = prog.origin;
    let mut x_range = (x, x);
    let mut y_range = (y, y);
    let mut now = 0u64;
    let mut toggles = 0usize;
    let mut pen: Option<Pen> = None;
    let mut outside = [false; 2];
    let eps = 1e-9;
    let mut check = |axis: Axis, pos: f64, now: u64, flags: &mut Vec<LimitFlag>| {
        let idx = if axis == Axis::X { 0 } else { 1 };
        let out = pos < -eps || pos > cfg.workspace(axis) + eps;
        if out && !outside[idx] {
            flags.push(LimitFlag::Workspace {
                axis,
                position: pos,
                at_us: now,
            });
        }
        outside[idx] = out;
    };
    check(Axis::X, x, 0, &mut flags);
    check(Axis::Y, y, 0, &mut flags);
    for c in &prog.commands {
        match c {
            MotionCommand::Dwell(us) => now += us,
            MotionCommand::StepX(d) => {
                x += *d as f64 * res;
                x_range = (x_range.0.min(x), x_range.1.max(x));
                check(Axis::X, x, now, &mut flags);
            }
            MotionCommand::StepY(d) => {
                y += *d as f64 * res;
                y_range = (y_range.0.min(y), y_range.1.max(y));
                check(Axis::Y, y, now, &mut flags);
            }
            MotionCommand::Pen(p) => {
                if pen.is_some_and(|old| old != *p) {
                    toggles += 1;
                }
                pen = Some(*p);
            }
        }
    }
    LimitReport {
        peak_rate_x: peaks[0],
        peak_rate_y: peaks[1],
        x_range,
        y_range,
        pen_toggles: toggles,
        flags,
    }
}

/// Total dwell time in milliseconds.
pub fn program_duration(prog: &CommandProgram) -> f64 {
    dwell_total_us(&prog.commands) as f64 / 1000.0
}

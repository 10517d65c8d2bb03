use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use glyphmotion::experiment::{
    confusion_matrix, run_batch, run_session, write_log, Mode, ParticipantKind, SessionConfig,
};
use glyphmotion::fixture::fixture_font;
use glyphmotion::font::{parse_samples, samples_to_json};
use glyphmotion::motion::{check_limits, compile, CommandProgram, DeviceConfig};
use glyphmotion::participant::ParticipantRegistry;
use glyphmotion::preprocess::{prepare_presentation, SmoothingSpec, DEFAULT_DT_MS, DEFAULT_WINDOW};
use glyphmotion::recognizer::NoiseSpec;
use glyphmotion::sim::{execute, tracking_error};
use glyphmotion::stats::{
    joint_angular_velocity, letters_per_minute, paired_t_test, parse_column, render_table,
    two_way_anova, AnovaTable,
};
use glyphmotion::{parse_font, serialize_font, GlyphTrajectory, Letter, PresentationCondition, StrokeFont};
use glyphmotion_service::SessionStore;

#[derive(Parser)]
#[command(name = "glyphmotion", version, about = "Letter trajectories to stepper motion, and identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Font files.
    #[command(subcommand)]
    Font(FontCmd),
    /// Single-glyph preparation and compilation.
    #[command(subcommand)]
    Glyph(GlyphCmd),
    /// Device simulation.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Identification sessions.
    #[command(subcommand)]
    Exp(ExpCmd),
    /// Statistics on accuracy data.
    #[command(subcommand)]
    Stats(StatsCmd),
}

#[derive(Subcommand)]
enum FontCmd {
    /// Parse and validate a font file.
    Validate { file: PathBuf },
    /// Write the built-in fixture font.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct DeviceArgs {
    /// Workspace side length (mm).
    #[arg(long, default_value_t = 50.0)]
    workspace: f64,
    /// Millimeters per step.
    #[arg(long, default_value_t = 0.01)]
    resolution: f64,
    /// Steps per second per axis.
    #[arg(long, default_value_t = 20_000.0)]
    max_rate: f64,
    /// Solenoid actuation delay (ms).
    #[arg(long, default_value_t = 0.0)]
    solenoid_delay: f64,
}

impl DeviceArgs {
    fn config(&self) -> DeviceConfig {
        DeviceConfig {
            workspace_x: self.workspace,
            workspace_y: self.workspace,
            step_resolution: self.resolution,
            max_step_rate: self.max_rate,
            solenoid_actuation_delay_ms: self.solenoid_delay,
            ..DeviceConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum GlyphCmd {
    /// Condition one glyph of a font and write its sample array.
    Prepare {
        /// Font file; the built-in fixture font when omitted.
        file: Option<PathBuf>,
        #[arg(long)]
        letter: char,
        #[arg(long, default_value_t = 14.0)]
        height: f64,
        #[arg(long, default_value_t = 1000.0)]
        duration: f64,
        #[arg(long, default_value_t = DEFAULT_DT_MS)]
        dt: f64,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile a sample array (or one glyph of a font) into a command program.
    Compile {
        file: PathBuf,
        /// Required when the input is a font file.
        #[arg(long)]
        letter: Option<char>,
        #[command(flatten)]
        device: DeviceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SimCmd {
    /// Execute a command program on the ideal stage.
    Run {
        program: PathBuf,
        /// Print the limit audit, and tracking error when a reference is given.
        #[arg(long)]
        report: bool,
        /// Sample array the program was compiled from.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Write the 1 ms trace as a sample array.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[command(flatten)]
        device: DeviceArgs,
    },
}

#[derive(Args, Clone)]
struct ParticipantArgs {
    /// `synthetic` (DTW matcher) or any registered strategy name.
    #[arg(long, default_value = "synthetic")]
    participant: String,
    /// Spatial noise added to each presentation (mm).
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    repeats: u32,
    /// Font file; the built-in fixture font when omitted.
    #[arg(long)]
    font: Option<PathBuf>,
}

impl ParticipantArgs {
    fn base_config(&self, registry: &ParticipantRegistry) -> Result<SessionConfig> {
        let strategy = match self.participant.as_str() {
            "synthetic" => "dtw",
            other => other,
        };
        if !registry.contains(strategy) {
            let names: Vec<&str> = registry.names().collect();
            bail!(
                "unknown participant {:?}; expected synthetic or one of {}",
                self.participant,
                names.join(", ")
            );
        }
        Ok(SessionConfig {
            repeats_per_letter: self.repeats,
            seed: self.seed,
            participant: ParticipantKind::Synthetic {
                strategy: strategy.to_string(),
                noise: NoiseSpec {
                    sigma: self.sigma,
                    seed: self.seed,
                },
            },
            ..SessionConfig::default()
        })
    }
}

#[derive(Subcommand)]
enum ExpCmd {
    /// Run one synthetic session.
    Run {
        #[command(flatten)]
        who: ParticipantArgs,
        #[arg(long, default_value_t = 14.0)]
        height: f64,
        #[arg(long, default_value_t = 1000.0)]
        duration: f64,
        /// Training mode with feedback.
        #[arg(long)]
        train: bool,
        /// Training trial cap.
        #[arg(long, default_value_t = 60)]
        train_trials: usize,
        /// Write the session log (JSON lines).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the confusion matrix (CSV).
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Run many synthetic participants over a set of conditions.
    Batch {
        #[command(flatten)]
        who: ParticipantArgs,
        #[arg(long, default_value_t = 20)]
        participants: usize,
        /// `all`, or a comma list like `14x1000,7x500`.
        #[arg(long, default_value = "all")]
        conditions: String,
        /// Write per-participant accuracies as `height,duration,accuracy` CSV.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Serve interactive sessions over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "GLYPHMOTION_DATA_DIR")]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        font: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Paired t-test between two columns of percents.
    Ttest {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Two-way ANOVA from a `height,duration,accuracy` CSV.
    Anova {
        table: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Joint angular speed for a tip speed and lever length.
    Elbow {
        /// Tip speed (mm/s).
        #[arg(long)]
        speed: f64,
        /// Lever length (mm).
        #[arg(long, default_value_t = 350.0)]
        arm: f64,
    },
    /// Letters per minute at a given duration per letter.
    Lpm {
        #[arg(long)]
        duration: f64,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_font(path: Option<&Path>) -> Result<StrokeFont> {
    match path {
        Some(p) => Ok(parse_font(&read(p)?).with_context(|| p.display().to_string())?),
        None => Ok(fixture_font()),
    }
}

fn letter(c: char) -> Result<Letter> {
    Letter::new(c).ok_or_else(|| anyhow!("--letter must be a lowercase a-z letter, got {c:?}"))
}

/// A sample array, or one glyph picked out of a font.
fn load_glyph(path: &Path, pick: Option<char>) -> Result<GlyphTrajectory> {
    let bytes = read(path)?;
    let glyph = match parse_samples(&bytes) {
        Ok(samples) => GlyphTrajectory::new(letter(pick.unwrap_or('a'))?, samples),
        Err(array_err) => match parse_font(&bytes) {
            Ok(font) => {
                let c = pick.ok_or_else(|| anyhow!("{} is a font file; pass --letter", path.display()))?;
                font.glyph(letter(c)?).clone()
            }
            Err(_) => return Err(array_err).with_context(|| path.display().to_string()),
        },
    };
    let diagnostics = glyph.validate();
    if !diagnostics.is_empty() {
        let text: Vec<String> = diagnostics.iter().map(|d| d.to_string()).collect();
        bail!("invalid glyph: {}", text.join(", "));
    }
    Ok(glyph)
}

fn parse_conditions(spec: &str) -> Result<Vec<PresentationCondition>> {
    if spec == "all" {
        return Ok(PresentationCondition::ALL.to_vec());
    }
    spec.split(',')
        .map(|item| {
            let (h, d) = item
                .trim()
                .split_once(['x', '/'])
                .ok_or_else(|| anyhow!("condition {item:?} must look like 14x1000"))?;
            let h: f64 = h.trim_end_matches("mm").parse().with_context(|| format!("height in {item:?}"))?;
            let d: f64 = d.trim_end_matches("ms").parse().with_context(|| format!("duration in {item:?}"))?;
            Ok(PresentationCondition::new(h, d)?)
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Font(FontCmd::Validate { file }) => {
            let font = parse_font(&read(&file)?)?;
            println!(
                "ok: 26 glyphs, mean height {:.4} mm, provenance {:?}",
                font.mean_height(),
                font.provenance
            );
        }
        Command::Font(FontCmd::Export { out }) => {
            let text = String::from_utf8(serialize_font(&fixture_font()))?;
            emit(out.as_deref(), &text)?;
        }
        Command::Glyph(GlyphCmd::Prepare {
            file,
            letter: c,
            height,
            duration,
            dt,
            window,
            out,
        }) => {
            let font = load_font(file.as_deref())?;
            let cond = PresentationCondition::new(height, duration)?;
            let prepared = prepare_presentation(&font, cond, SmoothingSpec::new(window)?, dt)?;
            let mut text = samples_to_json(&prepared.glyph(letter(c)?).samples);
            text.push('\n');
            emit(out.as_deref(), &text)?;
        }
        Command::Glyph(GlyphCmd::Compile {
            file,
            letter,
            device,
            out,
        }) => {
            let glyph = load_glyph(&file, letter)?;
            let prog = compile(&glyph, &device.config())?;
            emit(out.as_deref(), &prog.to_text())?;
        }
        Command::Sim(SimCmd::Run {
            program,
            report,
            reference,
            trace_out,
            device,
        }) => {
            let cfg = device.config();
            let prog = CommandProgram::parse_text(&read_text(&program)?)
                .with_context(|| program.display().to_string())?;
            let audit = check_limits(&prog, &cfg);
            if report {
                print!("{audit}");
            }
            let trace = execute(&prog, &cfg)?;
            println!("duration: {} us", trace.duration_us);
            println!(
                "final position: {:.4} {:.4} mm",
                trace.final_position.0, trace.final_position.1
            );
            if let Some(r) = reference {
                let g = load_glyph(&r, None)?;
                let err = tracking_error(&g, &trace)?;
                println!("tracking error max: {:.6} mm", err.max);
                println!("tracking error rms: {:.6} mm", err.rms);
            }
            if let Some(p) = trace_out {
                emit(Some(&p), &(trace.export_json() + "\n"))?;
            }
        }
        Command::Exp(ExpCmd::Run {
            who,
            height,
            duration,
            train,
            train_trials,
            log,
            matrix,
        }) => {
            let registry = ParticipantRegistry::default();
            let font = load_font(who.font.as_deref())?;
            let cfg = SessionConfig {
                condition: PresentationCondition::new(height, duration)?,
                mode: if train { Mode::Training } else { Mode::Test },
                training_trial_limit: Some(train_trials),
                ..who.base_config(&registry)?
            };
            let records = run_session(&cfg, &font, &registry)?;
            let correct = records.iter().filter(|r| r.correct).count();
            let m = confusion_matrix(&records)?;
            println!(
                "condition {} mode {} participant {} sigma {} seed {}",
                cfg.condition.label(),
                cfg.mode.as_str(),
                who.participant,
                who.sigma,
                who.seed
            );
            match m.accuracy() {
                Ok(acc) => println!("trials {} correct {} accuracy {:.2}", records.len(), correct, acc),
                Err(_) => println!("trials 0"),
            }
            for (d, r, n) in m.most_confused().into_iter().take(5) {
                println!("confused {d} -> {r}: {n}");
            }
            if let Some(p) = log {
                emit(Some(&p), &write_log(&records))?;
            }
            if let Some(p) = matrix {
                emit(Some(&p), &m.to_csv())?;
            }
        }
        Command::Exp(ExpCmd::Batch {
            who,
            participants,
            conditions,
            table,
        }) => {
            let registry = ParticipantRegistry::default();
            let font = load_font(who.font.as_deref())?;
            let conditions = parse_conditions(&conditions)?;
            let base = who.base_config(&registry)?;
            let result = run_batch(&base, &font, &registry, participants, &conditions)?;
            let mut rows = String::from("height,duration,accuracy\n");
            for c in &result.conditions {
                println!(
                    "# condition {} participants {} accuracy {:.2}",
                    c.condition.label(),
                    c.sessions.len(),
                    c.accuracy
                );
                print!("{}", c.pooled.to_csv());
                for acc in &c.participant_accuracy {
                    rows.push_str(&format!(
                        "{},{},{}\n",
                        c.condition.target_mean_height, c.condition.target_duration, acc
                    ));
                }
            }
            if let Some(p) = table {
                emit(Some(&p), &rows)?;
            }
        }
        Command::Exp(ExpCmd::Serve {
            port,
            host,
            data_dir,
            font,
        }) => {
            let font = load_font(font.as_deref())?;
            let store = match &data_dir {
                Some(dir) => SessionStore::open(font, dir)?,
                None => {
                    eprintln!("no --data-dir or GLYPHMOTION_DATA_DIR; sessions are kept in memory only");
                    SessionStore::in_memory(font)
                }
            };
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("bad address {host}:{port}"))?;
            println!("listening on http://{addr}");
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(glyphmotion_service::serve(addr, Arc::new(store)))?;
        }
        Command::Stats(StatsCmd::Ttest { a, b, json }) => {
            let a = parse_column(&read_text(&a)?)?;
            let b = parse_column(&read_text(&b)?)?;
            let r = paired_t_test(&a, &b)?;
            if json {
                println!("{}", serde_json::to_string(&r)?);
            } else {
                print!("{}", render_table(&[r]));
            }
        }
        Command::Stats(StatsCmd::Anova { table, json }) => {
            let t = AnovaTable::from_csv(&read_text(&table)?)?;
            let r = two_way_anova(&t)?;
            if json {
                println!("{}", r.to_json());
            } else {
                print!("{}", r.to_table());
            }
        }
        Command::Stats(StatsCmd::Elbow { speed, arm }) => {
            println!("{:.4} deg/s", joint_angular_velocity(speed, arm)?);
        }
        Command::Stats(StatsCmd::Lpm { duration }) => {
            println!("{} letters/min", letters_per_minute(duration)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

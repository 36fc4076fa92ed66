//! The `cbs-rv` command line: argument parsing, commands and reports.
//!
//! Exit codes are stable: 0 success, 1 usage or I/O error, 2 invalid input
//! (model, monitor or trace), 3 verification failure.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::bisim::{explore, weak_bisimilar, BisimError, BisimResult, ExplicitLts};
use crate::model::{builtin_readers_writers, builtin_task, from_json, parse_model, render, to_json, CompositeSystem};
use crate::monitor::{builtin_readers_writers_monitor, builtin_task_monitor, parse_monitor, MonitorSpec, Verdict};
use crate::semantics::{
    from_partial, replay, run_global, run_partial_concurrent, to_partial, BusyDelay, EngineConfig, SchedulerPolicy,
};
use crate::trace_io::{read_trace, trace_to_json, witness_to_json, write_trace, write_witness, TraceFile};
use crate::transform::{strip_transform, transform_all, transform_for_monitor, RgtVariant};
use crate::witness::{show_witness, witness, WitnessItem};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

fn invalid(e: impl fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "cbs-rv",
    version,
    about = "Run and monitor component-based systems under partial-state semantics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a system and record its trace.
    Run(RunArgs),
    /// Reconstruct the global witness of a recorded partial-state trace.
    Witness(WitnessArgs),
    /// Emit the transformed system that reconstructs global states itself.
    Transform(TransformArgs),
    /// Check weak bisimilarity between the stages of a system.
    VerifyEquivalence(VerifyArgs),
    /// Parse and validate a model, optionally converting its format.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Global,
    Partial,
    Monitored,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Partial,
    Transformed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Model file (text or JSON), or `builtin:task` / `builtin:readers-writers`.
    pub model: String,
    #[arg(long, value_enum, default_value = "partial")]
    pub mode: Mode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of interactions to execute.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Use real worker threads instead of seeded virtual time.
    #[arg(long)]
    pub real_time: bool,
    /// Worker threads in real-time mode.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Busy time of each internal computation in real-time mode, in microseconds.
    #[arg(long, default_value_t = 0)]
    pub busy_delay_us: u64,
    /// Monitor spec file (or `builtin:task` / `builtin:readers-writers`).
    #[arg(long)]
    pub monitor: Option<String>,
    /// Complete pending computations after the last interaction (default).
    #[arg(long, overrides_with = "no_drain")]
    pub drain: bool,
    #[arg(long, overrides_with = "drain")]
    pub no_drain: bool,
    #[arg(long, default_value = "default", value_parser = parse_variant)]
    pub rgt_variant: RgtVariant,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Write the trace here.
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
    /// Trace file format.
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct WitnessArgs {
    pub trace: PathBuf,
    /// Check that the trace is a run of this model before reconstructing.
    #[arg(long)]
    pub model: Option<String>,
    /// Monitor the trace was recorded with, if any.
    #[arg(long, requires = "model")]
    pub monitor: Option<String>,
    #[arg(long)]
    pub json: bool,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    pub model: String,
    /// Reconstruct only what this monitor reads and attach it.
    #[arg(long)]
    pub monitor: Option<String>,
    #[arg(long, default_value = "default", value_parser = parse_variant)]
    pub rgt_variant: RgtVariant,
    /// Emit JSON instead of the text format.
    #[arg(long)]
    pub json: bool,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub model: String,
    /// `partial`: global vs split system, completions hidden.
    /// `transformed`: split vs transformed system, deliveries hidden.
    /// Completions stay visible there.
    #[arg(long, value_enum, default_value = "partial")]
    pub stage: Stage,
    /// Maximum number of states explored per system.
    #[arg(long, default_value_t = 5_000_000)]
    pub bound: usize,
    #[arg(long, default_value = "default", value_parser = parse_variant)]
    pub rgt_variant: RgtVariant,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub model: String,
    /// Render the validated model in this format.
    #[arg(long, value_enum)]
    pub emit: Option<Format>,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<RgtVariant, String> {
    s.parse()
}

/// Summary of one `run`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub system: String,
    pub mode: Mode,
    pub seed: u64,
    pub real_time: bool,
    pub trace_path: Option<PathBuf>,
    /// Interactions executed.
    pub gamma: usize,
    /// Completions of internal computations.
    pub beta: usize,
    /// Global states delivered to the monitor.
    pub delivered: usize,
    /// Executions added by the partial-state split and the monitor.
    pub extra: usize,
    pub verdicts: BTreeMap<Verdict, usize>,
    pub final_verdict: Option<Verdict>,
    pub deadlock: bool,
    pub wall_time_ms: f64,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Global => "global",
            Mode::Partial => "partial",
            Mode::Monitored => "monitored",
        };
        let time = if self.real_time { "real time" } else { "virtual time" };
        writeln!(f, "system    {} ({mode}, {time}, seed {})", self.system, self.seed)?;
        writeln!(f, "gamma     {}", self.gamma)?;
        writeln!(f, "beta      {}", self.beta)?;
        writeln!(f, "delivered {}", self.delivered)?;
        writeln!(f, "extra     {}", self.extra)?;
        if !self.verdicts.is_empty() {
            let v: Vec<String> = self
                .verdicts
                .iter()
                .map(|(v, n)| format!("{}={n}", v.symbol()))
                .collect();
            writeln!(f, "verdicts  {}", v.join(" "))?;
        }
        if let Some(v) = self.final_verdict {
            writeln!(f, "final     {}", v.symbol())?;
        }
        if self.deadlock {
            writeln!(f, "deadlock  yes")?;
        }
        if let Some(p) = &self.trace_path {
            writeln!(f, "trace     {}", p.display())?;
        }
        write!(f, "wall time {:.3} ms", self.wall_time_ms)
    }
}

/// Reads a model file, or one of the bundled `builtin:` models.
pub fn load_model(spec: &str) -> Result<CompositeSystem, CliError> {
    match spec {
        "builtin:task" => return Ok(builtin_task()),
        "builtin:readers-writers" => return Ok(builtin_readers_writers()),
        _ => {}
    }
    let text = read_file(Path::new(spec))?;
    if text.trim_start().starts_with('{') {
        from_json(&text).map_err(invalid)
    } else {
        parse_model(&text).map_err(invalid)
    }
}

pub fn load_monitor(spec: &str) -> Result<MonitorSpec, CliError> {
    match spec {
        "builtin:task" => Ok(builtin_task_monitor()),
        "builtin:readers-writers" => Ok(builtin_readers_writers_monitor()),
        _ => parse_monitor(&read_file(Path::new(spec))?).map_err(invalid),
    }
}

fn read_file(p: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))
        }
        _ => {
            print!("{text}");
            Ok(())
        }
    }
}

/// The split form of any stage of a system, without RGT or monitor.
pub fn partial_form(sys: &CompositeSystem) -> CompositeSystem {
    to_partial(&strip_transform(sys))
}

/// The global form of any stage of a system.
pub fn global_form(sys: &CompositeSystem) -> CompositeSystem {
    from_partial(sys)
}

/// The system `run` executes in `mode`, with the monitor in use.
pub fn system_for_mode(
    sys: &CompositeSystem,
    mode: Mode,
    monitor: Option<&MonitorSpec>,
    variant: RgtVariant,
) -> Result<CompositeSystem, CliError> {
    match mode {
        Mode::Global => Ok(global_form(sys)),
        Mode::Partial => Ok(partial_form(sys)),
        Mode::Monitored => {
            if monitor.is_none() && sys.rgt.is_some() && sys.monitor.is_some() {
                return Ok(sys.clone());
            }
            let spec = monitor.or(sys.monitor.as_ref()).ok_or_else(|| {
                CliError::Usage("monitored mode needs --monitor or a monitor block in the model".into())
            })?;
            transform_for_monitor(&partial_form(sys), spec, variant).map_err(invalid)
        }
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<(RunReport, TraceFile), CliError> {
    let model = load_model(&args.model)?;
    let monitor = args.monitor.as_deref().map(load_monitor).transpose()?;
    if args.monitor.is_some() && args.mode != Mode::Monitored {
        return Err(CliError::Usage("--monitor needs --mode monitored".into()));
    }
    if args.real_time && args.mode == Mode::Global {
        return Err(CliError::Usage(
            "--real-time applies to partial and monitored modes".into(),
        ));
    }
    if args.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let sys = system_for_mode(&model, args.mode, monitor.as_ref(), args.rgt_variant)?;
    let cfg = EngineConfig {
        drain: !args.no_drain,
        real_time: args.real_time,
        threads: args.threads,
        busy_delay: match args.busy_delay_us {
            0 => BusyDelay::Zero,
            us => BusyDelay::Fixed(Duration::from_micros(us)),
        },
        ..EngineConfig::seeded(args.seed, args.steps)
    };
    let (mut rep, file) = execute_run(&sys, args.mode, &cfg)?;
    if let Some(p) = &args.output {
        let text = match args.format {
            Format::Text => write_trace(&file),
            Format::Json => trace_to_json(&file) + "\n",
        };
        write_output(Some(p), &text)?;
        rep.trace_path = Some(p.clone()).filter(|p| p != Path::new("-"));
    }
    Ok((rep, file))
}

/// Runs a system already in the form `mode` expects (see
/// [`system_for_mode`]).
pub fn execute_run(sys: &CompositeSystem, mode: Mode, cfg: &EngineConfig) -> Result<(RunReport, TraceFile), CliError> {
    let seed = match cfg.policy {
        SchedulerPolicy::SeededRandom(s) => s,
        _ => 0,
    };
    log::info!("running {} in {mode:?} mode, seed {seed}", sys.name);
    let start = Instant::now();
    let out = match mode {
        Mode::Global => run_global(sys, cfg),
        Mode::Partial | Mode::Monitored => run_partial_concurrent(sys, cfg),
    }
    .map_err(invalid)?;
    let wall = start.elapsed();
    let mut verdicts = BTreeMap::new();
    for v in out.verdicts() {
        *verdicts.entry(v).or_insert(0) += 1;
    }
    let rep = RunReport {
        system: sys.name.clone(),
        mode,
        seed,
        real_time: cfg.real_time,
        trace_path: None,
        gamma: out.stats.gamma,
        beta: out.stats.beta,
        delivered: out.stats.delivered,
        extra: out.stats.extra(),
        final_verdict: out.verdicts().last().copied(),
        verdicts,
        deadlock: out.deadlock,
        wall_time_ms: wall.as_secs_f64() * 1e3,
    };
    Ok((rep, TraceFile::from_outcome(sys, &out)))
}

/// Witness of a trace file. With a model, the trace is first replayed in
/// whichever stage of the model matches its layout.
pub fn cmd_witness(
    trace: &TraceFile,
    model: Option<&CompositeSystem>,
    monitor: Option<&MonitorSpec>,
) -> Result<Vec<WitnessItem>, CliError> {
    if let Some(sys) = model {
        let mut candidates = vec![sys.clone(), partial_form(sys), global_form(sys)];
        if let Some(m) = monitor.or(sys.monitor.as_ref()) {
            candidates.push(system_for_mode(sys, Mode::Monitored, Some(m), RgtVariant::Default)?);
        }
        let labels: Vec<_> = trace.trace.labels().cloned().collect();
        let mut err = "the trace's components do not match the model".to_string();
        let mut ok = false;
        for stage in candidates.iter().filter(|c| c.layout() == trace.layout) {
            if stage.initial_state() != trace.trace.initial {
                err = "initial state differs from the model's".into();
                continue;
            }
            match replay(stage, &labels) {
                Err(e) => err = e.to_string(),
                Ok(r) => match (0..labels.len()).find(|&k| r.steps[k].1 != trace.trace.steps[k].1) {
                    Some(k) => err = format!("state after step {} differs", k + 1),
                    None => {
                        ok = true;
                        break;
                    }
                },
            }
        }
        if !ok {
            return Err(invalid(format!("replay failed: {err}")));
        }
    }
    Ok(witness(&trace.trace))
}

/// Transformed model text.
pub fn cmd_transform(
    sys: &CompositeSystem,
    monitor: Option<&MonitorSpec>,
    variant: RgtVariant,
) -> Result<CompositeSystem, CliError> {
    let p = partial_form(sys);
    match monitor {
        Some(m) => transform_for_monitor(&p, m, variant),
        None => transform_all(&p, variant),
    }
    .map_err(invalid)
}

#[derive(Debug, Serialize)]
pub struct EquivalenceReport {
    pub stage: &'static str,
    pub equivalent: bool,
    pub left_states: usize,
    pub right_states: usize,
    pub blocks: usize,
    pub counterexample: Option<Vec<String>>,
    pub counterexample_kind: Option<String>,
}

/// The two systems compared at `stage`, with their hidden labels applied.
pub fn equivalence_pair(
    sys: &CompositeSystem,
    stage: Stage,
    variant: RgtVariant,
    bound: usize,
) -> Result<(ExplicitLts, ExplicitLts), CliError> {
    let bounded = |e: BisimError| match e {
        e @ BisimError::BoundExceeded { .. } => CliError::Verification(format!("inconclusive: {e}")),
        e => invalid(e),
    };
    match stage {
        Stage::Partial => {
            let g = explore(&global_form(sys), bound).map_err(bounded)?;
            let mut p = explore(&partial_form(sys), bound).map_err(bounded)?;
            p.hide_betas();
            Ok((g, p))
        }
        Stage::Transformed => {
            let r = match &sys.rgt {
                Some(_) => sys.clone(),
                None => transform_all(&partial_form(sys), variant).map_err(invalid)?,
            };
            let p = explore(&partial_form(sys), bound).map_err(bounded)?;
            let mut r = explore(&r, bound).map_err(bounded)?;
            r.hide_deliveries();
            Ok((p, r))
        }
    }
}

/// Builds both stages, hides the unobservable labels and compares them.
pub fn verify_system(
    sys: &CompositeSystem,
    stage: Stage,
    variant: RgtVariant,
    bound: usize,
) -> Result<(EquivalenceReport, BisimResult), CliError> {
    let (l, r) = equivalence_pair(sys, stage, variant, bound)?;
    log::info!("comparing {} and {} states", l.num_states(), r.num_states());
    let res = weak_bisimilar(&l, &r);
    let rep = EquivalenceReport {
        stage: match stage {
            Stage::Partial => "partial",
            Stage::Transformed => "transformed",
        },
        equivalent: res.equivalent,
        left_states: l.num_states(),
        right_states: r.num_states(),
        blocks: res.blocks,
        counterexample: res.counterexample.as_ref().map(|c| c.trace.clone()),
        counterexample_kind: res.counterexample.as_ref().map(|c| format!("{:?}", c.kind)),
    };
    Ok((rep, res))
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<(EquivalenceReport, BisimResult), CliError> {
    verify_system(&load_model(&args.model)?, args.stage, args.rgt_variant, args.bound)
}

fn to_json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

/// Runs one parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let (rep, _) = cmd_run(&args)?;
            // With `-o -` the trace already went to stdout.
            let text = if args.json {
                to_json_line(&rep)
            } else {
                format!("{rep}\n")
            };
            if args.output.as_deref() == Some(Path::new("-")) {
                eprint!("{text}");
            } else {
                print!("{text}");
            }
            Ok(())
        }
        Command::Witness(args) => {
            let t = read_trace(&read_file(&args.trace)?).map_err(invalid)?;
            let model = args.model.as_deref().map(load_model).transpose()?;
            let monitor = args.monitor.as_deref().map(load_monitor).transpose()?;
            let w = cmd_witness(&t, model.as_ref(), monitor.as_ref())?;
            log::info!("witness: {}", show_witness(&w));
            let text = if args.json {
                to_json_line(&witness_to_json(&t.layout, &w))
            } else {
                write_witness(&t.layout, &w)
            };
            write_output(args.output.as_deref(), &text)
        }
        Command::Transform(args) => {
            let sys = load_model(&args.model)?;
            let monitor = args.monitor.as_deref().map(load_monitor).transpose()?;
            let r = cmd_transform(&sys, monitor.as_ref(), args.rgt_variant)?;
            let text = if args.json { to_json(&r) + "\n" } else { render(&r) };
            write_output(args.output.as_deref(), &text)
        }
        Command::VerifyEquivalence(args) => {
            let (rep, res) = cmd_verify(&args)?;
            if args.json {
                print!("{}", to_json_line(&rep));
            } else if rep.equivalent {
                println!(
                    "EQUIVALENT ({} vs {} states, {} blocks)",
                    rep.left_states, rep.right_states, rep.blocks
                );
            } else {
                println!("NOT EQUIVALENT");
                if let Some(c) = &res.counterexample {
                    println!("counterexample: {c}");
                }
            }
            if rep.equivalent {
                Ok(())
            } else {
                Err(CliError::Verification("systems are not weakly bisimilar".into()))
            }
        }
        Command::Check(args) => {
            let sys = load_model(&args.model)?;
            match args.emit {
                Some(Format::Text) => write_output(args.output.as_deref(), &render(&sys)),
                Some(Format::Json) => write_output(args.output.as_deref(), &(to_json(&sys) + "\n")),
                None => {
                    println!(
                        "{}: {} components, {} interactions",
                        sys.name,
                        sys.components.len(),
                        sys.interactions.len()
                    );
                    Ok(())
                }
            }
        }
    }
}

/// Entry point of the binary: parses `args`, runs, maps errors to exit codes.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

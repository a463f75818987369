//! `statefarm` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use statefarm::perfmodel::{self, CostParams};
use statefarm::workload::{calibrate, physical_cores, DEFAULT_SEED};
use statefarm::PatternKind;

use crate::experiment::{self, check_against_oracle, oracle_cell, run_cell, Cell, ExperimentError};
use crate::record::{write_csv, CsvError};
use crate::spec::{ExperimentSpec, SpecError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Environment variable consulted when neither `--seed` nor the spec file
/// sets a seed.
pub const SEED_ENV: &str = "STATEFARM_SEED";

#[derive(Debug, Parser)]
#[command(name = "statefarm", version, about = "Stateful task-farm experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sweep described by a spec file and print CSV
    Run {
        spec: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Print model values for the given timings
    Model(Flags),
    /// Calibrate the busy-wait loop and report its accuracy
    Calibrate,
    /// Check farm results against the sequential oracle
    Verify(Flags),
}

#[derive(Debug, Args, Default)]
struct Flags {
    #[arg(long)]
    pattern: Option<PatternKind>,
    /// Parallelism degrees, comma-separated
    #[arg(long, value_delimiter = ',')]
    workers: Vec<usize>,
    #[arg(long)]
    tasks: Option<usize>,
    /// Task-local time in µs
    #[arg(long)]
    tf: Option<f64>,
    /// State-access time in µs
    #[arg(long)]
    ts: Option<f64>,
    /// Flush frequencies, comma-separated
    #[arg(long, value_delimiter = ',')]
    freq: Vec<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    /// Pin workers to cores when possible
    #[arg(long)]
    pin: bool,
}

impl Flags {
    fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(p) = self.pattern {
            spec.pattern = p;
        }
        if !self.workers.is_empty() {
            spec.degrees = self.workers.clone();
        }
        if let Some(m) = self.tasks {
            spec.tasks = m;
        }
        if let Some(t) = self.tf {
            spec.t_f = t;
            spec.ratios.clear();
        }
        if let Some(t) = self.ts {
            spec.t_s = t;
        }
        if !self.freq.is_empty() {
            spec.flush_freqs = self.freq.clone();
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(r) = self.reps {
            spec.repetitions = r;
        }
        spec.pin |= self.pin;
    }
}

fn fallback_seed() -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_SEED)
}

/// Entry point; returns the process exit status.
pub fn main<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { spec, flags } => run(&spec, &flags, out, err),
        Command::Model(flags) => model(&flags, out),
        Command::Calibrate => calibrate_cmd(out),
        Command::Verify(flags) => verify(&flags, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nUsage: statefarm run <SPEC> [OPTIONS]\n\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(Failure::Experiment(e)) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
        Err(Failure::Other(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

enum Failure {
    Usage(String),
    Experiment(ExperimentError),
    Other(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Experiment(e)
    }
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<CsvError> for Failure {
    fn from(e: CsvError) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn run(path: &Path, flags: &Flags, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut spec = ExperimentSpec::parse_with_seed(&text, fallback_seed())?;
    flags.apply(&mut spec);
    spec.validate()?;
    let records = experiment::run_experiment(&spec, &mut |line| {
        let _ = writeln!(err, "{line}");
    })?;
    match &flags.out {
        Some(p) => crate::record::emit_csv(&records, p)?,
        None => write_csv(&records, &mut *out)?,
    }
    Ok(())
}

fn model(flags: &Flags, out: &mut dyn Write) -> Result<(), Failure> {
    let (Some(t_f), Some(t_s)) = (flags.tf, flags.ts) else {
        return Err(Failure::Usage("model needs --tf and --ts".into()));
    };
    if !(t_f >= 0.0 && t_s >= 0.0) {
        return Err(Failure::Usage("timings must be non-negative".into()));
    }
    writeln!(out, "bound {}", perfmodel::speedup_bound_separate(t_f, t_s))?;
    let pattern = flags.pattern.unwrap_or(PatternKind::Separate);
    let m = flags.tasks.unwrap_or(10_000) as u64;
    let freqs = if flags.freq.is_empty() { vec![1] } else { flags.freq.clone() };
    for &n_w in &flags.workers {
        let p = CostParams::new(0.0, t_f, t_s, m, n_w).map_err(|e| Failure::Usage(e.to_string()))?;
        write!(
            out,
            "n_w={n_w} predicted_speedup={} ideal_us={} min_flush_frequency={}",
            perfmodel::predicted_speedup(pattern, &p),
            perfmodel::ideal_completion(pattern, &p),
            perfmodel::min_flush_frequency(t_f, t_s, n_w),
        )?;
        if pattern == PatternKind::Accumulator {
            for &f in &freqs {
                write!(out, " bound@{f}={}", perfmodel::speedup_bound(pattern, &p, f))?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

fn calibrate_cmd(out: &mut dyn Write) -> Result<(), Failure> {
    let table = calibrate::global().map_err(|e| Failure::Experiment(e.into()))?;
    writeln!(out, "iters_per_us {:.3}", table.iters_per_us)?;
    writeln!(out, "timer_resolution_ns {}", table.timer_resolution.as_nanos())?;
    writeln!(out, "physical_cores {}", physical_cores())?;
    for target in [10.0, 100.0, 1000.0] {
        writeln!(out, "spin {target} us -> {:.2} us", table.measure(target, 101))?;
    }
    Ok(())
}

/// Untimed runs at every requested degree and frequency, each compared
/// with the oracle; all degrees must also agree with each other.
fn verify(flags: &Flags, out: &mut dyn Write) -> Result<(), Failure> {
    let patterns = match flags.pattern {
        Some(p) => vec![p],
        None => PatternKind::ALL.to_vec(),
    };
    let degrees = if flags.workers.is_empty() { vec![1, 2, 4, 8] } else { flags.workers.clone() };
    let freqs = if flags.freq.is_empty() { vec![1] } else { flags.freq.clone() };
    let tasks = flags.tasks.unwrap_or(10_000);
    let seed = flags.seed.unwrap_or_else(fallback_seed);

    let mut spec = ExperimentSpec::new(patterns[0]);
    spec.tasks = tasks;
    spec.degrees = degrees.clone();
    spec.flush_freqs = freqs.clone();
    spec.seed = seed;
    for &pattern in &patterns {
        spec.pattern = pattern;
        spec.validate()?;
        experiment::check_laws(pattern, spec.oplus, seed)?;
        let freqs: &[usize] = if pattern == PatternKind::Accumulator { &freqs } else { &[1] };
        for &freq in freqs {
            let mut states = Vec::new();
            for &n_w in &degrees {
                let cell = Cell::from_spec(&spec, (0.0, 0.0), n_w, freq).untimed();
                let run = run_cell(&cell).map_err(|e| Failure::Experiment(e.into()))?;
                let oracle = oracle_cell(&cell);
                check_against_oracle(&cell, &run, &oracle).map_err(|m| Failure::Experiment(ExperimentError::Oracle(m)))?;
                writeln!(out, "pattern={pattern} n_w={n_w} freq={freq} seed={seed} state={}", run.final_state.summary())?;
                states.push(run.final_state);
            }
            if states.windows(2).any(|w| w[0] != w[1]) {
                return Err(Failure::Experiment(ExperimentError::Oracle(format!(
                    "{pattern}: final state differs across degrees"
                ))));
            }
        }
    }
    writeln!(out, "ok")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main(std::iter::once("statefarm").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn model_prints_bound() {
        let (code, out, _) = call(&["model", "--tf", "100", "--ts", "1"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().next(), Some("bound 101"));
    }

    #[test]
    fn usage_errors() {
        assert_eq!(call(&["run"]).0, EXIT_USAGE);
        assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(call(&["model", "--tf", "x"]).0, EXIT_USAGE);
        assert_eq!(call(&["model"]).0, EXIT_USAGE);
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("verify"));
    }

    #[test]
    fn verify_small() {
        let (code, out, err) = call(&["verify", "--pattern", "serial", "--workers", "1,3", "--tasks", "300"]);
        assert_eq!(code, 0, "{err}");
        assert_eq!(out.lines().count(), 3);
    }
}

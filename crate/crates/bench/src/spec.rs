//! Experiment description files.
//!
//! One `key = value` pair per line, `#` starts a comment, lists are
//! comma-separated:
//!
//! ```text
//! pattern = accumulator
//! tasks = 10000
//! t_f = 100
//! t_s = 50
//! degrees = 1, 2, 4, 8
//! flush_freqs = 1, 2, 4
//! adaptivity = 2500:+2, 7500:-2
//! ```

use std::fmt::{self, Write as _};
use std::str::FromStr;

use statefarm::workload::{KeyDist, Oplus, DEFAULT_SEED};
use statefarm::PatternKind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("{key}: {message}")]
    Value { key: String, message: String },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
}

/// Keys of the tasks' partition index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeySpec {
    Uniform,
    Skewed(f64),
    Constant,
    TwoKey(f64),
}

impl KeySpec {
    pub fn dist(self, partitions: usize) -> KeyDist {
        match self {
            KeySpec::Uniform => KeyDist::Uniform(partitions),
            KeySpec::Skewed(theta) => KeyDist::Skewed { theta, n: partitions },
            KeySpec::Constant => KeyDist::Constant,
            KeySpec::TwoKey(hot_fraction) => KeyDist::TwoKey { hot_fraction, n: partitions },
        }
    }
}

impl fmt::Display for KeySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeySpec::Uniform => f.write_str("uniform"),
            KeySpec::Skewed(theta) => write!(f, "skewed:{theta}"),
            KeySpec::Constant => f.write_str("constant"),
            KeySpec::TwoKey(hot) => write!(f, "twokey:{hot}"),
        }
    }
}

impl FromStr for KeySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let number = |default: f64| -> Result<f64, String> {
            arg.map_or(Ok(default), |a| a.parse().map_err(|_| format!("bad number {a:?}")))
        };
        match name {
            "uniform" => Ok(KeySpec::Uniform),
            "constant" => Ok(KeySpec::Constant),
            "skewed" | "zipf" => Ok(KeySpec::Skewed(number(1.0)?)),
            "twokey" => {
                let hot = number(0.9)?;
                if (0.0..=1.0).contains(&hot) {
                    Ok(KeySpec::TwoKey(hot))
                } else {
                    Err(format!("hot fraction {hot} outside [0, 1]"))
                }
            }
            other => Err(format!("unknown key distribution {other:?}")),
        }
    }
}

/// A resize request fired just before the task with index `at` is fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptivityEvent {
    pub at: u64,
    /// Positive grows, negative shrinks.
    pub delta: i64,
}

impl fmt::Display for AdaptivityEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:+}", self.at, self.delta)
    }
}

impl FromStr for AdaptivityEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (at, delta) = s.split_once(':').ok_or_else(|| format!("expected `task:delta`, got {s:?}"))?;
        let at = at.trim().parse().map_err(|_| format!("bad task index {at:?}"))?;
        let delta = delta.trim().trim_start_matches('+');
        let delta = delta.parse().map_err(|_| format!("bad delta {delta:?}"))?;
        Ok(AdaptivityEvent { at, delta })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub pattern: PatternKind,
    pub tasks: usize,
    pub t_f: f64,
    pub t_s: f64,
    pub t_a: f64,
    /// `t_f/t_s` values to sweep; when empty, `t_f` is used as given.
    pub ratios: Vec<f64>,
    pub degrees: Vec<usize>,
    pub flush_freqs: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub partitions: usize,
    pub keys: KeySpec,
    pub oplus: Oplus,
    pub adaptivity: Vec<AdaptivityEvent>,
    pub queue_capacity: usize,
    pub pin: bool,
}

impl ExperimentSpec {
    pub fn new(pattern: PatternKind) -> Self {
        Self {
            pattern,
            tasks: 10_000,
            t_f: 100.0,
            t_s: 10.0,
            t_a: 0.0,
            ratios: Vec::new(),
            degrees: vec![1],
            flush_freqs: vec![1],
            repetitions: 3,
            seed: DEFAULT_SEED,
            partitions: 64,
            keys: KeySpec::Uniform,
            oplus: Oplus::Add,
            adaptivity: Vec::new(),
            queue_capacity: statefarm::FarmConfig::DEFAULT_QUEUE_CAPACITY,
            pin: false,
        }
    }

    /// `(t_f, t_s)` pairs to sweep.
    pub fn timings(&self) -> Vec<(f64, f64)> {
        if self.ratios.is_empty() {
            vec![(self.t_f, self.t_s)]
        } else {
            self.ratios.iter().map(|r| (r * self.t_s, self.t_s)).collect()
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |key: &str, message: &str| Err(SpecError::Value { key: key.into(), message: message.into() });
        if self.degrees.is_empty() {
            return bad("degrees", "needs at least one value");
        }
        if self.degrees.contains(&0) {
            return bad("degrees", "parallelism degrees start at 1");
        }
        if self.flush_freqs.is_empty() {
            return bad("flush_freqs", "needs at least one value");
        }
        if self.flush_freqs.contains(&0) {
            return bad("flush_freqs", "frequencies start at 1");
        }
        if self.repetitions == 0 {
            return bad("repetitions", "must be at least 1");
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity", "must be at least 1");
        }
        for (key, v) in [("t_f", self.t_f), ("t_s", self.t_s), ("t_a", self.t_a)] {
            if !v.is_finite() || v < 0.0 {
                return bad(key, "must be a non-negative number of microseconds");
            }
        }
        if self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return bad("ratios", "must be non-negative");
        }
        if self.pattern == PatternKind::Partitioned {
            if self.partitions == 0 {
                return bad("partitions", "must be at least 1");
            }
            if self.degrees.iter().any(|&d| d > self.partitions) {
                return bad("degrees", "a partitioned farm cannot have more workers than partitions");
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, SpecError> {
        Self::parse_with_seed(text, DEFAULT_SEED)
    }

    /// Like [`parse`](Self::parse), with `seed` used when the text has no
    /// `seed` key.
    pub fn parse_with_seed(text: &str, seed: u64) -> Result<Self, SpecError> {
        let mut pairs: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SpecError::Syntax { line: i + 1, text: raw.to_string() })?;
            let key = key.trim().to_ascii_lowercase();
            if pairs.iter().any(|(_, k, _)| *k == key) {
                return Err(SpecError::Duplicate { line: i + 1, key });
            }
            pairs.push((i + 1, key, value.trim().to_string()));
        }

        let pattern = pairs
            .iter()
            .find(|(_, k, _)| k == "pattern")
            .ok_or(SpecError::Missing("pattern"))?;
        let mut spec = Self::new(value(&pattern.1, &pattern.2)?);
        spec.seed = seed;

        for (line, key, v) in &pairs {
            match key.as_str() {
                "pattern" => {}
                "tasks" => spec.tasks = value(key, v)?,
                "t_f" => spec.t_f = value(key, v)?,
                "t_s" => spec.t_s = value(key, v)?,
                "t_a" => spec.t_a = value(key, v)?,
                "ratios" => spec.ratios = list(key, v)?,
                "degrees" => spec.degrees = list(key, v)?,
                "flush_freqs" => spec.flush_freqs = list(key, v)?,
                "repetitions" => spec.repetitions = value(key, v)?,
                "seed" => spec.seed = value(key, v)?,
                "partitions" => spec.partitions = value(key, v)?,
                "keys" => spec.keys = value(key, v)?,
                "oplus" => spec.oplus = value(key, v)?,
                "adaptivity" => spec.adaptivity = list(key, v)?,
                "queue_capacity" => spec.queue_capacity = value(key, v)?,
                "pin" => spec.pin = value(key, v)?,
                _ => return Err(SpecError::UnknownKey { line: *line, key: key.clone() }),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        fn join<T: fmt::Display>(items: &[T]) -> String {
            items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
        }
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("pattern", self.pattern.to_string());
        put("tasks", self.tasks.to_string());
        put("t_f", self.t_f.to_string());
        put("t_s", self.t_s.to_string());
        put("t_a", self.t_a.to_string());
        put("ratios", join(&self.ratios));
        put("degrees", join(&self.degrees));
        put("flush_freqs", join(&self.flush_freqs));
        put("repetitions", self.repetitions.to_string());
        put("seed", self.seed.to_string());
        put("partitions", self.partitions.to_string());
        put("keys", self.keys.to_string());
        put("oplus", self.oplus.to_string());
        put("adaptivity", join(&self.adaptivity));
        put("queue_capacity", self.queue_capacity.to_string());
        put("pin", self.pin.to_string());
        out
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, SpecError>
where
    T::Err: fmt::Display,
{
    v.trim()
        .parse()
        .map_err(|e: T::Err| SpecError::Value { key: key.to_string(), message: format!("{v:?}: {e}") })
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, SpecError>
where
    T::Err: fmt::Display,
{
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|item| value(key, item)).collect()
}

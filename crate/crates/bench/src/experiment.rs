//! Running synthetic workloads on a farm and turning the timings into
//! [`MetricsRecord`]s.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statefarm::patterns::laws::{check_monotone_update, check_oplus_laws, LawViolation};
use statefarm::perfmodel::{self, CostParams, ModelError};
use statefarm::workload::calibrate::{self, CalibrationError};
use statefarm::workload::{make_stream, shuffle_values, synthetic, Oplus, Release, SequentialOracle, StreamParams, SyntheticTask};
use statefarm::{build_farm, FarmConfig, FarmError, PatternKind, RunMetrics, StatePattern, StreamItem};

use crate::record::MetricsRecord;
use crate::spec::{AdaptivityEvent, ExperimentSpec, KeySpec, SpecError};

/// Randomized triples checked per operator before any measurement.
pub const LAW_TRIALS: usize = 10_000;
/// Tasks run untimed against the oracle before measuring.
pub const PREFIX_TASKS: usize = 2_000;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("operator {op} fails its laws: {violation}")]
    Law { op: String, violation: LawViolation },
    #[error("oracle mismatch: {0}")]
    Oracle(String),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Farm(#[from] FarmError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ExperimentError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Spec(_) => 1,
            ExperimentError::Law { .. } | ExperimentError::Oracle(_) => 3,
            _ => 2,
        }
    }
}

/// Final state of a synthetic run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FinalState {
    Scalar(i64),
    Vector(Vec<i64>),
}

impl FinalState {
    /// Short stable rendering; vectors are summarized by length and digest.
    pub fn summary(&self) -> String {
        match self {
            FinalState::Scalar(v) => v.to_string(),
            FinalState::Vector(v) => {
                let digest = v.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, x| {
                    (h ^ *x as u64).wrapping_mul(0x100_0000_01b3)
                });
                format!("v{}:{digest:016x}", v.len())
            }
        }
    }
}

/// One farm run: a single (pattern, degree, frequency, timing) point.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub pattern: PatternKind,
    pub n_w: usize,
    pub flush_freq: usize,
    pub t_f: f64,
    pub t_s: f64,
    pub t_a: f64,
    pub tasks: usize,
    pub partitions: usize,
    pub keys: KeySpec,
    pub oplus: Oplus,
    pub seed: u64,
    pub adaptivity: Vec<AdaptivityEvent>,
    pub queue_capacity: usize,
    pub pin: bool,
}

impl Cell {
    pub fn new(pattern: PatternKind, n_w: usize, tasks: usize) -> Self {
        Self {
            pattern,
            n_w,
            flush_freq: 1,
            t_f: 0.0,
            t_s: 0.0,
            t_a: 0.0,
            tasks,
            partitions: 64,
            keys: KeySpec::Uniform,
            oplus: Oplus::Add,
            seed: statefarm::workload::DEFAULT_SEED,
            adaptivity: Vec::new(),
            queue_capacity: FarmConfig::DEFAULT_QUEUE_CAPACITY,
            pin: false,
        }
    }

    pub fn from_spec(spec: &ExperimentSpec, (t_f, t_s): (f64, f64), n_w: usize, flush_freq: usize) -> Self {
        Self {
            pattern: spec.pattern,
            n_w,
            flush_freq,
            t_f,
            t_s,
            t_a: spec.t_a,
            tasks: spec.tasks,
            partitions: spec.partitions,
            keys: spec.keys,
            oplus: spec.oplus,
            seed: spec.seed,
            adaptivity: spec.adaptivity.clone(),
            queue_capacity: spec.queue_capacity,
            pin: spec.pin,
        }
    }

    pub fn timing(mut self, t_f: f64, t_s: f64) -> Self {
        self.t_f = t_f;
        self.t_s = t_s;
        self
    }

    pub fn flush(mut self, freq: usize) -> Self {
        self.flush_freq = freq;
        self
    }

    pub fn keys(mut self, keys: KeySpec, partitions: usize) -> Self {
        self.keys = keys;
        self.partitions = partitions;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn events(mut self, events: Vec<AdaptivityEvent>) -> Self {
        self.adaptivity = events;
        self
    }

    /// The same cell with busy times removed, for correctness checks.
    pub fn untimed(&self) -> Self {
        Self { t_f: 0.0, t_s: 0.0, t_a: 0.0, ..self.clone() }
    }

    /// Input stream. The successive-approximation workload gets its
    /// payloads shuffled so the running minimum improves irregularly.
    pub fn stream(&self) -> Vec<SyntheticTask> {
        let params = StreamParams::new(self.tasks)
            .timing(self.t_f, self.t_s)
            .keys(self.keys.dist(self.partitions))
            .seed(self.seed);
        let mut tasks = make_stream(&params);
        if self.pattern == PatternKind::Approx {
            shuffle_values(&mut tasks, self.seed);
        }
        tasks
    }

    pub fn cost(&self) -> Result<CostParams, ModelError> {
        CostParams::new(self.t_a, self.t_f, self.t_s, self.tasks as u64, self.n_w)
    }

    fn config(&self) -> FarmConfig {
        FarmConfig::for_pattern(self.pattern, self.n_w)
            .queue_capacity(self.queue_capacity)
            .pin_workers(self.pin)
            .trace(!self.adaptivity.is_empty())
    }
}

#[derive(Debug)]
pub struct CellRun {
    pub completion_us: f64,
    pub final_state: FinalState,
    pub outputs: Vec<StreamItem<i64>>,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOracle {
    pub outputs: Vec<i64>,
    pub final_state: FinalState,
}

fn drive<P>(cell: &Cell, pattern: P, wrap: impl FnOnce(P::Final) -> FinalState) -> Result<CellRun, FarmError>
where
    P: StatePattern<Task = SyntheticTask, Output = i64>,
{
    let tasks = cell.stream();
    let mut farm = build_farm(cell.config(), pattern)?;
    let mut events = cell.adaptivity.iter().peekable();
    let release = Release::new(cell.t_a);
    for (i, task) in tasks.into_iter().enumerate() {
        while let Some(ev) = events.next_if(|e| e.at <= i as u64) {
            match ev.delta {
                d if d > 0 => farm.grow(d as usize).map(drop)?,
                d if d < 0 => farm.shrink(d.unsigned_abs() as usize).map(drop)?,
                _ => {}
            }
        }
        release.wait(i as u64);
        match farm.feed(task) {
            Ok(_) => {}
            Err(FarmError::Aborted) => break,
            Err(e) => return Err(e),
        }
    }
    let report = farm.finish()?;
    Ok(CellRun {
        completion_us: report.metrics.completion_us(),
        final_state: wrap(report.final_state),
        outputs: report.outputs,
        metrics: report.metrics,
    })
}

/// Run one cell on a fresh farm.
pub fn run_cell(cell: &Cell) -> Result<CellRun, FarmError> {
    let f = cell.flush_freq;
    match cell.pattern {
        PatternKind::Serial => drive(cell, synthetic::serial(), FinalState::Scalar),
        PatternKind::Partitioned => drive(cell, synthetic::partitioned(cell.partitions), FinalState::Vector),
        PatternKind::Accumulator => drive(cell, synthetic::accumulator(cell.oplus, f, cell.t_s), FinalState::Scalar),
        PatternKind::Approx => drive(cell, synthetic::approx(), FinalState::Scalar),
        PatternKind::Separate => drive(cell, synthetic::separate(cell.t_s), FinalState::Scalar),
    }
}

/// Sequential reference result for the cell's workload, without busy time.
pub fn oracle_cell(cell: &Cell) -> CellOracle {
    let tasks = cell.untimed().stream();
    match cell.pattern {
        PatternKind::Serial => {
            let r = synthetic::serial().oracle(&tasks);
            CellOracle { outputs: r.outputs, final_state: FinalState::Scalar(r.final_state) }
        }
        PatternKind::Partitioned => {
            let r = synthetic::partitioned(cell.partitions).oracle(&tasks);
            CellOracle { outputs: r.outputs, final_state: FinalState::Vector(r.final_state) }
        }
        PatternKind::Accumulator => {
            let r = synthetic::accumulator(cell.oplus, cell.flush_freq, 0.0).oracle(&tasks);
            CellOracle { outputs: r.outputs, final_state: FinalState::Scalar(r.final_state) }
        }
        PatternKind::Approx => {
            let r = synthetic::approx().oracle(&tasks);
            CellOracle { outputs: r.outputs, final_state: FinalState::Scalar(r.final_state) }
        }
        PatternKind::Separate => {
            let r = synthetic::separate(0.0).oracle(&tasks);
            CellOracle { outputs: r.outputs, final_state: FinalState::Scalar(r.final_state) }
        }
    }
}

/// Compare a run with the oracle as far as the pattern's semantics pin it
/// down: the full output sequence for serial, the final state for
/// everything, and a strictly improving output stream for approx.
pub fn check_against_oracle(cell: &Cell, run: &CellRun, oracle: &CellOracle) -> Result<(), String> {
    let label = format!("{} n_w={} freq={} seed={}", cell.pattern, cell.n_w, cell.flush_freq, cell.seed);
    if run.final_state != oracle.final_state {
        return Err(format!(
            "{label}: final state {} but the oracle gives {}",
            run.final_state.summary(),
            oracle.final_state.summary()
        ));
    }
    match cell.pattern {
        PatternKind::Serial => {
            let values: Vec<i64> = run.outputs.iter().map(|o| o.value).collect();
            if values != oracle.outputs {
                let at = values.iter().zip(&oracle.outputs).position(|(a, b)| a != b).unwrap_or(values.len());
                return Err(format!("{label}: output sequence diverges at index {at}"));
            }
        }
        PatternKind::Partitioned => {
            for o in &run.outputs {
                if oracle.outputs.get(o.seq as usize) != Some(&o.value) {
                    return Err(format!("{label}: output for task {} differs", o.seq));
                }
            }
        }
        PatternKind::Approx => {
            let values: Vec<i64> = run.outputs.iter().map(|o| o.value).collect();
            if values.windows(2).any(|w| w[1] >= w[0]) {
                return Err(format!("{label}: output stream is not strictly decreasing"));
            }
            if values.last() != oracle.outputs.last() {
                return Err(format!("{label}: last output {:?}, oracle {:?}", values.last(), oracle.outputs.last()));
            }
        }
        PatternKind::Separate => {
            if run.outputs.len() != oracle.outputs.len() {
                return Err(format!("{label}: {} state emissions, expected {}", run.outputs.len(), oracle.outputs.len()));
            }
        }
        PatternKind::Accumulator => {
            if run.outputs.len() != cell.tasks {
                return Err(format!("{label}: {} results for {} tasks", run.outputs.len(), cell.tasks));
            }
        }
    }
    if run.metrics.tasks_processed != cell.tasks as u64 {
        return Err(format!("{label}: processed {} of {} tasks", run.metrics.tasks_processed, cell.tasks));
    }
    if run.metrics.ownership_violations != 0 {
        return Err(format!("{label}: {} partition ownership violations", run.metrics.ownership_violations));
    }
    Ok(())
}

/// Check the algebra the workload relies on: ⊕ laws for the accumulator,
/// monotone updates for successive approximation.
pub fn check_laws(pattern: PatternKind, op: Oplus, seed: u64) -> Result<(), ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match pattern {
        PatternKind::Accumulator => {
            check_oplus_laws(|a: &i64, b: &i64| op.apply(*a, *b), &op.zero(), || rng.random(), LAW_TRIALS)
                .map_err(|violation| ExperimentError::Law { op: op.to_string(), violation })
        }
        PatternKind::Approx => {
            let samples: Vec<(i64, i64)> = (0..LAW_TRIALS).map(|_| (rng.random(), rng.random())).collect();
            check_monotone_update(|x: &i64, s: &i64| x < s, |x: &i64, _: &i64| *x, i64::cmp, samples)
                .map_err(|violation| ExperimentError::Law { op: "min-update".into(), violation })
        }
        _ => Ok(()),
    }
}

/// Median of the completion times of `reps` runs.
pub fn median_completion(cell: &Cell, reps: usize) -> Result<f64, FarmError> {
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        samples.push(run_cell(cell)?.completion_us);
    }
    Ok(median(&mut samples))
}

pub fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => samples[n / 2],
        _ => (samples[n / 2 - 1] + samples[n / 2]) / 2.0,
    }
}

/// Model columns for a cell.
pub fn model_record(cell: &Cell, measured_us: f64, baseline_us: f64) -> Result<MetricsRecord, ModelError> {
    let p = cell.cost()?;
    Ok(MetricsRecord {
        pattern: cell.pattern,
        n_w: cell.n_w,
        flush_freq: cell.flush_freq,
        t_f: cell.t_f,
        t_s: cell.t_s,
        measured_us,
        ideal_us: perfmodel::ideal_completion(cell.pattern, &p),
        speedup: baseline_us / measured_us,
        predicted_speedup: perfmodel::predicted_speedup(cell.pattern, &p),
        bound: perfmodel::speedup_bound(cell.pattern, &p, cell.flush_freq),
    })
}

/// Run a whole sweep. `progress` receives one line per finished cell.
pub fn run_experiment(
    spec: &ExperimentSpec,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<MetricsRecord>, ExperimentError> {
    spec.validate()?;
    check_laws(spec.pattern, spec.oplus, spec.seed)?;

    let mut degrees = spec.degrees.clone();
    degrees.sort_unstable();
    degrees.dedup();
    let max_degree = *degrees.last().expect("validated non-empty");

    // fail fast on a broken pattern before spending time on measurements
    for &freq in &spec.flush_freqs {
        let mut cell = Cell::from_spec(spec, (0.0, 0.0), max_degree, freq).untimed();
        cell.tasks = cell.tasks.min(PREFIX_TASKS);
        cell.adaptivity.retain(|e| e.at < cell.tasks as u64);
        let run = run_cell(&cell)?;
        check_against_oracle(&cell, &run, &oracle_cell(&cell)).map_err(ExperimentError::Oracle)?;
    }

    calibrate::global()?;

    let mut records = Vec::new();
    for timing in spec.timings() {
        for &freq in &spec.flush_freqs {
            let base = Cell::from_spec(spec, timing, 1, freq);
            let baseline = median_completion(&base, spec.repetitions)?;
            for &n_w in &degrees {
                let cell = Cell { n_w, ..base.clone() };
                let measured = if n_w == 1 { baseline } else { median_completion(&cell, spec.repetitions)? };
                let record = model_record(&cell, measured, baseline)?;
                progress(&format!(
                    "{} n_w={} freq={} t_f={} t_s={}: {:.0} µs (ideal {:.0}), speedup {:.2}",
                    record.pattern, n_w, freq, record.t_f, record.t_s, measured, record.ideal_us, record.speedup
                ));
                records.push(record);
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subtraction_is_refused() {
        let err = check_laws(PatternKind::Accumulator, Oplus::Sub, 1).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        for op in [Oplus::Add, Oplus::Max, Oplus::Xor] {
            check_laws(PatternKind::Accumulator, op, 1).unwrap();
        }
        check_laws(PatternKind::Approx, Oplus::Sub, 1).unwrap();
    }

    #[test]
    fn untimed_cells_match_oracle() {
        for kind in PatternKind::ALL {
            for n_w in [1, 3] {
                let cell = Cell::new(kind, n_w, 500).flush(4).keys(KeySpec::Uniform, 8);
                let run = run_cell(&cell).unwrap();
                check_against_oracle(&cell, &run, &oracle_cell(&cell)).unwrap();
            }
        }
    }

    #[test]
    fn resizing_cell_matches_oracle() {
        let events = vec![AdaptivityEvent { at: 100, delta: 2 }, AdaptivityEvent { at: 300, delta: -2 }];
        for kind in [PatternKind::Accumulator, PatternKind::Partitioned] {
            let cell = Cell::new(kind, 2, 400).keys(KeySpec::Uniform, 16).events(events.clone());
            let run = run_cell(&cell).unwrap();
            assert_eq!(run.metrics.workers_spawned, 4);
            check_against_oracle(&cell, &run, &oracle_cell(&cell)).unwrap();
        }
    }

    #[test]
    fn single_degree_has_unit_speedup() {
        let mut spec = ExperimentSpec::new(PatternKind::Accumulator);
        spec.tasks = 200;
        spec.t_f = 1.0;
        spec.t_s = 0.5;
        let mut lines = 0;
        let records = run_experiment(&spec, &mut |_| lines += 1).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].speedup, 1.0);
        assert_eq!(lines, 1);
    }

    #[test]
    fn vector_summary_is_stable() {
        let a = FinalState::Vector(vec![1, 2, 3]).summary();
        assert_eq!(a, FinalState::Vector(vec![1, 2, 3]).summary());
        assert_ne!(a, FinalState::Vector(vec![3, 2, 1]).summary());
        assert_eq!(FinalState::Scalar(-4).summary(), "-4");
    }
}

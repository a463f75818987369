//! The farm: one emitter, a pool of workers, an optional collector and an
//! optional feedback channel from the collector back to the emitter.
//!
//! All activities talk through bounded FIFO channels. The emitter is the
//! only producer on each worker queue, so a worker sees tasks, feedback and
//! control messages in exactly the order the emitter sent them. The
//! feedback channel and the output stream are unbounded; that keeps the
//! collector from ever blocking and rules out a cycle of full queues.

mod collector;
mod emitter;
mod schedule;
mod worker;

use std::panic;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};

use crate::adaptivity::{AdaptivityError, OwnershipRegistry, PartitionMap};
use crate::patterns::{PatternKind, StatePattern};

pub use schedule::{Route, Scheduler};

pub(crate) use collector::CollectorReport;
pub(crate) use emitter::EmitterReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheduling {
    RoundRobin,
    /// Least occupied queue first, lowest index on ties.
    OnDemand,
    /// Task goes to the owner of its state partition.
    KeyDirected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FarmConfig {
    pub n_workers: usize,
    pub queue_capacity: usize,
    pub scheduling: Scheduling,
    pub collector_enabled: bool,
    pub feedback_enabled: bool,
    pub preserve_order: bool,
    /// Record per-worker logs of processed sequence numbers and received
    /// broadcasts.
    pub trace: bool,
    /// Best effort: pin each worker thread to one core.
    pub pin_workers: bool,
}

impl FarmConfig {
    pub const DEFAULT_QUEUE_CAPACITY: usize = 512;

    pub fn new(n_workers: usize) -> Self {
        Self {
            n_workers,
            queue_capacity: Self::DEFAULT_QUEUE_CAPACITY,
            scheduling: Scheduling::RoundRobin,
            collector_enabled: true,
            feedback_enabled: false,
            preserve_order: false,
            trace: false,
            pin_workers: false,
        }
    }

    /// The configuration each pattern normally runs with.
    pub fn for_pattern(kind: PatternKind, n_workers: usize) -> Self {
        let base = Self::new(n_workers);
        match kind {
            PatternKind::Serial => base.preserve_order(true),
            PatternKind::Partitioned => base.scheduling(Scheduling::KeyDirected),
            PatternKind::Accumulator => base,
            PatternKind::Approx => base.feedback(true),
            PatternKind::Separate => base.collector(false),
        }
    }

    pub fn scheduling(mut self, scheduling: Scheduling) -> Self {
        self.scheduling = scheduling;
        self
    }

    pub fn queue_capacity(mut self, capacity: usize) -> Self {
        self.queue_capacity = capacity;
        self
    }

    pub fn collector(mut self, enabled: bool) -> Self {
        self.collector_enabled = enabled;
        self
    }

    pub fn feedback(mut self, enabled: bool) -> Self {
        self.feedback_enabled = enabled;
        self
    }

    pub fn preserve_order(mut self, enabled: bool) -> Self {
        self.preserve_order = enabled;
        self
    }

    pub fn trace(mut self, enabled: bool) -> Self {
        self.trace = enabled;
        self
    }

    pub fn pin_workers(mut self, enabled: bool) -> Self {
        self.pin_workers = enabled;
        self
    }

    pub fn validate(&self) -> Result<(), FarmError> {
        if self.n_workers == 0 {
            return Err(FarmError::InvalidConfig("a farm needs at least one worker".into()));
        }
        if self.queue_capacity == 0 {
            return Err(FarmError::InvalidConfig("queue capacity must be at least 1".into()));
        }
        if self.feedback_enabled && !self.collector_enabled {
            return Err(FarmError::InvalidConfig("the feedback channel starts at the collector".into()));
        }
        if self.preserve_order && !self.collector_enabled {
            return Err(FarmError::InvalidConfig("ordered output needs a collector".into()));
        }
        Ok(())
    }

    fn check_pattern<P: StatePattern>(&self, pattern: &P) -> Result<(), FarmError> {
        let kind = pattern.kind();
        if pattern.requires_collector() && !self.collector_enabled {
            return Err(FarmError::PatternMismatch(format!("the {kind} pattern needs a collector")));
        }
        if pattern.requires_feedback() && !self.feedback_enabled {
            return Err(FarmError::PatternMismatch(format!("the {kind} pattern needs the feedback channel")));
        }
        match (pattern.partitions(), self.scheduling) {
            (Some(n), Scheduling::KeyDirected) => {
                if n < self.n_workers {
                    return Err(FarmError::PatternMismatch(format!(
                        "{} workers cannot share {n} partitions",
                        self.n_workers
                    )));
                }
            }
            (Some(_), other) => {
                return Err(FarmError::PatternMismatch(format!(
                    "the {kind} pattern needs key-directed scheduling, not {other:?}"
                )))
            }
            (None, Scheduling::KeyDirected) => {
                return Err(FarmError::PatternMismatch(format!(
                    "key-directed scheduling needs a routing function; the {kind} pattern has none"
                )))
            }
            (None, _) => {}
        }
        Ok(())
    }
}

/// One item on the output stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamItem<O> {
    /// Sequence number of the input task the item was produced for.
    pub seq: u64,
    pub value: O,
}

/// A task the emitter refused to schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub seq: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub id: usize,
    pub processed: u64,
    pub feedback_received: u64,
    /// Sequence numbers in processing order (only when tracing).
    pub processed_log: Vec<u64>,
    /// Broadcast indices in arrival order (only when tracing).
    pub feedback_log: Vec<u64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    /// First feed to last drain.
    pub completion: Duration,
    pub tasks_fed: u64,
    pub tasks_processed: u64,
    pub tasks_rejected: u64,
    pub workers_spawned: usize,
    /// One entry per worker ever started, in start order.
    pub workers: Vec<WorkerStats>,
    pub state_messages: u64,
    pub discarded_updates: u64,
    pub feedback_broadcasts: u64,
    pub migrated_entries: u64,
    pub ownership_violations: u64,
}

impl RunMetrics {
    pub fn completion_us(&self) -> f64 {
        self.completion.as_secs_f64() * 1e6
    }
}

#[derive(Debug)]
pub struct RunReport<O, F> {
    pub outputs: Vec<StreamItem<O>>,
    pub final_state: F,
    pub rejected: Vec<Rejection>,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Emitter,
    Worker(usize),
    Collector,
}

impl std::fmt::Display for Activity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activity::Emitter => f.write_str("emitter"),
            Activity::Worker(id) => write!(f, "worker {id}"),
            Activity::Collector => f.write_str("collector"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FarmError {
    #[error("invalid farm configuration: {0}")]
    InvalidConfig(String),
    #[error("pattern does not fit the farm: {0}")]
    PatternMismatch(String),
    #[error(transparent)]
    Adaptivity(#[from] AdaptivityError),
    #[error("{activity} failed: {message}")]
    Failed {
        activity: Activity,
        message: String,
        metrics: Box<RunMetrics>,
    },
    #[error("the farm aborted and no longer accepts input")]
    Aborted,
    #[error("the farm has already shut down")]
    Closed,
}

pub(crate) enum ToEmitter<P: StatePattern> {
    Task(P::Task),
    Broadcast(P::Feedback),
    Grow(usize),
    Shrink(usize),
    Merge(usize, usize),
    End,
}

pub(crate) enum ToWorker<P: StatePattern> {
    Task { seq: u64, task: P::Task },
    Feedback { index: u64, value: P::Feedback },
    Export { tag: usize, partitions: Vec<usize> },
    Import { partitions: Vec<usize>, transfer: P::Transfer },
    /// Drain the queue, flush local state and stop.
    Retire,
    /// Hand all local state to the emitter and stop without flushing.
    Absorb { tag: usize },
    EndOfStream,
}

pub(crate) enum ToCollector<P: StatePattern> {
    Done { seq: u64, output: Option<P::Output> },
    State(P::Message),
    Rejected { seq: u64 },
    Eos,
    EmitterDone { spawned: usize },
}

pub(crate) struct Returned<P: StatePattern> {
    tag: usize,
    transfer: P::Transfer,
}

/// Everything the activities of one farm share.
pub(crate) struct FarmCtx<P: StatePattern> {
    pub(crate) pattern: P,
    pub(crate) shared: P::Shared,
    pub(crate) config: FarmConfig,
    pub(crate) outputs: Sender<StreamItem<P::Output>>,
    pub(crate) ownership: Option<OwnershipRegistry>,
    aborted: AtomicBool,
    live_workers: AtomicUsize,
    pub(crate) first_failure: FailureSlot,
    pub(crate) fed: AtomicU64,
}

impl<P: StatePattern> FarmCtx<P> {
    pub(crate) fn aborted(&self) -> bool {
        self.aborted.load(Ordering::Acquire)
    }

    pub(crate) fn abort(&self, activity: Activity, message: String) {
        self.first_failure.set(activity, message);
        self.aborted.store(true, Ordering::Release);
        self.pattern.abort(&self.shared);
    }
}

#[derive(Default)]
pub(crate) struct FailureSlot(std::sync::Mutex<Option<(Activity, String)>>);

impl FailureSlot {
    /// Keeps only the first failure.
    pub(crate) fn set(&self, activity: Activity, message: String) {
        let mut slot = self.0.lock().unwrap_or_else(|e| e.into_inner());
        slot.get_or_insert((activity, message));
    }

    pub(crate) fn take(&self) -> Option<(Activity, String)> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).take()
    }
}

pub(crate) fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// Handle to a running farm.
///
/// The handle is the farm's single controller: it feeds tasks, requests
/// broadcasts and resizes, and finally shuts the farm down.
pub struct FarmHandle<P: StatePattern> {
    pub(crate) ctx: Arc<FarmCtx<P>>,
    pub(crate) input: Option<Sender<ToEmitter<P>>>,
    pub(crate) acks: Receiver<Result<usize, AdaptivityError>>,
    outputs: Receiver<StreamItem<P::Output>>,
    emitter: Option<JoinHandle<EmitterReport>>,
    collector: Option<JoinHandle<CollectorReport<P::Final>>>,
    pub(crate) active: usize,
    drained: Vec<StreamItem<P::Output>>,
    started: Option<Instant>,
}

/// Start every activity of a farm. Returns once all of them exist and are
/// waiting for input.
pub fn build_farm<P: StatePattern>(config: FarmConfig, pattern: P) -> Result<FarmHandle<P>, FarmError> {
    config.validate()?;
    config.check_pattern(&pattern)?;

    let (out_tx, out_rx) = unbounded();
    let (in_tx, in_rx) = bounded(config.queue_capacity);
    let (ack_tx, ack_rx) = unbounded();

    let map = match (pattern.partitions(), config.scheduling) {
        (Some(n), Scheduling::KeyDirected) => Some(PartitionMap::new(n, config.n_workers)?),
        _ => None,
    };
    let ownership = map.as_ref().map(|m| OwnershipRegistry::new(m.partitions()));
    let shared = pattern.new_shared();
    let ctx = Arc::new(FarmCtx {
        pattern,
        shared,
        config: config.clone(),
        outputs: out_tx,
        ownership,
        aborted: AtomicBool::new(false),
        live_workers: AtomicUsize::new(0),
        first_failure: Default::default(),
        fed: AtomicU64::new(0),
    });

    let (feedback_tx, feedback_rx) = if config.feedback_enabled {
        let (tx, rx) = unbounded();
        (Some(tx), Some(rx))
    } else {
        (None, None)
    };

    let (collector_tx, collector) = if config.collector_enabled {
        let (tx, rx) = bounded(config.queue_capacity);
        let c = Arc::clone(&ctx);
        let handle = thread::Builder::new()
            .name("farm-collector".into())
            .spawn(move || collector::run(c, rx, feedback_tx))
            .expect("spawn collector");
        (Some(tx), Some(handle))
    } else {
        (None, None)
    };

    let mut emitter = emitter::Emitter::new(Arc::clone(&ctx), collector_tx, feedback_rx, ack_tx, map);
    emitter.spawn_initial();
    let emitter = thread::Builder::new()
        .name("farm-emitter".into())
        .spawn(move || emitter.run(in_rx))
        .expect("spawn emitter");

    Ok(FarmHandle {
        ctx,
        input: Some(in_tx),
        acks: ack_rx,
        outputs: out_rx,
        emitter: Some(emitter),
        collector,
        active: config.n_workers,
        drained: Vec::new(),
        started: None,
    })
}

/// Feed every task, then shut down and gather results.
pub fn run_to_completion<P: StatePattern>(
    mut farm: FarmHandle<P>,
    input: impl IntoIterator<Item = P::Task>,
) -> Result<RunReport<P::Output, P::Final>, FarmError> {
    for task in input {
        match farm.feed(task) {
            Ok(_) => {}
            Err(FarmError::Aborted) => break,
            Err(e) => return Err(e),
        }
    }
    farm.finish()
}

impl<P: StatePattern> FarmHandle<P> {
    pub fn config(&self) -> &FarmConfig {
        &self.ctx.config
    }

    pub fn pattern(&self) -> &P {
        &self.ctx.pattern
    }

    /// Workers currently receiving tasks.
    pub fn active_workers(&self) -> usize {
        self.active
    }

    /// Worker threads that have been started and not yet exited.
    pub fn live_workers(&self) -> usize {
        self.ctx.live_workers.load(Ordering::Acquire)
    }

    pub fn is_aborted(&self) -> bool {
        self.ctx.aborted()
    }

    pub(crate) fn send(&self, msg: ToEmitter<P>) -> Result<(), FarmError> {
        self.input
            .as_ref()
            .ok_or(FarmError::Closed)?
            .send(msg)
            .map_err(|_| FarmError::Closed)
    }

    /// Put one task on the input stream, blocking while the emitter's queue
    /// is full. Returns the task's sequence number.
    pub fn feed(&mut self, task: P::Task) -> Result<u64, FarmError> {
        if self.ctx.aborted() {
            return Err(FarmError::Aborted);
        }
        self.started.get_or_insert_with(Instant::now);
        self.send(ToEmitter::Task(task))?;
        Ok(self.ctx.fed.fetch_add(1, Ordering::AcqRel))
    }

    /// Broadcast a value to every active worker over the feedback path.
    pub fn broadcast(&mut self, value: P::Feedback) -> Result<(), FarmError> {
        if !self.ctx.config.feedback_enabled {
            return Err(FarmError::InvalidConfig("feedback channel is disabled".into()));
        }
        self.send(ToEmitter::Broadcast(value))
    }

    /// Output items produced so far, without waiting.
    pub fn drain(&mut self) -> Vec<StreamItem<P::Output>> {
        let mut items = std::mem::take(&mut self.drained);
        items.extend(self.outputs.try_iter());
        items
    }

    /// End the input stream, wait for every activity to stop and collect
    /// results and metrics.
    pub fn finish(mut self) -> Result<RunReport<P::Output, P::Final>, FarmError> {
        let started = self.started.unwrap_or_else(Instant::now);
        let (emitter, collector) = self.shutdown();
        let mut outputs = std::mem::take(&mut self.drained);
        outputs.extend(self.outputs.try_iter());
        let completion = started.elapsed();

        let emitter = emitter.map_err(|m| (Activity::Emitter, m));
        let collector = collector.map_err(|m| (Activity::Collector, m));

        let mut metrics = RunMetrics {
            completion,
            tasks_fed: self.ctx.fed.load(Ordering::Acquire),
            ..RunMetrics::default()
        };
        let mut rejected = Vec::new();
        if let Ok(e) = &emitter {
            metrics.workers_spawned = e.workers.len();
            metrics.tasks_processed = e.workers.iter().map(|w| w.processed).sum();
            metrics.workers = e.workers.clone();
            metrics.feedback_broadcasts = e.broadcasts;
            metrics.migrated_entries = e.migrated;
            rejected = e.rejected.clone();
            metrics.tasks_rejected = rejected.len() as u64;
        }
        if let Some(own) = &self.ctx.ownership {
            metrics.ownership_violations = own.violations();
        }

        let final_state = match collector {
            Ok(Some(report)) => {
                metrics.state_messages = report.state_messages;
                metrics.discarded_updates = report.discarded;
                Ok(report.final_state)
            }
            Ok(None) => {
                let global = self.ctx.pattern.new_global();
                Ok(self.ctx.pattern.finish(&self.ctx.shared, global))
            }
            Err(e) => Err(e),
        };

        let failure = self
            .ctx
            .first_failure
            .take()
            .or(emitter.err())
            .or(final_state.as_ref().err().cloned());
        if let Some((activity, message)) = failure {
            return Err(FarmError::Failed { activity, message, metrics: Box::new(metrics) });
        }
        Ok(RunReport {
            outputs,
            final_state: final_state.expect("checked above"),
            rejected,
            metrics,
        })
    }

    #[allow(clippy::type_complexity)]
    fn shutdown(
        &mut self,
    ) -> (Result<EmitterReport, String>, Result<Option<CollectorReport<P::Final>>, String>) {
        if let Some(input) = self.input.take() {
            let _ = input.send(ToEmitter::End);
        }
        let emitter = match self.emitter.take() {
            Some(h) => h.join().map_err(|p| panic_message(&*p)),
            None => Err("emitter already joined".into()),
        };
        let collector = match self.collector.take() {
            Some(h) => h.join().map(Some).map_err(|p| panic_message(&*p)),
            None => Ok(None),
        };
        (emitter, collector)
    }
}

impl<P: StatePattern> Drop for FarmHandle<P> {
    fn drop(&mut self) {
        if self.emitter.is_some() {
            let _ = self.shutdown();
        }
    }
}

pub(crate) fn catch<R>(f: impl FnOnce() -> R) -> Result<R, String> {
    panic::catch_unwind(panic::AssertUnwindSafe(f)).map_err(|p| panic_message(&*p))
}

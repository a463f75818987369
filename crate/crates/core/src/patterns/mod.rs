//! State access patterns.
//!
//! A pattern decides what each worker keeps locally, what it tells the
//! collector, how the collector folds those messages into the global state,
//! and how state moves between workers when the farm is resized. The engine
//! drives every pattern through [`StatePattern`]; the five patterns in this
//! module are the implementations it ships with.
//!
//! Callbacks supplied by users (`f`, `s`, `g`, `⊕`, `c`, `s′`, `h`) may be
//! invoked concurrently from several workers and must not keep references
//! to state between calls.

mod accumulator;
mod approx;
pub mod laws;
mod partitioned;
mod separate;
mod serial;

use std::fmt;
use std::str::FromStr;

pub use accumulator::{AccumulatorLocal, AccumulatorSpec, AccumulatorTransfer};
pub use approx::{ApproxSpec, Candidate, GrowStart};
pub use partitioned::PartitionedSpec;
pub use separate::SeparateSpec;
pub use serial::{SequencedCell, SerialSpec};

/// The five state access patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternKind {
    /// One global state, every task reads and writes it in input order.
    Serial,
    /// State vector indexed by a hash of the task; each entry has one owner.
    Partitioned,
    /// Commutative-associative fold of per-task contributions.
    Accumulator,
    /// Monotone refinement of a global best value.
    Approx,
    /// State-free task function followed by a short serialized update.
    Separate,
}

impl PatternKind {
    pub const ALL: [PatternKind; 5] = [
        PatternKind::Serial,
        PatternKind::Partitioned,
        PatternKind::Accumulator,
        PatternKind::Approx,
        PatternKind::Separate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Serial => "serial",
            PatternKind::Partitioned => "partitioned",
            PatternKind::Accumulator => "accumulator",
            PatternKind::Approx => "approx",
            PatternKind::Separate => "separate",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown pattern `{0}` (expected serial, partitioned, accumulator, approx or separate)")]
pub struct UnknownPattern(pub String);

impl FromStr for PatternKind {
    type Err = UnknownPattern;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PatternKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownPattern(s.to_string()))
    }
}

/// Initial conditions handed to a freshly started worker.
#[derive(Debug)]
pub struct LocalInit<'a, F> {
    /// Partitions the worker owns from the start (partitioned pattern only).
    pub partitions: &'a [usize],
    /// Most recent value broadcast on the feedback channel, if any.
    pub latest_feedback: Option<&'a F>,
}

/// Where a worker sends what it produces while handling one task.
pub trait WorkerSink<O, M> {
    /// Deliver a result for the current task. At most once per task.
    fn output(&mut self, value: O);
    /// Send a state message to the collector.
    fn message(&mut self, message: M);
}

/// Where the collector sends what it produces while folding a message.
pub trait CollectorSink<O, F> {
    /// Put a value on the output stream, tagged with the task it came from.
    fn output(&mut self, seq: u64, value: O);
    /// Broadcast a value to every active worker through the emitter.
    fn feedback(&mut self, value: F);
    /// Record that a message was dropped without changing state.
    fn discarded(&mut self);
}

/// A state access pattern as seen by the farm engine.
///
/// `Local` lives in one worker, `Global` in the collector and `Shared` is a
/// cell all workers can reach (only the serial and separate patterns use
/// it). `Transfer` is what moves between workers on migration or merge.
pub trait StatePattern: Send + Sync + 'static {
    type Task: Send + 'static;
    type Output: Send + 'static;
    type Message: Send + 'static;
    type Feedback: Clone + Send + 'static;
    type Local: Send + 'static;
    type Shared: Send + Sync + 'static;
    type Global: Send + 'static;
    type Transfer: Send + 'static;
    type Final: Send + 'static;

    fn kind(&self) -> PatternKind;

    fn requires_collector(&self) -> bool {
        true
    }

    fn requires_feedback(&self) -> bool {
        false
    }

    /// Length of the state vector, for patterns that partition state.
    fn partitions(&self) -> Option<usize> {
        None
    }

    /// State vector index of a task. May be out of range; the emitter
    /// rejects such tasks.
    fn route(&self, _task: &Self::Task) -> Option<usize> {
        None
    }

    fn new_shared(&self) -> Self::Shared;

    fn new_local(&self, shared: &Self::Shared, init: &LocalInit<'_, Self::Feedback>) -> Self::Local;

    fn process(
        &self,
        shared: &Self::Shared,
        local: &mut Self::Local,
        seq: u64,
        task: Self::Task,
        sink: &mut dyn WorkerSink<Self::Output, Self::Message>,
    );

    fn on_feedback(&self, _local: &mut Self::Local, _value: &Self::Feedback) {}

    /// Called once when the worker stops, whether at end of stream or
    /// because the farm shrinks.
    fn flush(&self, _local: &mut Self::Local, _sink: &mut dyn WorkerSink<Self::Output, Self::Message>) {}

    /// Remove state from a worker. `None` takes everything.
    fn export(&self, local: &mut Self::Local, partitions: Option<&[usize]>) -> Self::Transfer;

    fn import(&self, local: &mut Self::Local, transfer: Self::Transfer);

    fn new_global(&self) -> Self::Global;

    fn collect(
        &self,
        global: &mut Self::Global,
        message: Self::Message,
        sink: &mut dyn CollectorSink<Self::Output, Self::Feedback>,
    );

    fn finish(&self, shared: &Self::Shared, global: Self::Global) -> Self::Final;

    /// The farm is aborting; wake anything blocked on shared state.
    fn abort(&self, _shared: &Self::Shared) {}
}

pub(crate) type TaskFn<T, S, R> = Box<dyn Fn(&T, &S) -> R + Send + Sync>;

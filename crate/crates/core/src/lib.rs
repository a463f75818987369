//! A stream-parallel task farm with pluggable state access patterns.
//!
//! A farm has one emitter, `n` workers and optionally a collector with a
//! feedback path back to the emitter. How workers see state is decided by
//! the pattern:
//!
//! * [`SerialSpec`]: one state, updated strictly in input order.
//! * [`PartitionedSpec`]: a state vector, each entry owned by one worker.
//! * [`AccumulatorSpec`]: per-worker partial folds merged by the collector.
//! * [`ApproxSpec`]: a monotonically improving global value.
//! * [`SeparateSpec`]: state-free compute followed by an atomic update.
//!
//! ```
//! use statefarm::{build_farm, run_to_completion, AccumulatorSpec, FarmConfig, PatternKind};
//!
//! let spec = AccumulatorSpec::new(0i64, 8, |x: &i64, _: &i64| *x, |x: &i64| *x, |a: &i64, b: &i64| a + b);
//! let farm = build_farm(FarmConfig::for_pattern(PatternKind::Accumulator, 4), spec).unwrap();
//! let report = run_to_completion(farm, 1..=100).unwrap();
//! assert_eq!(report.final_state, 5050);
//! ```

pub mod adaptivity;
pub mod engine;
pub mod patterns;
pub mod perfmodel;
pub mod workload;

pub use adaptivity::{plan_migration, AdaptivityError, MigrationPlan, Move, OwnershipRegistry, PartitionMap};
pub use engine::{
    build_farm, run_to_completion, Activity, FarmConfig, FarmError, FarmHandle, Rejection, RunMetrics, RunReport,
    Scheduling, StreamItem, WorkerStats,
};
pub use patterns::{AccumulatorSpec, ApproxSpec, GrowStart, PartitionedSpec, PatternKind, SeparateSpec, SerialSpec, StatePattern};
pub use perfmodel::CostParams;

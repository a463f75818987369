//! Analytical performance model of the farm.
//!
//! Every function here is pure and works in microseconds. Callers that
//! report milliseconds convert at the boundary.

use crate::patterns::PatternKind;

/// Cost parameters of one farm run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Inter-arrival time of input tasks (µs).
    pub t_a: f64,
    /// Time spent in the task function (µs).
    pub t_f: f64,
    /// Time spent updating state (µs).
    pub t_s: f64,
    /// Number of tasks.
    pub m: u64,
    /// Parallelism degree.
    pub n_w: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("time parameter {name} must be finite and non-negative, got {value}")]
    NegativeTime { name: &'static str, value: f64 },
    #[error("parallelism degree must be at least 1")]
    ZeroWorkers,
}

impl CostParams {
    pub fn new(t_a: f64, t_f: f64, t_s: f64, m: u64, n_w: usize) -> Result<Self, ModelError> {
        for (name, value) in [("t_a", t_a), ("t_f", t_f), ("t_s", t_s)] {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::NegativeTime { name, value });
            }
        }
        if n_w == 0 {
            return Err(ModelError::ZeroWorkers);
        }
        Ok(Self { t_a, t_f, t_s, m, n_w })
    }

    pub fn with_workers(self, n_w: usize) -> Self {
        Self { n_w: n_w.max(1), ..self }
    }
}

/// Both completion-time forms for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionTime {
    /// `m (t_f + t_s) / n_w`, the ideal for a farm whose workers also pay
    /// the state update.
    pub stateful: f64,
    /// `m * T_s(n_w)`, the stateless farm.
    pub stateless: f64,
}

/// `T_s(n_w) = max(t_a, t_f / n_w)`.
pub fn service_time(p: &CostParams) -> f64 {
    p.t_a.max(p.t_f / p.n_w as f64)
}

pub fn completion_time(p: &CostParams) -> CompletionTime {
    let m = p.m as f64;
    CompletionTime {
        stateful: m * (p.t_f + p.t_s) / p.n_w as f64,
        stateless: m * service_time(p),
    }
}

/// Asymptotic speedup of the separate task/state pattern, `t_f / t_s + 1`.
///
/// Returns `f64::INFINITY` when `t_s` is zero: nothing is serialized.
pub fn speedup_bound_separate(t_f: f64, t_s: f64) -> f64 {
    if t_s <= 0.0 {
        return f64::INFINITY;
    }
    t_f / t_s + 1.0
}

/// Best-case speedup of the separate task/state pattern at `n_w` workers:
/// `n_w (t_f + t_s) / (n_w t_s + t_f)`.
///
/// With both costs zero there is no work to speed up and 1 is returned.
pub fn predicted_speedup_separate(t_f: f64, t_s: f64, n_w: usize) -> f64 {
    let n = n_w.max(1) as f64;
    let denom = n * t_s + t_f;
    if denom <= 0.0 {
        return 1.0;
    }
    n * (t_f + t_s) / denom
}

/// Smallest accumulator flush frequency (tasks per update message) that
/// keeps the collector from becoming the bottleneck: `t_f n_w / t_s`.
pub fn min_flush_frequency(t_f: f64, t_s: f64, n_w: usize) -> f64 {
    if t_s <= 0.0 {
        return 0.0;
    }
    t_f * n_w as f64 / t_s
}

/// Speedup ceiling of the accumulator pattern.
///
/// The collector folds one message per `freq` tasks at cost `t_s`, so it
/// sustains at most one task every `t_s / freq`; a worker needs `t_f + t_s`
/// per task.
pub fn speedup_bound_accumulator(t_f: f64, t_s: f64, n_w: usize, freq: usize) -> f64 {
    let n = n_w.max(1) as f64;
    if t_s <= 0.0 {
        return n;
    }
    n.min(freq.max(1) as f64 * (t_f + t_s) / t_s)
}

/// Speedup the model predicts for `kind` at `p.n_w` workers.
pub fn predicted_speedup(kind: PatternKind, p: &CostParams) -> f64 {
    match kind {
        PatternKind::Serial => 1.0,
        PatternKind::Separate => predicted_speedup_separate(p.t_f, p.t_s, p.n_w),
        PatternKind::Partitioned | PatternKind::Accumulator | PatternKind::Approx => p.n_w as f64,
    }
}

/// Upper bound on speedup for `kind`; `freq` only matters for the
/// accumulator.
pub fn speedup_bound(kind: PatternKind, p: &CostParams, freq: usize) -> f64 {
    match kind {
        PatternKind::Serial => 1.0,
        PatternKind::Separate => speedup_bound_separate(p.t_f, p.t_s),
        PatternKind::Accumulator => speedup_bound_accumulator(p.t_f, p.t_s, p.n_w, freq),
        PatternKind::Partitioned | PatternKind::Approx => p.n_w as f64,
    }
}

/// Ideal completion time (µs) of `kind`, never faster than the arrival rate
/// allows.
pub fn ideal_completion(kind: PatternKind, p: &CostParams) -> f64 {
    let sequential = p.m as f64 * (p.t_f + p.t_s);
    let compute = match kind {
        PatternKind::Serial => sequential,
        PatternKind::Separate => sequential / predicted_speedup_separate(p.t_f, p.t_s, p.n_w),
        PatternKind::Partitioned | PatternKind::Accumulator | PatternKind::Approx => {
            completion_time(p).stateful
        }
    };
    compute.max(p.m as f64 * p.t_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(t_a: f64, t_f: f64, t_s: f64, m: u64, n_w: usize) -> CostParams {
        CostParams::new(t_a, t_f, t_s, m, n_w).unwrap()
    }

    #[test]
    fn service_time_branches() {
        assert_eq!(service_time(&params(0.0, 100.0, 0.0, 1, 4)), 25.0);
        assert_eq!(service_time(&params(50.0, 100.0, 0.0, 1, 4)), 50.0);
        assert_eq!(service_time(&params(25.0, 100.0, 0.0, 1, 4)), 25.0);
    }

    #[test]
    fn completion_forms() {
        let c = completion_time(&params(0.0, 100.0, 0.0, 1000, 1));
        assert_eq!(c.stateful, 100_000.0);
        assert_eq!(c.stateless, 100_000.0);

        let one = completion_time(&params(0.0, 70.0, 30.0, 500, 4));
        let two = completion_time(&params(0.0, 70.0, 30.0, 500, 8));
        assert_eq!(two.stateful * 2.0, one.stateful);
        assert_eq!(two.stateless * 2.0, one.stateless);
    }

    #[test]
    fn ideal_curve_matches_plotted_sixteen_worker_point() {
        // t_f ~ 2 t_s, one-worker ideal of 428.032 ms
        let base = params(0.0, 285.344, 142.688, 1000, 1);
        let one = completion_time(&base).stateful;
        let sixteen = completion_time(&base.with_workers(16)).stateful;
        assert!((one - 428_032.0).abs() < 1e-6);
        assert!((sixteen - one / 16.0).abs() < 1e-9);
        assert!((sixteen / 1000.0 - 26.752).abs() < 1e-6);
        // plotted value 26.688 ms, off by timer rounding only
        assert!((sixteen / 1000.0 - 26.688).abs() / 26.688 < 0.005);
    }

    #[test]
    fn separate_bounds() {
        assert_eq!(speedup_bound_separate(100.0, 1.0), 101.0);
        assert_eq!(speedup_bound_separate(10.0, 1.0), 11.0);
        assert_eq!(speedup_bound_separate(5.0, 1.0), 6.0);
        assert_eq!(speedup_bound_separate(0.0, 3.0), 1.0);
        assert!(speedup_bound_separate(3.0, 0.0).is_infinite());
    }

    #[test]
    fn separate_prediction_values() {
        assert_eq!(predicted_speedup_separate(10.0, 1.0, 1), 1.0);
        let p = predicted_speedup_separate(10.0, 1.0, 16);
        assert!((p - 176.0 / 26.0).abs() < 1e-12);
        let far = predicted_speedup_separate(5.0, 1.0, 1_000_000);
        assert!((far - 6.0).abs() < 1e-4);
    }

    #[test]
    fn flush_threshold() {
        assert_eq!(min_flush_frequency(2.0, 1.0, 8), 16.0);
        assert_eq!(min_flush_frequency(1.0, 1.0, 1), 1.0);
        assert_eq!(min_flush_frequency(5.0, 0.0, 4), 0.0);
        // threshold is linear in n_w: freq 4 covers up to 2 workers at t_f = 2 t_s
        assert!(min_flush_frequency(2.0, 1.0, 2) <= 4.0);
        assert!(min_flush_frequency(2.0, 1.0, 16) > 4.0);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(CostParams::new(-1.0, 0.0, 0.0, 0, 1).is_err());
        assert!(CostParams::new(0.0, f64::NAN, 0.0, 0, 1).is_err());
        assert_eq!(CostParams::new(0.0, 0.0, 0.0, 0, 0), Err(ModelError::ZeroWorkers));
    }

    #[test]
    fn ideal_by_pattern() {
        let p = params(0.0, 100.0, 20.0, 1000, 4);
        assert_eq!(ideal_completion(PatternKind::Serial, &p), 120_000.0);
        assert_eq!(ideal_completion(PatternKind::Accumulator, &p), 30_000.0);
        let sep = ideal_completion(PatternKind::Separate, &p);
        assert!((sep - 120_000.0 / predicted_speedup_separate(100.0, 20.0, 4)).abs() < 1e-9);
        let arrival_bound = params(200.0, 100.0, 20.0, 1000, 4);
        assert_eq!(ideal_completion(PatternKind::Partitioned, &arrival_bound), 200_000.0);
    }

    proptest! {
        #[test]
        fn separate_prediction_is_monotone_and_bounded(
            t_f in 0.0f64..1000.0,
            t_s in 0.01f64..1000.0,
            n in 1usize..256,
        ) {
            let bound = speedup_bound_separate(t_f, t_s);
            let here = predicted_speedup_separate(t_f, t_s, n);
            let next = predicted_speedup_separate(t_f, t_s, n + 1);
            prop_assert!(next + 1e-12 >= here);
            prop_assert!(here <= bound * (1.0 + 1e-12));
            prop_assert!((predicted_speedup_separate(t_f, t_s, 1) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn stateful_completion_scales_inversely(
            t_f in 0.0f64..1000.0,
            t_s in 0.0f64..1000.0,
            m in 0u64..100_000,
            n in 1usize..64,
        ) {
            let one = completion_time(&params(0.0, t_f, t_s, m, 1)).stateful;
            let many = completion_time(&params(0.0, t_f, t_s, m, n)).stateful;
            prop_assert!((many * n as f64 - one).abs() <= 1e-9 * one.max(1.0));
        }
    }
}

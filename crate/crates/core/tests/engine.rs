use std::collections::BTreeSet;

use statefarm::{
    build_farm, run_to_completion, AccumulatorSpec, Activity, ApproxSpec, FarmConfig, FarmError, PartitionedSpec,
    PatternKind, Scheduling, SeparateSpec, SerialSpec,
};

fn sum_spec(flush: usize) -> AccumulatorSpec<i64, i64, i64> {
    AccumulatorSpec::new(0, flush, |x: &i64, _: &i64| *x, |x: &i64| *x, |a: &i64, b: &i64| a + b)
}

fn counting_spec(n: usize) -> PartitionedSpec<usize, u64, u64> {
    PartitionedSpec::new(n, 0, move |x: &usize| x % n, |_: &usize, v: &u64| *v, |_: &usize, v: &u64| v + 1)
}

fn assert_exactly_once(workers: &[statefarm::WorkerStats], m: u64) {
    let mut seen = BTreeSet::new();
    for w in workers {
        for &seq in &w.processed_log {
            assert!(seen.insert(seq), "task {seq} processed twice");
        }
    }
    assert_eq!(seen.len() as u64, m);
    assert_eq!(seen.last().copied(), m.checked_sub(1));
}

#[test]
fn single_worker_farm_builds() {
    let farm = build_farm(FarmConfig::new(1), sum_spec(1)).unwrap();
    assert_eq!(farm.active_workers(), 1);
    let report = farm.finish().unwrap();
    assert_eq!(report.final_state, 0);
}

#[test]
fn key_directed_farm_starts_every_worker() {
    let config = FarmConfig::new(4).scheduling(Scheduling::KeyDirected);
    let farm = build_farm(config, counting_spec(16)).unwrap();
    assert_eq!(farm.live_workers(), 4);
    let report = farm.finish().unwrap();
    assert_eq!(report.metrics.workers_spawned, 4);
    assert_eq!(report.final_state, vec![0; 16]);
}

#[test]
fn invalid_configurations_are_refused() {
    let no_collector = FarmConfig::new(4).collector(false).feedback(true);
    assert!(matches!(build_farm(no_collector, sum_spec(1)), Err(FarmError::InvalidConfig(_))));
    assert!(matches!(build_farm(FarmConfig::new(0), sum_spec(1)), Err(FarmError::InvalidConfig(_))));
    assert!(matches!(build_farm(FarmConfig::new(2).queue_capacity(0), sum_spec(1)), Err(FarmError::InvalidConfig(_))));

    let round_robin = FarmConfig::new(2);
    assert!(matches!(build_farm(round_robin, counting_spec(8)), Err(FarmError::PatternMismatch(_))));
    let too_many = FarmConfig::new(9).scheduling(Scheduling::KeyDirected);
    assert!(matches!(build_farm(too_many, counting_spec(8)), Err(FarmError::PatternMismatch(_))));
    let no_router = FarmConfig::new(2).scheduling(Scheduling::KeyDirected);
    assert!(matches!(build_farm(no_router, sum_spec(1)), Err(FarmError::PatternMismatch(_))));

    let approx = ApproxSpec::minimizing(i64::MAX, |x: &i64, s: &i64| x < s, |x: &i64, _: &i64| *x);
    assert!(matches!(build_farm(FarmConfig::new(2), approx), Err(FarmError::PatternMismatch(_))));
    let sep = SeparateSpec::new(0i64, |x: &i64| *x, |y: &i64, s: &i64| s + y);
    assert!(build_farm(FarmConfig::new(2).collector(true), sep).is_ok());
}

#[test]
fn empty_stream() {
    for kind in PatternKind::ALL {
        let config = FarmConfig::for_pattern(kind, 3);
        let outputs = match kind {
            PatternKind::Serial => {
                let spec = SerialSpec::new(0i64, |x: &i64, s: &i64| x + s, |x: &i64, s: &i64| x + s);
                run_to_completion(build_farm(config, spec).unwrap(), []).unwrap().outputs.len()
            }
            PatternKind::Partitioned => {
                run_to_completion(build_farm(config, counting_spec(4)).unwrap(), []).unwrap().outputs.len()
            }
            PatternKind::Accumulator => {
                run_to_completion(build_farm(config, sum_spec(2)).unwrap(), []).unwrap().outputs.len()
            }
            PatternKind::Approx => {
                let spec = ApproxSpec::minimizing(i64::MAX, |x: &i64, s: &i64| x < s, |x: &i64, _: &i64| *x);
                run_to_completion(build_farm(config, spec).unwrap(), []).unwrap().outputs.len()
            }
            PatternKind::Separate => {
                let spec = SeparateSpec::new(0i64, |x: &i64| *x, |y: &i64, s: &i64| s + y);
                run_to_completion(build_farm(config, spec).unwrap(), []).unwrap().outputs.len()
            }
        };
        assert_eq!(outputs, 0, "{kind}");
    }
}

#[test]
fn every_task_processed_exactly_once() {
    let m = 3000u64;
    for n in [1, 3, 8] {
        let farm = build_farm(FarmConfig::for_pattern(PatternKind::Accumulator, n).trace(true), sum_spec(7)).unwrap();
        let report = run_to_completion(farm, 1..=m as i64).unwrap();
        assert_exactly_once(&report.metrics.workers, m);
        assert_eq!(report.outputs.len() as u64, m);
        assert_eq!(report.metrics.tasks_fed, m);
        assert_eq!(report.metrics.tasks_processed, m);

        for policy in [Scheduling::RoundRobin, Scheduling::OnDemand] {
            let config = FarmConfig::new(n).collector(false).scheduling(policy).trace(true);
            let spec = SeparateSpec::new(0i64, |x: &i64| *x, |y: &i64, s: &i64| s + y);
            let report = run_to_completion(build_farm(config, spec).unwrap(), 1..=m as i64).unwrap();
            assert_exactly_once(&report.metrics.workers, m);
            assert_eq!(report.final_state, (m * (m + 1) / 2) as i64);
        }

        let config = FarmConfig::for_pattern(PatternKind::Partitioned, n).trace(true);
        let report = run_to_completion(build_farm(config, counting_spec(8)).unwrap(), 0..m as usize).unwrap();
        assert_exactly_once(&report.metrics.workers, m);
    }
}

#[test]
fn round_robin_spreads_evenly() {
    let farm = build_farm(FarmConfig::new(4).trace(true), sum_spec(1)).unwrap();
    let report = run_to_completion(farm, 0..400).unwrap();
    for w in &report.metrics.workers {
        assert_eq!(w.processed, 100);
        assert!(w.processed_log.iter().all(|seq| seq % 4 == w.id as u64));
    }
}

#[test]
fn terminates_with_unit_queues() {
    for n in 1..=4 {
        let config = FarmConfig::for_pattern(PatternKind::Accumulator, n).queue_capacity(1);
        let report = run_to_completion(build_farm(config, sum_spec(1)).unwrap(), 1..=2000).unwrap();
        assert_eq!(report.final_state, 2001 * 1000);

        let config = FarmConfig::for_pattern(PatternKind::Serial, n).queue_capacity(1);
        let spec = SerialSpec::new(0i64, |x: &i64, s: &i64| x + s, |x: &i64, s: &i64| x + s);
        let report = run_to_completion(build_farm(config, spec).unwrap(), 1..=2000).unwrap();
        assert_eq!(report.final_state, 2001 * 1000);

        let config = FarmConfig::for_pattern(PatternKind::Approx, n).queue_capacity(1);
        let spec = ApproxSpec::minimizing(i64::MAX, |x: &i64, s: &i64| x < s, |x: &i64, _: &i64| *x);
        let report = run_to_completion(build_farm(config, spec).unwrap(), (1..=2000).rev()).unwrap();
        assert_eq!(report.final_state, 1);

        let config = FarmConfig::for_pattern(PatternKind::Partitioned, n).queue_capacity(1);
        let report = run_to_completion(build_farm(config, counting_spec(4)).unwrap(), 0..2000usize).unwrap();
        assert_eq!(report.final_state, vec![500; 4]);

        let config = FarmConfig::new(n).scheduling(Scheduling::OnDemand).queue_capacity(1);
        let report = run_to_completion(build_farm(config, sum_spec(3)).unwrap(), 1..=2000).unwrap();
        assert_eq!(report.final_state, 2001 * 1000);
    }
}

#[test]
fn ordered_and_unordered_output() {
    let m = 2000u64;
    let config = FarmConfig::new(4).preserve_order(true).queue_capacity(2);
    let report = run_to_completion(build_farm(config, sum_spec(5)).unwrap(), 0..m as i64).unwrap();
    let seqs: Vec<u64> = report.outputs.iter().map(|o| o.seq).collect();
    assert_eq!(seqs, (0..m).collect::<Vec<_>>());
    assert!(report.outputs.iter().all(|o| o.value == o.seq as i64));

    let report = run_to_completion(build_farm(FarmConfig::new(4), sum_spec(5)).unwrap(), 0..m as i64).unwrap();
    let mut seqs: Vec<u64> = report.outputs.iter().map(|o| o.seq).collect();
    seqs.sort_unstable();
    assert_eq!(seqs, (0..m).collect::<Vec<_>>());
}

fn approx_farm(n: usize) -> statefarm::FarmHandle<ApproxSpec<i64, i64>> {
    let spec = ApproxSpec::minimizing(i64::MAX, |x: &i64, s: &i64| x < s, |x: &i64, _: &i64| *x);
    build_farm(FarmConfig::for_pattern(PatternKind::Approx, n).trace(true), spec).unwrap()
}

#[test]
fn broadcasts_reach_every_worker_once_in_order() {
    let mut farm = approx_farm(4);
    farm.broadcast(10).unwrap();
    farm.broadcast(5).unwrap();
    let report = farm.finish().unwrap();
    assert_eq!(report.metrics.feedback_broadcasts, 2);
    for w in &report.metrics.workers {
        assert_eq!(w.feedback_log, vec![0, 1], "worker {}", w.id);
    }
}

#[test]
fn broadcast_during_shrink_reaches_survivors() {
    let mut farm = approx_farm(4);
    farm.broadcast(100).unwrap();
    farm.shrink(1).unwrap();
    farm.broadcast(50).unwrap();
    let report = farm.finish().unwrap();
    let workers = &report.metrics.workers;
    for w in &workers[..3] {
        assert_eq!(w.feedback_log, vec![0, 1]);
    }
    assert!(!workers[3].feedback_log.contains(&1));
}

#[test]
fn broadcast_needs_feedback() {
    let mut farm = build_farm(FarmConfig::new(1), sum_spec(1)).unwrap();
    assert!(matches!(farm.broadcast(()), Err(FarmError::InvalidConfig(_))));
}

#[test]
fn worker_panic_aborts_with_partial_metrics() {
    let spec = AccumulatorSpec::new(
        0i64,
        1,
        |x: &i64, _: &i64| {
            assert!(*x != 500, "bad task {x}");
            *x
        },
        |x: &i64| *x,
        |a: &i64, b: &i64| a + b,
    );
    let farm = build_farm(FarmConfig::new(3), spec).unwrap();
    match run_to_completion(farm, 0..10_000) {
        Err(FarmError::Failed { activity, message, metrics }) => {
            assert!(matches!(activity, Activity::Worker(_)));
            assert!(message.contains("bad task 500"), "{message}");
            assert!(metrics.tasks_processed >= 500);
            assert!(metrics.tasks_processed < 10_000);
            assert_eq!(metrics.workers_spawned, 3);
        }
        other => panic!("expected failure, got {other:?}"),
    }
}

#[test]
fn serial_panic_does_not_hang_waiting_workers() {
    let spec = SerialSpec::new(
        0i64,
        |x: &i64, s: &i64| {
            assert!(*x != 10, "boom");
            x + s
        },
        |x: &i64, s: &i64| x + s,
    );
    let farm = build_farm(FarmConfig::for_pattern(PatternKind::Serial, 4), spec).unwrap();
    let err = run_to_completion(farm, 0..1000).unwrap_err();
    assert!(matches!(err, FarmError::Failed { .. }));
}

#[test]
fn out_of_range_keys_are_rejected() {
    let spec = PartitionedSpec::new(4, 0u64, |x: &usize| *x, |_: &usize, v: &u64| *v, |_: &usize, v: &u64| v + 1);
    let config = FarmConfig::for_pattern(PatternKind::Partitioned, 2).preserve_order(true);
    let report = run_to_completion(build_farm(config, spec).unwrap(), [0, 1, 7, 2, 3, 9, 3]).unwrap();
    let rejected: Vec<u64> = report.rejected.iter().map(|r| r.seq).collect();
    assert_eq!(rejected, vec![2, 5]);
    assert_eq!(report.metrics.tasks_rejected, 2);
    assert_eq!(report.final_state, vec![1, 1, 1, 2]);
    let seqs: Vec<u64> = report.outputs.iter().map(|o| o.seq).collect();
    assert_eq!(seqs, vec![0, 1, 3, 4, 6]);
}

#[test]
fn feed_returns_sequence_numbers() {
    let mut farm = build_farm(FarmConfig::new(2), sum_spec(1)).unwrap();
    assert_eq!(farm.feed(5).unwrap(), 0);
    assert_eq!(farm.feed(6).unwrap(), 1);
    let report = farm.finish().unwrap();
    assert_eq!(report.final_state, 11);
    assert!(report.metrics.completion_us() > 0.0);
}

#[test]
fn crate_example() {
    let spec = AccumulatorSpec::new(0i64, 8, |x: &i64, _: &i64| *x, |x: &i64| *x, |a: &i64, b: &i64| a + b);
    let farm = build_farm(FarmConfig::for_pattern(PatternKind::Accumulator, 4), spec).unwrap();
    let report = run_to_completion(farm, 1..=100).unwrap();
    assert_eq!(report.final_state, 5050);
}

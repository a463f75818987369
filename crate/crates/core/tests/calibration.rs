//! Busy-wait timing checks. One test function, so nothing else in this
//! binary competes for the core while it measures.

use std::time::{Duration, Instant};

use statefarm::workload::calibrate;

fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: ts is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    assert_eq!(rc, 0);
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

#[test]
fn calibrated_spins() {
    let table = calibrate::global().expect("calibration");
    assert!(table.iters_per_us > 0.0);

    let hundred = table.measure(100.0, 100);
    assert!((95.0..=105.0).contains(&hundred), "100 µs spin took {hundred:.2} µs");

    let zero = table.measure(0.0, 100);
    assert!(zero < 1.0, "0 µs spin took {zero:.3} µs");

    let ten_ms = table.measure(10_000.0, 5);
    assert!((9_500.0..=10_500.0).contains(&ten_ms), "10 ms spin took {ten_ms:.0} µs");

    // the spin occupies the core rather than sleeping
    let cpu0 = thread_cpu_time();
    let wall0 = Instant::now();
    calibrate::spin_us(50_000.0);
    let wall = wall0.elapsed().as_secs_f64();
    let cpu = (thread_cpu_time() - cpu0).as_secs_f64();
    assert!(cpu >= 0.9 * wall, "cpu {cpu:.4}s vs wall {wall:.4}s");
}

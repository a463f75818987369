//! Busy-wait kernel calibrated to wall-clock microseconds.
//!
//! The kernel is a counted xorshift loop. It never sleeps or yields, so a
//! spinning worker really occupies its core for the requested time.

use std::hint::black_box;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

/// Finer than this and the ±5% check at 10 µs is meaningless.
const MAX_TIMER_RESOLUTION: Duration = Duration::from_micros(1);
const TOLERANCE: f64 = 0.05;
const CHECK_TRIALS: usize = 101;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("timer resolution {0:?} is too coarse for microsecond spins")]
    TimerTooCoarse(Duration),
    #[error("a {target_us} µs spin took {measured_us:.2} µs (median), outside ±5%")]
    SelfCheck { target_us: f64, measured_us: f64 },
}

/// Run `iters` rounds of the spin kernel.
#[inline(never)]
pub fn spin_iters(iters: u64) -> u64 {
    let mut x: u64 = 0x9e37_79b9_7f4a_7c15;
    for _ in 0..iters {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        x = black_box(x);
    }
    black_box(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTable {
    pub iters_per_us: f64,
    pub timer_resolution: Duration,
}

impl CalibrationTable {
    pub fn iterations(&self, us: f64) -> u64 {
        if us <= 0.0 {
            0
        } else {
            (us * self.iters_per_us).round() as u64
        }
    }

    pub fn spin(&self, us: f64) {
        let n = self.iterations(us);
        if n > 0 {
            spin_iters(n);
        }
    }

    /// Median wall time in µs of `trials` spins of `us`.
    pub fn measure(&self, us: f64, trials: usize) -> f64 {
        let mut samples: Vec<f64> = (0..trials.max(1))
            .map(|_| {
                let start = Instant::now();
                self.spin(us);
                start.elapsed().as_secs_f64() * 1e6
            })
            .collect();
        median(&mut samples)
    }
}

pub(crate) fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..1000 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

fn iterations_per_us(window: Duration) -> f64 {
    let mut iters = 1_000u64;
    loop {
        let start = Instant::now();
        spin_iters(iters);
        let took = start.elapsed();
        if took >= window {
            return iters as f64 / (took.as_secs_f64() * 1e6);
        }
        iters *= 2;
    }
}

/// Measure the kernel's speed and verify 10 µs and 100 µs spins.
pub fn calibrate() -> Result<CalibrationTable, CalibrationError> {
    let timer_resolution = timer_resolution();
    if timer_resolution > MAX_TIMER_RESOLUTION {
        return Err(CalibrationError::TimerTooCoarse(timer_resolution));
    }
    // warm up the core before timing anything
    iterations_per_us(Duration::from_millis(20));
    let mut rates: Vec<f64> = (0..5).map(|_| iterations_per_us(Duration::from_millis(10))).collect();
    let mut table = CalibrationTable { iters_per_us: median(&mut rates), timer_resolution };

    let mut last = Ok(());
    // a preempted measurement can spoil one round; retry before giving up
    for _ in 0..3 {
        last = self_check(&mut table);
        if last.is_ok() {
            break;
        }
    }
    last.map(|()| table)
}

fn self_check(table: &mut CalibrationTable) -> Result<(), CalibrationError> {
    for target_us in [100.0, 10.0] {
        let measured_us = table.measure(target_us, CHECK_TRIALS);
        if ((measured_us - target_us) / target_us).abs() > TOLERANCE {
            table.iters_per_us *= target_us / measured_us;
            return Err(CalibrationError::SelfCheck { target_us, measured_us });
        }
    }
    Ok(())
}

static GLOBAL: OnceLock<Result<CalibrationTable, CalibrationError>> = OnceLock::new();

/// The process-wide table, calibrated on first use.
pub fn global() -> Result<&'static CalibrationTable, CalibrationError> {
    GLOBAL.get_or_init(calibrate).as_ref().map_err(Clone::clone)
}

/// Spin for `us` microseconds with the process-wide table.
///
/// # Panics
/// If calibration failed; call [`global`] first to handle that case.
pub fn spin_us(us: f64) {
    if us <= 0.0 {
        return;
    }
    match global() {
        Ok(table) => table.spin(us),
        Err(e) => panic!("busy-wait calibration failed: {e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_free() {
        let table = CalibrationTable { iters_per_us: 100.0, timer_resolution: Duration::from_nanos(50) };
        assert_eq!(table.iterations(0.0), 0);
        assert_eq!(table.iterations(-3.0), 0);
        assert_eq!(table.iterations(2.5), 250);
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

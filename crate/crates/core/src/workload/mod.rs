//! Synthetic workloads: calibrated busy-wait kernels, seeded task streams
//! and sequential reference executions.

pub mod calibrate;
pub mod oracle;
pub mod stream;
pub mod synthetic;

pub use calibrate::{calibrate, spin_us, CalibrationError, CalibrationTable};
pub use oracle::{OracleRun, SequentialOracle};
pub use stream::{make_stream, shuffle_values, KeyDist, Release, StreamParams, SyntheticTask, DEFAULT_SEED};
pub use synthetic::Oplus;

/// Physical cores available to this process: distinct (package, core)
/// pairs in the CPU topology, capped by the scheduler's allowance.
pub fn physical_cores() -> usize {
    let logical = std::thread::available_parallelism().map_or(1, |n| n.get());
    topology_cores().map_or(logical, |p| p.clamp(1, logical))
}

fn topology_cores() -> Option<usize> {
    let mut seen = std::collections::BTreeSet::new();
    for entry in std::fs::read_dir("/sys/devices/system/cpu").ok()? {
        let path = entry.ok()?.path();
        let name = path.file_name()?.to_str()?;
        if !name.strip_prefix("cpu").is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit())) {
            continue;
        }
        let read = |f: &str| std::fs::read_to_string(path.join("topology").join(f)).ok();
        if let (Some(pkg), Some(core)) = (read("physical_package_id"), read("core_id")) {
            seen.insert((pkg.trim().to_string(), core.trim().to_string()));
        }
    }
    (!seen.is_empty()).then_some(seen.len())
}

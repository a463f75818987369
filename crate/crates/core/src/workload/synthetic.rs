//! Ready-made pattern instances over [`SyntheticTask`] whose functions
//! burn the task's calibrated busy time and compute on `i64` payloads.

use std::fmt;
use std::str::FromStr;

use super::calibrate::spin_us;
use super::stream::SyntheticTask;
use crate::patterns::{AccumulatorSpec, ApproxSpec, PartitionedSpec, SeparateSpec, SerialSpec};

pub type SyntheticSerial = SerialSpec<SyntheticTask, i64, i64>;
pub type SyntheticPartitioned = PartitionedSpec<SyntheticTask, i64, i64>;
pub type SyntheticAccumulator = AccumulatorSpec<SyntheticTask, i64, i64>;
pub type SyntheticApprox = ApproxSpec<SyntheticTask, i64>;
pub type SyntheticSeparate = SeparateSpec<SyntheticTask, i64, i64>;

/// Combining operators the accumulator workloads can use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oplus {
    Add,
    Max,
    Xor,
    /// Not associative; exists to exercise the law checker.
    Sub,
}

impl Oplus {
    pub fn apply(self, a: i64, b: i64) -> i64 {
        match self {
            Oplus::Add => a.wrapping_add(b),
            Oplus::Max => a.max(b),
            Oplus::Xor => a ^ b,
            Oplus::Sub => a.wrapping_sub(b),
        }
    }

    pub fn zero(self) -> i64 {
        match self {
            Oplus::Max => i64::MIN,
            Oplus::Add | Oplus::Xor | Oplus::Sub => 0,
        }
    }
}

impl fmt::Display for Oplus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Oplus::Add => "add",
            Oplus::Max => "max",
            Oplus::Xor => "xor",
            Oplus::Sub => "sub",
        })
    }
}

impl FromStr for Oplus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "add" | "+" => Ok(Oplus::Add),
            "max" => Ok(Oplus::Max),
            "xor" => Ok(Oplus::Xor),
            "sub" | "-" => Ok(Oplus::Sub),
            other => Err(format!("unknown operator {other:?} (expected add, max, xor or sub)")),
        }
    }
}

fn mix(state: i64, value: i64) -> i64 {
    state.wrapping_mul(31).wrapping_add(value)
}

/// f spins `t_f` and reads the state; s spins `t_s` and mixes the value in.
pub fn serial() -> SyntheticSerial {
    SerialSpec::new(
        0,
        |x: &SyntheticTask, s: &i64| {
            spin_us(x.spin_f_us);
            s.wrapping_add(x.value)
        },
        |x: &SyntheticTask, s: &i64| {
            spin_us(x.spin_s_us);
            mix(*s, x.value)
        },
    )
}

/// Same functions as [`serial`], one state entry per key.
pub fn partitioned(partitions: usize) -> SyntheticPartitioned {
    PartitionedSpec::new(
        partitions,
        0,
        |x: &SyntheticTask| x.key,
        |x: &SyntheticTask, s: &i64| {
            spin_us(x.spin_f_us);
            s.wrapping_add(x.value)
        },
        |x: &SyntheticTask, s: &i64| {
            spin_us(x.spin_s_us);
            mix(*s, x.value)
        },
    )
}

/// f spins `t_f`; g is the payload; every application of ⊕, on a worker or
/// on the collector, spins `t_oplus`.
pub fn accumulator(op: Oplus, flush_every: usize, t_oplus: f64) -> SyntheticAccumulator {
    AccumulatorSpec::new(
        op.zero(),
        flush_every,
        |x: &SyntheticTask, _: &i64| {
            spin_us(x.spin_f_us);
            x.value.wrapping_mul(2)
        },
        |x: &SyntheticTask| x.value,
        move |a: &i64, b: &i64| {
            spin_us(t_oplus);
            op.apply(*a, *b)
        },
    )
}

/// Running minimum of the payloads: c spins `t_f`, s′ spins `t_s`.
pub fn approx() -> SyntheticApprox {
    ApproxSpec::minimizing(
        i64::MAX,
        |x: &SyntheticTask, s: &i64| {
            spin_us(x.spin_f_us);
            x.value < *s
        },
        |x: &SyntheticTask, _: &i64| {
            spin_us(x.spin_s_us);
            x.value
        },
    )
}

/// f squares the payload after the task's `t_f`; s adds it to the state
/// after `t_s` (s only sees f's result, so its cost is fixed here).
pub fn separate(t_s: f64) -> SyntheticSeparate {
    SeparateSpec::new(
        0,
        |x: &SyntheticTask| {
            spin_us(x.spin_f_us);
            x.value.wrapping_mul(x.value)
        },
        move |y: &i64, s: &i64| {
            spin_us(t_s);
            s.wrapping_add(*y)
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::oracle::SequentialOracle;
    use crate::workload::stream::{make_stream, StreamParams};

    #[test]
    fn oplus_names_round_trip() {
        for op in [Oplus::Add, Oplus::Max, Oplus::Xor, Oplus::Sub] {
            assert_eq!(op.to_string().parse::<Oplus>(), Ok(op));
            assert_eq!(op.apply(op.zero(), 17), if op == Oplus::Sub { -17 } else { 17 });
        }
        assert!("mul".parse::<Oplus>().is_err());
    }

    #[test]
    fn untimed_oracles() {
        let tasks = make_stream(&StreamParams::new(100));
        assert_eq!(accumulator(Oplus::Add, 4, 0.0).oracle(&tasks).final_state, 5050);
        assert_eq!(separate(0.0).oracle(&tasks).final_state, (1..=100).map(|v: i64| v * v).sum::<i64>());
        assert_eq!(approx().oracle(&tasks).outputs, vec![1]);
    }
}

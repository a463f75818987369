//! Single-threaded, in-order reference executions.

use crate::patterns::{AccumulatorSpec, ApproxSpec, PartitionedSpec, SeparateSpec, SerialSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun<O, F> {
    pub outputs: Vec<O>,
    pub final_state: F,
}

/// Runs a pattern's defining equations over the input, one task at a time.
pub trait SequentialOracle {
    type Task;
    type Output;
    type Final;

    fn oracle(&self, input: &[Self::Task]) -> OracleRun<Self::Output, Self::Final>;
}

impl<T, S: Clone, R> SequentialOracle for SerialSpec<T, S, R> {
    type Task = T;
    type Output = R;
    type Final = S;

    fn oracle(&self, input: &[T]) -> OracleRun<R, S> {
        let mut state = self.initial().clone();
        let outputs = input
            .iter()
            .map(|x| {
                let (y, next) = self.apply(x, &state);
                state = next;
                y
            })
            .collect();
        OracleRun { outputs, final_state: state }
    }
}

impl<T, S: Clone, R> SequentialOracle for PartitionedSpec<T, S, R> {
    type Task = T;
    type Output = R;
    type Final = Vec<S>;

    /// # Panics
    /// If `h` maps a task outside `[0, N)`.
    fn oracle(&self, input: &[T]) -> OracleRun<R, Vec<S>> {
        let mut v = vec![self.initial().clone(); self.partition_count()];
        let outputs = input
            .iter()
            .map(|x| {
                let k = self.key(x);
                let (y, next) = self.apply(x, &v[k]);
                v[k] = next;
                y
            })
            .collect();
        OracleRun { outputs, final_state: v }
    }
}

impl<T, S: Clone, R> SequentialOracle for AccumulatorSpec<T, S, R> {
    type Task = T;
    type Output = R;
    type Final = S;

    /// Outputs are those of a single worker with this spec's flush period.
    fn oracle(&self, input: &[T]) -> OracleRun<R, S> {
        let mut global = self.zero().clone();
        let mut local = self.zero().clone();
        let mut pending = 0;
        let mut outputs = Vec::with_capacity(input.len());
        for x in input {
            outputs.push(self.result(x, &local));
            local = self.combine(&self.contribution(x), &local);
            pending += 1;
            if pending == self.flush_every() {
                global = self.combine(&local, &global);
                local = self.zero().clone();
                pending = 0;
            }
        }
        if pending > 0 {
            global = self.combine(&local, &global);
        }
        OracleRun { outputs, final_state: global }
    }
}

impl<T, S: Clone> SequentialOracle for ApproxSpec<T, S> {
    type Task = T;
    type Output = S;
    type Final = S;

    /// Outputs are the successive improvements, in input order.
    fn oracle(&self, input: &[T]) -> OracleRun<S, S> {
        let mut best = self.initial().clone();
        let mut outputs = Vec::new();
        for x in input {
            if self.condition(x, &best) {
                let candidate = self.update(x, &best);
                if self.better(&candidate, &best) {
                    best = candidate;
                    outputs.push(best.clone());
                }
            }
        }
        OracleRun { outputs, final_state: best }
    }
}

impl<T, Y, S: Clone> SequentialOracle for SeparateSpec<T, Y, S> {
    type Task = T;
    type Output = S;
    type Final = S;

    fn oracle(&self, input: &[T]) -> OracleRun<S, S> {
        let mut state = self.initial().clone();
        let mut outputs = Vec::new();
        for x in input {
            let y = self.task_fn(x);
            state = self.state_fn(&y, &state);
            if self.emits(&state) {
                outputs.push(state.clone());
            }
        }
        OracleRun { outputs, final_state: state }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_product_recurrence() {
        let spec = SerialSpec::new(1i64, |x: &i64, s: &i64| x * s, |_: &i64, s: &i64| s + 1);
        let run = spec.oracle(&[5, 6]);
        assert_eq!(run.outputs, vec![5, 12]);
        assert_eq!(run.final_state, 3);
    }

    #[test]
    fn partitioned_counting() {
        let spec = PartitionedSpec::new(4, 0u32, |x: &usize| x % 4, |_: &usize, v: &u32| *v, |_: &usize, v: &u32| v + 1);
        let input: Vec<usize> = (0..16).collect();
        assert_eq!(spec.oracle(&input).final_state, vec![4, 4, 4, 4]);
    }

    #[test]
    fn approx_prefix_minima() {
        let spec = ApproxSpec::minimizing(i64::MAX, |x: &i64, s: &i64| x < s, |x: &i64, _: &i64| *x);
        let run = spec.oracle(&[7, 9, 3, 5, 3, 1, 8]);
        assert_eq!(run.outputs, vec![7, 3, 1]);
        assert_eq!(run.final_state, 1);
    }

    #[test]
    fn accumulator_flush_resets_local_view() {
        let spec = AccumulatorSpec::new(0i64, 2, |_: &i64, s: &i64| *s, |x: &i64| *x, |a: &i64, b: &i64| a + b);
        let run = spec.oracle(&[1, 2, 3, 4, 5]);
        assert_eq!(run.outputs, vec![0, 1, 0, 3, 0]);
        assert_eq!(run.final_state, 15);
    }

    #[test]
    fn separate_squares() {
        let spec = SeparateSpec::new(0i64, |x: &i64| x * x, |y: &i64, s: &i64| s + y);
        let run = spec.oracle(&[1, 2, 3]);
        assert_eq!(run.outputs, vec![1, 5, 14]);
        let filtered = SeparateSpec::new(0i64, |x: &i64| x * x, |y: &i64, s: &i64| s + y).emit_when(|s| *s > 10);
        assert_eq!(filtered.oracle(&[1, 2, 3]).outputs, vec![14]);
    }
}

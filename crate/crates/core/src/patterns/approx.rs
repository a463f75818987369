use std::cmp::Ordering;

use super::{CollectorSink, LocalInit, PatternKind, StatePattern, WorkerSink};

/// How a worker added by `grow` initializes its local copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrowStart {
    /// Start from the last global value broadcast by the collector.
    #[default]
    Global,
    /// Start from the initial value and catch up through feedback.
    Initial,
}

/// A worker's proposal for a new global value.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<S> {
    pub seq: u64,
    pub value: S,
}

/// Successive approximation: the global state only ever improves.
///
/// Workers test `c(x, ls)` against their local copy `ls` and send
/// `s′(x, ls)` when it holds. The collector accepts a candidate only if it
/// is strictly better than the current global value under `order`, emits
/// it and broadcasts it back to the workers.
pub struct ApproxSpec<T, S> {
    condition: Box<dyn Fn(&T, &S) -> bool + Send + Sync>,
    update: Box<dyn Fn(&T, &S) -> S + Send + Sync>,
    order: Box<dyn Fn(&S, &S) -> Ordering + Send + Sync>,
    init: S,
    grow_start: GrowStart,
}

impl<T, S: Ord + 'static> ApproxSpec<T, S> {
    /// Successive minima under `S`'s natural order.
    pub fn minimizing(
        init: S,
        condition: impl Fn(&T, &S) -> bool + Send + Sync + 'static,
        update: impl Fn(&T, &S) -> S + Send + Sync + 'static,
    ) -> Self {
        Self::with_order(init, condition, update, S::cmp)
    }
}

impl<T, S> ApproxSpec<T, S> {
    /// `order` must be a total order; "better" means `Ordering::Less`.
    pub fn with_order(
        init: S,
        condition: impl Fn(&T, &S) -> bool + Send + Sync + 'static,
        update: impl Fn(&T, &S) -> S + Send + Sync + 'static,
        order: impl Fn(&S, &S) -> Ordering + Send + Sync + 'static,
    ) -> Self {
        Self {
            condition: Box::new(condition),
            update: Box::new(update),
            order: Box::new(order),
            init,
            grow_start: GrowStart::Global,
        }
    }

    pub fn grow_start(mut self, start: GrowStart) -> Self {
        self.grow_start = start;
        self
    }

    pub fn initial(&self) -> &S {
        &self.init
    }

    pub fn condition(&self, task: &T, state: &S) -> bool {
        (self.condition)(task, state)
    }

    pub fn update(&self, task: &T, state: &S) -> S {
        (self.update)(task, state)
    }

    pub fn better(&self, a: &S, b: &S) -> bool {
        (self.order)(a, b) == Ordering::Less
    }
}

impl<T, S> StatePattern for ApproxSpec<T, S>
where
    T: Send + 'static,
    S: Clone + Send + Sync + 'static,
{
    type Task = T;
    type Output = S;
    type Message = Candidate<S>;
    type Feedback = S;
    type Local = S;
    type Shared = ();
    type Global = S;
    type Transfer = ();
    type Final = S;

    fn kind(&self) -> PatternKind {
        PatternKind::Approx
    }

    fn requires_feedback(&self) -> bool {
        true
    }

    fn new_shared(&self) {}

    fn new_local(&self, _shared: &(), init: &LocalInit<'_, S>) -> S {
        match (self.grow_start, init.latest_feedback) {
            (GrowStart::Global, Some(latest)) => latest.clone(),
            _ => self.init.clone(),
        }
    }

    fn process(
        &self,
        _shared: &(),
        local: &mut S,
        seq: u64,
        task: T,
        sink: &mut dyn WorkerSink<S, Candidate<S>>,
    ) {
        if !(self.condition)(&task, local) {
            return;
        }
        let value = (self.update)(&task, local);
        if self.better(&value, local) {
            *local = value.clone();
        }
        sink.message(Candidate { seq, value });
    }

    fn on_feedback(&self, local: &mut S, value: &S) {
        // A worker may already hold a better candidate still in flight.
        if self.better(value, local) {
            *local = value.clone();
        }
    }

    fn export(&self, _local: &mut S, _partitions: Option<&[usize]>) {}

    fn import(&self, _local: &mut S, _transfer: ()) {}

    fn new_global(&self) -> S {
        self.init.clone()
    }

    fn collect(&self, global: &mut S, message: Candidate<S>, sink: &mut dyn CollectorSink<S, S>) {
        if self.better(&message.value, global) {
            *global = message.value.clone();
            sink.output(message.seq, message.value.clone());
            sink.feedback(message.value);
        } else {
            sink.discarded();
        }
    }

    fn finish(&self, _shared: &(), global: S) -> S {
        global
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Default)]
    struct Capture {
        outputs: Vec<(u64, i64)>,
        feedback: Vec<i64>,
        discarded: usize,
    }

    impl CollectorSink<i64, i64> for Capture {
        fn output(&mut self, seq: u64, value: i64) {
            self.outputs.push((seq, value));
        }
        fn feedback(&mut self, value: i64) {
            self.feedback.push(value);
        }
        fn discarded(&mut self) {
            self.discarded += 1;
        }
    }

    fn min_spec() -> ApproxSpec<i64, i64> {
        ApproxSpec::minimizing(i64::MAX, |x: &i64, s: &i64| x < s, |x: &i64, _| *x)
    }

    #[test]
    fn equal_candidate_is_discarded() {
        let spec = min_spec();
        let mut global = spec.new_global();
        let mut sink = Capture::default();
        spec.collect(&mut global, Candidate { seq: 3, value: 5 }, &mut sink);
        spec.collect(&mut global, Candidate { seq: 9, value: 5 }, &mut sink);
        spec.collect(&mut global, Candidate { seq: 4, value: 8 }, &mut sink);
        assert_eq!(global, 5);
        assert_eq!(sink.outputs, vec![(3, 5)]);
        assert_eq!(sink.feedback, vec![5]);
        assert_eq!(sink.discarded, 2);
    }

    #[test]
    fn grow_start_modes() {
        let latest = 17;
        let init = LocalInit { partitions: &[], latest_feedback: Some(&latest) };
        assert_eq!(min_spec().new_local(&(), &init), 17);
        assert_eq!(min_spec().grow_start(GrowStart::Initial).new_local(&(), &init), i64::MAX);
        let none = LocalInit { partitions: &[], latest_feedback: None };
        assert_eq!(min_spec().new_local(&(), &none), i64::MAX);
    }

    #[test]
    fn feedback_never_worsens_local() {
        let spec = min_spec();
        let mut local = 3;
        spec.on_feedback(&mut local, &10);
        assert_eq!(local, 3);
        spec.on_feedback(&mut local, &1);
        assert_eq!(local, 1);
    }
}

use super::{CollectorSink, LocalInit, PatternKind, StatePattern, TaskFn, WorkerSink};

type Combine<S> = Box<dyn Fn(&S, &S) -> S + Send + Sync>;

/// Accumulator state: `s(x, s) = g(x) ⊕ s` with `⊕` associative and
/// commutative.
///
/// Every worker folds into a private value starting at the identity and
/// ships it to the collector every `flush_every` tasks. Per-task results
/// see only the worker's private value, never the global one.
pub struct AccumulatorSpec<T, S, R> {
    f: TaskFn<T, S, R>,
    g: Box<dyn Fn(&T) -> S + Send + Sync>,
    oplus: Combine<S>,
    zero: S,
    flush_every: usize,
}

impl<T, S, R> AccumulatorSpec<T, S, R> {
    /// `flush_every` of 0 is treated as 1.
    pub fn new(
        zero: S,
        flush_every: usize,
        f: impl Fn(&T, &S) -> R + Send + Sync + 'static,
        g: impl Fn(&T) -> S + Send + Sync + 'static,
        oplus: impl Fn(&S, &S) -> S + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Box::new(f),
            g: Box::new(g),
            oplus: Box::new(oplus),
            zero,
            flush_every: flush_every.max(1),
        }
    }

    pub fn flush_every(&self) -> usize {
        self.flush_every
    }

    pub fn zero(&self) -> &S {
        &self.zero
    }

    pub fn combine(&self, a: &S, b: &S) -> S {
        (self.oplus)(a, b)
    }

    pub fn contribution(&self, task: &T) -> S {
        (self.g)(task)
    }

    pub fn result(&self, task: &T, state: &S) -> R {
        (self.f)(task, state)
    }
}

/// A worker's private accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorLocal<S> {
    pub value: S,
    /// Tasks folded into `value` since the last flush.
    pub pending: usize,
}

/// Local value handed from a merged-away worker to the survivor.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorTransfer<S> {
    pub value: S,
    pub pending: usize,
}

impl<T, S, R> StatePattern for AccumulatorSpec<T, S, R>
where
    T: Send + 'static,
    S: Clone + Send + Sync + 'static,
    R: Send + 'static,
{
    type Task = T;
    type Output = R;
    type Message = S;
    type Feedback = ();
    type Local = AccumulatorLocal<S>;
    type Shared = ();
    type Global = S;
    type Transfer = AccumulatorTransfer<S>;
    type Final = S;

    fn kind(&self) -> PatternKind {
        PatternKind::Accumulator
    }

    fn new_shared(&self) {}

    fn new_local(&self, _shared: &(), _init: &LocalInit<'_, ()>) -> Self::Local {
        AccumulatorLocal { value: self.zero.clone(), pending: 0 }
    }

    fn process(
        &self,
        _shared: &(),
        local: &mut Self::Local,
        _seq: u64,
        task: T,
        sink: &mut dyn WorkerSink<R, S>,
    ) {
        let out = (self.f)(&task, &local.value);
        local.value = (self.oplus)(&(self.g)(&task), &local.value);
        local.pending += 1;
        sink.output(out);
        if local.pending >= self.flush_every {
            local.pending = 0;
            sink.message(std::mem::replace(&mut local.value, self.zero.clone()));
        }
    }

    fn flush(&self, local: &mut Self::Local, sink: &mut dyn WorkerSink<R, S>) {
        if local.pending > 0 {
            local.pending = 0;
            sink.message(std::mem::replace(&mut local.value, self.zero.clone()));
        }
    }

    fn export(&self, local: &mut Self::Local, _partitions: Option<&[usize]>) -> Self::Transfer {
        let pending = std::mem::take(&mut local.pending);
        AccumulatorTransfer { value: std::mem::replace(&mut local.value, self.zero.clone()), pending }
    }

    fn import(&self, local: &mut Self::Local, transfer: Self::Transfer) {
        local.value = (self.oplus)(&local.value, &transfer.value);
        local.pending += transfer.pending;
    }

    fn new_global(&self) -> S {
        self.zero.clone()
    }

    fn collect(&self, global: &mut S, message: S, _sink: &mut dyn CollectorSink<R, ()>) {
        *global = (self.oplus)(&message, global);
    }

    fn finish(&self, _shared: &(), global: S) -> S {
        global
    }
}

use std::sync::Mutex;

use super::{CollectorSink, LocalInit, PatternKind, StatePattern, WorkerSink};

/// Separate task and state functions: `y = f(x)` runs without touching
/// state, then `s(y, σ)` is applied to the shared state under a lock.
///
/// Every new state value is put on the output stream, or only those that
/// satisfy the optional emit condition.
pub struct SeparateSpec<T, Y, S> {
    f: Box<dyn Fn(&T) -> Y + Send + Sync>,
    s: Box<dyn Fn(&Y, &S) -> S + Send + Sync>,
    s0: S,
    emit_when: Option<Box<dyn Fn(&S) -> bool + Send + Sync>>,
}

impl<T, Y, S> SeparateSpec<T, Y, S> {
    pub fn new(
        s0: S,
        f: impl Fn(&T) -> Y + Send + Sync + 'static,
        s: impl Fn(&Y, &S) -> S + Send + Sync + 'static,
    ) -> Self {
        Self { f: Box::new(f), s: Box::new(s), s0, emit_when: None }
    }

    pub fn emit_when(mut self, cond: impl Fn(&S) -> bool + Send + Sync + 'static) -> Self {
        self.emit_when = Some(Box::new(cond));
        self
    }

    pub fn initial(&self) -> &S {
        &self.s0
    }

    pub fn task_fn(&self, task: &T) -> Y {
        (self.f)(task)
    }

    pub fn state_fn(&self, y: &Y, state: &S) -> S {
        (self.s)(y, state)
    }

    pub fn emits(&self, state: &S) -> bool {
        self.emit_when.as_ref().is_none_or(|c| c(state))
    }
}

impl<T, Y, S> StatePattern for SeparateSpec<T, Y, S>
where
    T: Send + 'static,
    Y: 'static,
    S: Clone + Send + Sync + 'static,
{
    type Task = T;
    type Output = S;
    type Message = ();
    type Feedback = ();
    type Local = ();
    type Shared = Mutex<S>;
    type Global = ();
    type Transfer = ();
    type Final = S;

    fn kind(&self) -> PatternKind {
        PatternKind::Separate
    }

    fn requires_collector(&self) -> bool {
        false
    }

    fn new_shared(&self) -> Mutex<S> {
        Mutex::new(self.s0.clone())
    }

    fn new_local(&self, _shared: &Mutex<S>, _init: &LocalInit<'_, ()>) {}

    fn process(
        &self,
        shared: &Mutex<S>,
        _local: &mut (),
        _seq: u64,
        task: T,
        sink: &mut dyn WorkerSink<S, ()>,
    ) {
        let y = (self.f)(&task);
        let mut state = shared.lock().unwrap_or_else(|e| e.into_inner());
        let next = (self.s)(&y, &state);
        *state = next.clone();
        // emitted under the lock so the output order is the update order
        if self.emits(&next) {
            sink.output(next);
        }
    }

    fn export(&self, _local: &mut (), _partitions: Option<&[usize]>) {}

    fn import(&self, _local: &mut (), _transfer: ()) {}

    fn new_global(&self) {}

    fn collect(&self, _global: &mut (), _message: (), _sink: &mut dyn CollectorSink<S, ()>) {}

    fn finish(&self, shared: &Mutex<S>, _global: ()) -> S {
        shared.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

use std::sync::{Condvar, Mutex, MutexGuard};

use super::{LocalInit, PatternKind, StatePattern, TaskFn, WorkerSink};

/// Serial state access: every task reads the state left by the previous
/// task and writes the next one.
///
/// Output `i` is `f(x_i, s_{i-1})` and the state becomes `s(x_i, s_{i-1})`.
/// Workers take turns on a [`SequencedCell`] in input order, holding it for
/// both `f` and `s`, so the farm cannot run faster than one worker.
pub struct SerialSpec<T, S, R> {
    f: TaskFn<T, S, R>,
    s: TaskFn<T, S, S>,
    s0: S,
}

impl<T, S, R> SerialSpec<T, S, R> {
    pub fn new(
        s0: S,
        f: impl Fn(&T, &S) -> R + Send + Sync + 'static,
        s: impl Fn(&T, &S) -> S + Send + Sync + 'static,
    ) -> Self {
        Self { f: Box::new(f), s: Box::new(s), s0 }
    }

    pub fn initial(&self) -> &S {
        &self.s0
    }

    pub fn apply(&self, task: &T, state: &S) -> (R, S) {
        ((self.f)(task, state), (self.s)(task, state))
    }
}

struct Turn<S> {
    next_seq: u64,
    state: S,
    aborted: bool,
}

/// Mutually exclusive state cell that admits tasks strictly by sequence
/// number.
pub struct SequencedCell<S> {
    turn: Mutex<Turn<S>>,
    ready: Condvar,
}

impl<S> SequencedCell<S> {
    pub fn new(state: S) -> Self {
        Self {
            turn: Mutex::new(Turn { next_seq: 0, state, aborted: false }),
            ready: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Turn<S>> {
        self.turn.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Run `body` on the state once every task before `seq` has run.
    /// Returns `None` if the cell was aborted while waiting.
    pub fn with_turn<R>(&self, seq: u64, body: impl FnOnce(&mut S) -> R) -> Option<R> {
        let mut guard = self.lock();
        while guard.next_seq != seq && !guard.aborted {
            guard = self.ready.wait(guard).unwrap_or_else(|e| e.into_inner());
        }
        if guard.aborted {
            return None;
        }
        let out = body(&mut guard.state);
        guard.next_seq += 1;
        drop(guard);
        self.ready.notify_all();
        Some(out)
    }

    pub fn abort(&self) {
        self.lock().aborted = true;
        self.ready.notify_all();
    }

    pub fn snapshot(&self) -> S
    where
        S: Clone,
    {
        self.lock().state.clone()
    }
}

impl<T, S, R> StatePattern for SerialSpec<T, S, R>
where
    T: Send + 'static,
    S: Clone + Send + Sync + 'static,
    R: Send + 'static,
{
    type Task = T;
    type Output = R;
    type Message = ();
    type Feedback = ();
    type Local = ();
    type Shared = SequencedCell<S>;
    type Global = ();
    type Transfer = ();
    type Final = S;

    fn kind(&self) -> PatternKind {
        PatternKind::Serial
    }

    fn new_shared(&self) -> Self::Shared {
        SequencedCell::new(self.s0.clone())
    }

    fn new_local(&self, _shared: &Self::Shared, _init: &LocalInit<'_, ()>) {}

    fn process(
        &self,
        shared: &Self::Shared,
        _local: &mut (),
        seq: u64,
        task: T,
        sink: &mut dyn WorkerSink<R, ()>,
    ) {
        let result = shared.with_turn(seq, |state| {
            let out = (self.f)(&task, state);
            *state = (self.s)(&task, state);
            out
        });
        if let Some(out) = result {
            sink.output(out);
        }
    }

    fn export(&self, _local: &mut (), _partitions: Option<&[usize]>) {}

    fn import(&self, _local: &mut (), _transfer: ()) {}

    fn new_global(&self) {}

    fn collect(&self, _global: &mut (), _message: (), _sink: &mut dyn super::CollectorSink<R, ()>) {}

    fn finish(&self, shared: &Self::Shared, _global: ()) -> S {
        shared.snapshot()
    }

    fn abort(&self, shared: &Self::Shared) {
        shared.abort();
    }
}

use std::collections::BTreeMap;

use super::{CollectorSink, LocalInit, PatternKind, StatePattern, TaskFn, WorkerSink};

/// Fully partitioned state: a vector of `N` values, task `x` touches only
/// entry `h(x)`.
///
/// Each worker holds the entries it owns. At end of stream workers hand
/// their entries to the collector, which assembles the final vector.
pub struct PartitionedSpec<T, S, R> {
    f: TaskFn<T, S, R>,
    s: TaskFn<T, S, S>,
    h: Box<dyn Fn(&T) -> usize + Send + Sync>,
    partitions: usize,
    s_init: S,
}

impl<T, S, R> PartitionedSpec<T, S, R> {
    pub fn new(
        partitions: usize,
        s_init: S,
        h: impl Fn(&T) -> usize + Send + Sync + 'static,
        f: impl Fn(&T, &S) -> R + Send + Sync + 'static,
        s: impl Fn(&T, &S) -> S + Send + Sync + 'static,
    ) -> Self {
        Self { f: Box::new(f), s: Box::new(s), h: Box::new(h), partitions, s_init }
    }

    pub fn partition_count(&self) -> usize {
        self.partitions
    }

    pub fn initial(&self) -> &S {
        &self.s_init
    }

    pub fn key(&self, task: &T) -> usize {
        (self.h)(task)
    }

    pub fn apply(&self, task: &T, state: &S) -> (R, S) {
        ((self.f)(task, state), (self.s)(task, state))
    }
}

impl<T, S, R> StatePattern for PartitionedSpec<T, S, R>
where
    T: Send + 'static,
    S: Clone + Send + Sync + 'static,
    R: Send + 'static,
{
    type Task = T;
    type Output = R;
    type Message = Vec<(usize, S)>;
    type Feedback = ();
    type Local = BTreeMap<usize, S>;
    type Shared = ();
    type Global = Vec<Option<S>>;
    type Transfer = Vec<(usize, S)>;
    type Final = Vec<S>;

    fn kind(&self) -> PatternKind {
        PatternKind::Partitioned
    }

    fn partitions(&self) -> Option<usize> {
        Some(self.partitions)
    }

    fn route(&self, task: &T) -> Option<usize> {
        Some((self.h)(task))
    }

    fn new_shared(&self) {}

    fn new_local(&self, _shared: &(), init: &LocalInit<'_, ()>) -> Self::Local {
        init.partitions.iter().map(|&i| (i, self.s_init.clone())).collect()
    }

    fn process(
        &self,
        _shared: &(),
        local: &mut Self::Local,
        _seq: u64,
        task: T,
        sink: &mut dyn WorkerSink<R, Self::Message>,
    ) {
        let key = (self.h)(&task);
        let entry = local
            .get_mut(&key)
            .unwrap_or_else(|| panic!("partition {key} routed to a worker that does not hold it"));
        let out = (self.f)(&task, entry);
        *entry = (self.s)(&task, entry);
        sink.output(out);
    }

    fn flush(&self, local: &mut Self::Local, sink: &mut dyn WorkerSink<R, Self::Message>) {
        if !local.is_empty() {
            sink.message(std::mem::take(local).into_iter().collect());
        }
    }

    fn export(&self, local: &mut Self::Local, partitions: Option<&[usize]>) -> Self::Transfer {
        match partitions {
            None => std::mem::take(local).into_iter().collect(),
            Some(keys) => keys
                .iter()
                .map(|k| {
                    let v = local
                        .remove(k)
                        .unwrap_or_else(|| panic!("partition {k} exported by a worker that does not hold it"));
                    (*k, v)
                })
                .collect(),
        }
    }

    fn import(&self, local: &mut Self::Local, transfer: Self::Transfer) {
        for (k, v) in transfer {
            let previous = local.insert(k, v);
            assert!(previous.is_none(), "partition {k} imported twice");
        }
    }

    fn new_global(&self) -> Self::Global {
        vec![None; self.partitions]
    }

    fn collect(
        &self,
        global: &mut Self::Global,
        message: Self::Message,
        _sink: &mut dyn CollectorSink<R, ()>,
    ) {
        for (k, v) in message {
            let slot = &mut global[k];
            assert!(slot.is_none(), "partition {k} delivered to the collector twice");
            *slot = Some(v);
        }
    }

    fn finish(&self, _shared: &(), global: Self::Global) -> Vec<S> {
        global
            .into_iter()
            .map(|v| v.unwrap_or_else(|| self.s_init.clone()))
            .collect()
    }
}

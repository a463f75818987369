use std::sync::atomic::Ordering;
use std::sync::Arc;

use crossbeam_channel::{Receiver, Sender};

use super::{catch, Activity, FarmCtx, Returned, StreamItem, ToCollector, ToWorker, WorkerStats};
use crate::patterns::{LocalInit, StatePattern, WorkerSink};

struct Sink<'a, P: StatePattern> {
    ctx: &'a FarmCtx<P>,
    collector: Option<&'a Sender<ToCollector<P>>>,
    seq: u64,
    answered: bool,
}

impl<P: StatePattern> WorkerSink<P::Output, P::Message> for Sink<'_, P> {
    fn output(&mut self, value: P::Output) {
        debug_assert!(!self.answered, "more than one output for task {}", self.seq);
        self.answered = true;
        match self.collector {
            Some(c) => {
                let _ = c.send(ToCollector::Done { seq: self.seq, output: Some(value) });
            }
            None => {
                let _ = self.ctx.outputs.send(StreamItem { seq: self.seq, value });
            }
        }
    }

    fn message(&mut self, message: P::Message) {
        match self.collector {
            Some(c) => {
                let _ = c.send(ToCollector::State(message));
            }
            None => panic!("state message sent without a collector"),
        }
    }
}

impl<P: StatePattern> Sink<'_, P> {
    fn begin(&mut self, seq: u64) {
        self.seq = seq;
        self.answered = false;
    }

    /// Every task is acknowledged to the collector exactly once, so the
    /// reorder buffer never waits for a task that produced nothing.
    fn complete(&mut self) {
        if !self.answered {
            if let Some(c) = self.collector {
                let _ = c.send(ToCollector::Done { seq: self.seq, output: None });
            }
        }
        self.answered = true;
    }
}

#[cfg(target_os = "linux")]
fn pin_to_core(id: usize) {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    // SAFETY: cpu_set_t is plain data; sched_setaffinity only reads it.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(id % cores, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set);
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_to_core(_id: usize) {}

pub(crate) fn run<P: StatePattern>(
    ctx: Arc<FarmCtx<P>>,
    id: usize,
    queue: Receiver<ToWorker<P>>,
    collector: Option<Sender<ToCollector<P>>>,
    returns: Sender<Returned<P>>,
    partitions: Vec<usize>,
    latest: Option<P::Feedback>,
) -> WorkerStats {
    if ctx.config.pin_workers {
        pin_to_core(id);
    }
    let pattern = &ctx.pattern;
    let shared = &ctx.shared;
    let trace = ctx.config.trace;
    let mut stats = WorkerStats { id, ..Default::default() };

    if let Some(own) = &ctx.ownership {
        for &p in &partitions {
            own.claim(p, id);
        }
    }
    let init = LocalInit { partitions: &partitions, latest_feedback: latest.as_ref() };
    let mut local = pattern.new_local(shared, &init);
    let mut sink = Sink { ctx: &ctx, collector: collector.as_ref(), seq: 0, answered: true };

    while let Ok(msg) = queue.recv() {
        match msg {
            ToWorker::Task { seq, task } => {
                if ctx.aborted() {
                    continue;
                }
                if let Some(own) = &ctx.ownership {
                    if let Ok(Some(key)) = catch(|| pattern.route(&task)) {
                        own.check(key, id);
                    }
                }
                sink.begin(seq);
                match catch(|| pattern.process(shared, &mut local, seq, task, &mut sink)) {
                    Ok(()) => {
                        sink.complete();
                        stats.processed += 1;
                        if trace {
                            stats.processed_log.push(seq);
                        }
                    }
                    Err(message) => {
                        sink.complete();
                        stats.failure = Some(message.clone());
                        ctx.abort(Activity::Worker(id), message);
                    }
                }
            }
            ToWorker::Feedback { index, value } => {
                pattern.on_feedback(&mut local, &value);
                stats.feedback_received += 1;
                if trace {
                    stats.feedback_log.push(index);
                }
            }
            ToWorker::Export { tag, partitions } => {
                if let Some(own) = &ctx.ownership {
                    for &p in &partitions {
                        own.release(p, id);
                    }
                }
                match catch(|| pattern.export(&mut local, Some(&partitions))) {
                    Ok(transfer) => {
                        let _ = returns.send(Returned { tag, transfer });
                    }
                    Err(message) => ctx.abort(Activity::Worker(id), message),
                }
            }
            ToWorker::Import { partitions, transfer } => {
                if let Some(own) = &ctx.ownership {
                    for &p in &partitions {
                        own.claim(p, id);
                    }
                }
                if let Err(message) = catch(|| pattern.import(&mut local, transfer)) {
                    ctx.abort(Activity::Worker(id), message);
                }
            }
            ToWorker::Absorb { tag } => {
                let transfer = pattern.export(&mut local, None);
                let _ = returns.send(Returned { tag, transfer });
                break;
            }
            ToWorker::Retire | ToWorker::EndOfStream => {
                if !ctx.aborted() {
                    if let Err(message) = catch(|| pattern.flush(&mut local, &mut sink)) {
                        ctx.abort(Activity::Worker(id), message);
                    }
                }
                break;
            }
        }
    }

    if let Some(own) = &ctx.ownership {
        own.release_all(id);
    }
    if let Some(c) = &collector {
        let _ = c.send(ToCollector::Eos);
    }
    ctx.live_workers.fetch_sub(1, Ordering::AcqRel);
    stats
}

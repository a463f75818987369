use std::collections::BTreeMap;
use std::sync::Arc;

use crossbeam_channel::{Receiver, Sender};

use super::{catch, Activity, FarmCtx, StreamItem, ToCollector};
use crate::patterns::{CollectorSink, StatePattern};

pub(crate) struct CollectorReport<F> {
    pub(crate) final_state: F,
    pub(crate) state_messages: u64,
    pub(crate) discarded: u64,
}

/// Holds results that arrive ahead of an earlier sequence number.
struct ReorderBuffer<O> {
    next: u64,
    waiting: BTreeMap<u64, Option<O>>,
}

impl<O> ReorderBuffer<O> {
    fn new() -> Self {
        Self { next: 0, waiting: BTreeMap::new() }
    }

    fn push(&mut self, seq: u64, value: Option<O>, out: &Sender<StreamItem<O>>) {
        self.waiting.insert(seq, value);
        while let Some(value) = self.waiting.remove(&self.next) {
            if let Some(value) = value {
                let _ = out.send(StreamItem { seq: self.next, value });
            }
            self.next += 1;
        }
    }

    /// Release whatever is left after a failure, in order.
    fn flush(&mut self, out: &Sender<StreamItem<O>>) {
        for (seq, value) in std::mem::take(&mut self.waiting) {
            if let Some(value) = value {
                let _ = out.send(StreamItem { seq, value });
            }
        }
    }
}

struct Sink<'a, O, F> {
    outputs: &'a Sender<StreamItem<O>>,
    feedback: Option<&'a Sender<F>>,
    discarded: u64,
}

impl<O, F> CollectorSink<O, F> for Sink<'_, O, F> {
    fn output(&mut self, seq: u64, value: O) {
        let _ = self.outputs.send(StreamItem { seq, value });
    }

    fn feedback(&mut self, value: F) {
        if let Some(tx) = self.feedback {
            let _ = tx.send(value);
        }
    }

    fn discarded(&mut self) {
        self.discarded += 1;
    }
}

pub(crate) fn run<P: StatePattern>(
    ctx: Arc<FarmCtx<P>>,
    rx: Receiver<ToCollector<P>>,
    feedback: Option<Sender<P::Feedback>>,
) -> CollectorReport<P::Final> {
    let pattern = &ctx.pattern;
    let mut global = pattern.new_global();
    let mut reorder = ctx.config.preserve_order.then(ReorderBuffer::new);
    let mut sink = Sink { outputs: &ctx.outputs, feedback: feedback.as_ref(), discarded: 0 };
    let mut state_messages = 0u64;
    let mut eos = 0usize;
    let mut spawned: Option<usize> = None;

    while spawned != Some(eos) {
        let Ok(msg) = rx.recv() else { break };
        match msg {
            ToCollector::Done { seq, output } => match &mut reorder {
                Some(buf) => buf.push(seq, output, &ctx.outputs),
                None => {
                    if let Some(value) = output {
                        let _ = ctx.outputs.send(StreamItem { seq, value });
                    }
                }
            },
            ToCollector::Rejected { seq } => {
                if let Some(buf) = &mut reorder {
                    buf.push(seq, None, &ctx.outputs);
                }
            }
            ToCollector::State(message) => {
                state_messages += 1;
                if ctx.aborted() {
                    continue;
                }
                if let Err(message) = catch(|| pattern.collect(&mut global, message, &mut sink)) {
                    ctx.abort(Activity::Collector, message);
                }
            }
            ToCollector::Eos => eos += 1,
            ToCollector::EmitterDone { spawned: n } => spawned = Some(n),
        }
    }

    if let Some(buf) = &mut reorder {
        // tasks discarded after an abort never report back
        buf.flush(&ctx.outputs);
    }
    let discarded = sink.discarded;
    drop(feedback);
    let final_state = pattern.finish(&ctx.shared, global);
    CollectorReport { final_state, state_messages, discarded }
}

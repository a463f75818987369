use std::collections::BTreeMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crossbeam_channel::{bounded, select, unbounded, Receiver, Select, Sender};

use super::{
    catch, worker, Activity, FarmCtx, Rejection, Returned, Route, Scheduler, ToCollector, ToEmitter, ToWorker,
    WorkerStats,
};
use crate::adaptivity::{plan_migration, AdaptivityError, MigrationPlan, PartitionMap};
use crate::patterns::{PatternKind, StatePattern};

pub(crate) struct EmitterReport {
    pub(crate) workers: Vec<WorkerStats>,
    pub(crate) broadcasts: u64,
    pub(crate) migrated: u64,
    pub(crate) rejected: Vec<Rejection>,
}

struct Slot<P: StatePattern> {
    id: usize,
    tx: Sender<ToWorker<P>>,
}

pub(crate) struct Emitter<P: StatePattern> {
    ctx: Arc<FarmCtx<P>>,
    workers: Vec<Slot<P>>,
    handles: Vec<JoinHandle<WorkerStats>>,
    scheduler: Scheduler,
    map: Option<PartitionMap>,
    collector: Option<Sender<ToCollector<P>>>,
    feedback: Option<Receiver<P::Feedback>>,
    acks: Sender<Result<usize, AdaptivityError>>,
    returns_tx: Sender<Returned<P>>,
    returns_rx: Receiver<Returned<P>>,
    latest: Option<P::Feedback>,
    next_seq: u64,
    broadcasts: u64,
    migrated: u64,
    rejected: Vec<Rejection>,
}

impl<P: StatePattern> Emitter<P> {
    pub(crate) fn new(
        ctx: Arc<FarmCtx<P>>,
        collector: Option<Sender<ToCollector<P>>>,
        feedback: Option<Receiver<P::Feedback>>,
        acks: Sender<Result<usize, AdaptivityError>>,
        map: Option<PartitionMap>,
    ) -> Self {
        let (returns_tx, returns_rx) = unbounded();
        let scheduler = Scheduler::new(ctx.config.scheduling);
        Self {
            ctx,
            workers: Vec::new(),
            handles: Vec::new(),
            scheduler,
            map,
            collector,
            feedback,
            acks,
            returns_tx,
            returns_rx,
            latest: None,
            next_seq: 0,
            broadcasts: 0,
            migrated: 0,
            rejected: Vec::new(),
        }
    }

    pub(crate) fn spawn_initial(&mut self) {
        for position in 0..self.ctx.config.n_workers {
            let partitions = match &self.map {
                Some(map) => map.owned_by(position).collect(),
                None => Vec::new(),
            };
            self.spawn_worker(partitions);
        }
    }

    fn spawn_worker(&mut self, partitions: Vec<usize>) {
        let id = self.handles.len();
        let (tx, rx) = bounded(self.ctx.config.queue_capacity);
        let ctx = Arc::clone(&self.ctx);
        let collector = self.collector.clone();
        let returns = self.returns_tx.clone();
        let latest = self.latest.clone();
        ctx.live_workers.fetch_add(1, Ordering::AcqRel);
        let handle = thread::Builder::new()
            .name(format!("farm-worker-{id}"))
            .spawn(move || worker::run(ctx, id, rx, collector, returns, partitions, latest))
            .expect("spawn worker");
        self.handles.push(handle);
        self.workers.push(Slot { id, tx });
    }

    pub(crate) fn run(mut self, input: Receiver<ToEmitter<P>>) -> EmitterReport {
        loop {
            // feedback first: it is cheap and speeds up convergence
            self.drain_feedback();
            let msg = match self.feedback.clone() {
                Some(fb) => select! {
                    recv(input) -> msg => msg.unwrap_or(ToEmitter::End),
                    recv(fb) -> value => match value {
                        Ok(value) => ToEmitter::Broadcast(value),
                        Err(_) => {
                            self.feedback = None;
                            continue;
                        }
                    },
                },
                None => input.recv().unwrap_or(ToEmitter::End),
            };
            match msg {
                ToEmitter::Task(task) => self.dispatch(task),
                ToEmitter::Broadcast(value) => self.broadcast(value),
                ToEmitter::Grow(delta) => {
                    let r = self.grow(delta);
                    let _ = self.acks.send(r);
                }
                ToEmitter::Shrink(delta) => {
                    let r = self.shrink(delta);
                    let _ = self.acks.send(r);
                }
                ToEmitter::Merge(keep, absorb) => {
                    let r = self.merge(keep, absorb);
                    let _ = self.acks.send(r);
                }
                ToEmitter::End => break,
            }
        }
        self.end_of_stream()
    }

    fn drain_feedback(&mut self) {
        let Some(fb) = self.feedback.clone() else { return };
        while let Ok(value) = fb.try_recv() {
            self.broadcast(value);
        }
    }

    fn dispatch(&mut self, task: P::Task) {
        let seq = self.next_seq;
        self.next_seq += 1;
        if self.ctx.aborted() {
            return;
        }

        let route = match &self.map {
            Some(map) => match catch(|| self.ctx.pattern.route(&task)) {
                Ok(Some(key)) if key < map.partitions() => Route::Key { key, map },
                Ok(key) => {
                    let reason = match key {
                        Some(k) => format!("partition {k} outside [0, {})", map.partitions()),
                        None => "task has no partition".to_string(),
                    };
                    self.reject(seq, reason);
                    return;
                }
                Err(message) => {
                    self.ctx.abort(Activity::Emitter, format!("routing function panicked: {message}"));
                    return;
                }
            },
            None => Route::Any,
        };

        let capacity = self.ctx.config.queue_capacity;
        let occupancy: Vec<usize> = match route {
            Route::Any if self.scheduler.needs_occupancy() => self.workers.iter().map(|w| w.tx.len()).collect(),
            _ => vec![0; self.workers.len()],
        };
        let target = self.scheduler.next(route, &occupancy, capacity);
        let msg = ToWorker::Task { seq, task };

        if self.scheduler.needs_occupancy() && occupancy[target] >= capacity {
            // every queue is full: block until any worker makes room
            let mut sel = Select::new();
            for w in &self.workers {
                sel.send(&w.tx);
            }
            let op = sel.select();
            let index = op.index();
            if op.send(&self.workers[index].tx, msg).is_err() {
                self.lost_worker(index);
            }
            return;
        }
        if self.workers[target].tx.send(msg).is_err() {
            self.lost_worker(target);
        }
    }

    fn lost_worker(&self, position: usize) {
        let id = self.workers[position].id;
        self.ctx.abort(Activity::Worker(id), "worker queue disconnected".into());
    }

    fn reject(&mut self, seq: u64, reason: String) {
        self.rejected.push(Rejection { seq, reason });
        if let Some(c) = &self.collector {
            let _ = c.send(ToCollector::Rejected { seq });
        }
    }

    fn broadcast(&mut self, value: P::Feedback) {
        let index = self.broadcasts;
        self.broadcasts += 1;
        for w in &self.workers {
            let _ = w.tx.send(ToWorker::Feedback { index, value: value.clone() });
        }
        self.latest = Some(value);
    }

    fn grow(&mut self, delta: usize) -> Result<usize, AdaptivityError> {
        if delta == 0 {
            return Ok(0);
        }
        let target = self.workers.len() + delta;
        let plan = match &self.map {
            Some(map) => Some(plan_migration(map, target)?),
            None => None,
        };
        for _ in 0..delta {
            self.spawn_worker(Vec::new());
        }
        let moved = match plan {
            Some(plan) => self.migrate(&plan),
            None => 0,
        };
        self.migrated += moved as u64;
        self.after_resize(target);
        Ok(moved)
    }

    fn shrink(&mut self, delta: usize) -> Result<usize, AdaptivityError> {
        if delta == 0 {
            return Ok(0);
        }
        if delta >= self.workers.len() {
            return Err(AdaptivityError::NoWorkersLeft { active: self.workers.len(), remove: delta });
        }
        let target = self.workers.len() - delta;
        let moved = match &self.map {
            Some(map) => {
                let plan = plan_migration(map, target)?;
                self.migrate(&plan)
            }
            None => 0,
        };
        self.migrated += moved as u64;
        for slot in self.workers.split_off(target) {
            let _ = slot.tx.send(ToWorker::Retire);
        }
        self.after_resize(target);
        Ok(moved)
    }

    fn merge(&mut self, keep: usize, absorb: usize) -> Result<usize, AdaptivityError> {
        let kind = self.ctx.pattern.kind();
        if kind != PatternKind::Accumulator {
            return Err(AdaptivityError::Unsupported { operation: "merge", kind });
        }
        let active = self.workers.len();
        if keep >= active || absorb >= active {
            return Err(AdaptivityError::NoSuchWorker { index: keep.max(absorb), active });
        }
        if keep == absorb {
            return Err(AdaptivityError::SameWorker(keep));
        }
        let gone = self.workers.remove(absorb);
        let _ = gone.tx.send(ToWorker::Absorb { tag: 0 });
        let keep = if absorb < keep { keep - 1 } else { keep };
        match self.returns_rx.recv() {
            Ok(Returned { transfer, .. }) => {
                let _ = self.workers[keep].tx.send(ToWorker::Import { partitions: Vec::new(), transfer });
            }
            Err(_) => self.ctx.abort(Activity::Emitter, "merge transfer lost".into()),
        }
        let n = self.workers.len();
        self.after_resize(n);
        Ok(0)
    }

    /// Move partitions between workers. Routing stops until every moved
    /// entry has arrived: a source worker exports only after draining the
    /// tasks queued before the request, and the destination imports before
    /// any task routed under the new map.
    fn migrate(&mut self, plan: &MigrationPlan) -> usize {
        let mut by_pair: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for mv in &plan.moves {
            by_pair.entry((mv.from, mv.to)).or_default().push(mv.partition);
        }
        let pairs: Vec<((usize, usize), Vec<usize>)> = by_pair.into_iter().collect();
        for (tag, ((from, _), partitions)) in pairs.iter().enumerate() {
            let _ = self.workers[*from].tx.send(ToWorker::Export { tag, partitions: partitions.clone() });
        }
        let mut received = 0;
        while received < pairs.len() {
            let Ok(Returned { tag, transfer }) = self.returns_rx.recv() else {
                self.ctx.abort(Activity::Emitter, "migration transfer lost".into());
                return received;
            };
            let ((_, to), partitions) = &pairs[tag];
            let _ = self.workers[*to].tx.send(ToWorker::Import { partitions: partitions.clone(), transfer });
            received += 1;
        }
        plan.moves.len()
    }

    fn after_resize(&mut self, n_workers: usize) {
        if let Some(map) = &mut self.map {
            *map = PartitionMap::new(map.partitions(), n_workers).expect("validated by plan_migration");
        }
        self.scheduler.resized(n_workers);
    }

    fn end_of_stream(mut self) -> EmitterReport {
        for w in &self.workers {
            let _ = w.tx.send(ToWorker::EndOfStream);
        }
        self.workers.clear();
        if let Some(c) = self.collector.take() {
            let _ = c.send(ToCollector::EmitterDone { spawned: self.handles.len() });
        }
        let workers = self
            .handles
            .drain(..)
            .enumerate()
            .map(|(id, h)| {
                h.join().unwrap_or_else(|p| WorkerStats {
                    id,
                    failure: Some(super::panic_message(&*p)),
                    ..Default::default()
                })
            })
            .collect();
        EmitterReport {
            workers,
            broadcasts: self.broadcasts,
            migrated: self.migrated,
            rejected: std::mem::take(&mut self.rejected),
        }
    }
}

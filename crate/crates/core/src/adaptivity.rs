//! Resizing a running farm: partition ownership, migration plans and the
//! grow/shrink/merge controls on [`FarmHandle`].

use std::ops::Range;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use crate::engine::{FarmError, FarmHandle, ToEmitter};
use crate::patterns::{PatternKind, StatePattern};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdaptivityError {
    #[error("{requested} workers cannot share {partitions} partitions")]
    TooManyWorkers { requested: usize, partitions: usize },
    #[error("a farm needs at least one worker")]
    ZeroWorkers,
    #[error("removing {remove} of {active} workers would leave none")]
    NoWorkersLeft { active: usize, remove: usize },
    #[error("{operation} is not supported by the {kind} pattern")]
    Unsupported { operation: &'static str, kind: PatternKind },
    #[error("worker {index} is not active ({active} active workers)")]
    NoSuchWorker { index: usize, active: usize },
    #[error("cannot merge worker {0} with itself")]
    SameWorker(usize),
}

/// Contiguous, balanced assignment of `N` partitions to workers:
/// `owner(i) = ⌊i·n_workers/N⌋`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionMap {
    partitions: usize,
    workers: usize,
}

impl PartitionMap {
    pub fn new(partitions: usize, workers: usize) -> Result<Self, AdaptivityError> {
        if workers == 0 {
            return Err(AdaptivityError::ZeroWorkers);
        }
        if workers > partitions {
            return Err(AdaptivityError::TooManyWorkers { requested: workers, partitions });
        }
        Ok(Self { partitions, workers })
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn owner(&self, partition: usize) -> usize {
        debug_assert!(partition < self.partitions);
        partition * self.workers / self.partitions
    }

    /// Partitions owned by `worker`, the `i` with `⌊i·n/N⌋ = worker`.
    pub fn owned_by(&self, worker: usize) -> Range<usize> {
        let (n, w) = (self.partitions, self.workers);
        (worker * n).div_ceil(w)..((worker + 1) * n).div_ceil(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Move {
    pub partition: usize,
    pub from: usize,
    pub to: usize,
}

/// The partitions whose owner differs between two maps. The state values
/// travel with the move when it is executed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MigrationPlan {
    pub moves: Vec<Move>,
}

impl MigrationPlan {
    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }
}

pub fn plan_migration(old: &PartitionMap, new_workers: usize) -> Result<MigrationPlan, AdaptivityError> {
    let new = PartitionMap::new(old.partitions, new_workers)?;
    let moves = (0..old.partitions)
        .filter_map(|i| {
            let (from, to) = (old.owner(i), new.owner(i));
            (from != to).then_some(Move { partition: i, from, to })
        })
        .collect();
    Ok(MigrationPlan { moves })
}

/// Records which worker holds each partition and counts accesses by a
/// worker that does not hold it.
#[derive(Debug)]
pub struct OwnershipRegistry {
    owners: Vec<AtomicUsize>,
    violations: AtomicU64,
}

impl OwnershipRegistry {
    const NONE: usize = usize::MAX;

    pub fn new(partitions: usize) -> Self {
        Self {
            owners: (0..partitions).map(|_| AtomicUsize::new(Self::NONE)).collect(),
            violations: AtomicU64::new(0),
        }
    }

    /// Take a partition. Fails (and counts a violation) if someone else
    /// still holds it.
    pub fn claim(&self, partition: usize, worker: usize) -> bool {
        let ok = self.owners[partition]
            .compare_exchange(Self::NONE, worker, Ordering::AcqRel, Ordering::Acquire)
            .is_ok();
        if !ok {
            self.violations.fetch_add(1, Ordering::Relaxed);
        }
        ok
    }

    pub fn release(&self, partition: usize, worker: usize) -> bool {
        let ok = self.owners[partition]
            .compare_exchange(worker, Self::NONE, Ordering::AcqRel, Ordering::Acquire)
            .is_ok();
        if !ok {
            self.violations.fetch_add(1, Ordering::Relaxed);
        }
        ok
    }

    pub(crate) fn release_all(&self, worker: usize) {
        for owner in &self.owners {
            let _ = owner.compare_exchange(worker, Self::NONE, Ordering::AcqRel, Ordering::Acquire);
        }
    }

    pub fn check(&self, partition: usize, worker: usize) -> bool {
        let ok = self.owners[partition].load(Ordering::Acquire) == worker;
        if !ok {
            self.violations.fetch_add(1, Ordering::Relaxed);
        }
        ok
    }

    pub fn owner(&self, partition: usize) -> Option<usize> {
        match self.owners[partition].load(Ordering::Acquire) {
            Self::NONE => None,
            w => Some(w),
        }
    }

    pub fn violations(&self) -> u64 {
        self.violations.load(Ordering::Relaxed)
    }
}

impl<P: StatePattern> FarmHandle<P> {
    fn request(&mut self, msg: ToEmitter<P>) -> Result<usize, FarmError> {
        if self.is_aborted() {
            return Err(FarmError::Aborted);
        }
        self.send(msg)?;
        let moved = self.acks.recv().map_err(|_| FarmError::Closed)??;
        Ok(moved)
    }

    /// Add `delta` workers. Returns the number of partition entries moved.
    pub fn grow(&mut self, delta: usize) -> Result<usize, FarmError> {
        if delta == 0 {
            return Ok(0);
        }
        let target = self.active + delta;
        if let Some(n) = self.pattern().partitions() {
            if target > n {
                return Err(AdaptivityError::TooManyWorkers { requested: target, partitions: n }.into());
            }
        }
        let moved = self.request(ToEmitter::Grow(delta))?;
        self.active = target;
        Ok(moved)
    }

    /// Retire the `delta` highest-numbered workers after they drain their
    /// queues and hand off their state.
    pub fn shrink(&mut self, delta: usize) -> Result<usize, FarmError> {
        if delta == 0 {
            return Ok(0);
        }
        if delta >= self.active {
            return Err(AdaptivityError::NoWorkersLeft { active: self.active, remove: delta }.into());
        }
        let moved = self.request(ToEmitter::Shrink(delta))?;
        self.active -= delta;
        Ok(moved)
    }

    /// Fold worker `absorb`'s local accumulator into worker `keep` and stop
    /// `absorb`. Indices are positions among the active workers.
    pub fn merge_workers(&mut self, keep: usize, absorb: usize) -> Result<(), FarmError> {
        let kind = self.pattern().kind();
        if kind != PatternKind::Accumulator {
            return Err(AdaptivityError::Unsupported { operation: "merge", kind }.into());
        }
        if keep == absorb {
            return Err(AdaptivityError::SameWorker(keep).into());
        }
        self.request(ToEmitter::Merge(keep, absorb))?;
        self.active -= 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mv(partition: usize, from: usize, to: usize) -> Move {
        Move { partition, from, to }
    }

    #[test]
    fn same_size_is_empty() {
        let map = PartitionMap::new(4, 2).unwrap();
        assert!(plan_migration(&map, 2).unwrap().is_empty());
    }

    #[test]
    fn one_to_two_moves_upper_half() {
        let map = PartitionMap::new(4, 1).unwrap();
        let plan = plan_migration(&map, 2).unwrap();
        assert_eq!(plan.moves, vec![mv(2, 0, 1), mv(3, 0, 1)]);
    }

    #[test]
    fn three_to_two_of_six() {
        let map = PartitionMap::new(6, 3).unwrap();
        // old owners 0 0 1 1 2 2, new owners 0 0 0 1 1 1
        let plan = plan_migration(&map, 2).unwrap();
        assert_eq!(plan.moves, vec![mv(2, 1, 0), mv(4, 2, 1), mv(5, 2, 1)]);
    }

    #[test]
    fn too_many_workers() {
        let map = PartitionMap::new(4, 2).unwrap();
        assert_eq!(
            plan_migration(&map, 5),
            Err(AdaptivityError::TooManyWorkers { requested: 5, partitions: 4 })
        );
        assert_eq!(plan_migration(&map, 0), Err(AdaptivityError::ZeroWorkers));
    }

    #[test]
    fn owner_of_key_seven() {
        assert_eq!(PartitionMap::new(16, 4).unwrap().owner(7), 1);
    }

    #[test]
    fn registry_flags_foreign_access() {
        let reg = OwnershipRegistry::new(2);
        assert!(reg.claim(0, 1));
        assert!(!reg.claim(0, 2));
        assert!(reg.check(0, 1));
        assert!(!reg.check(1, 1));
        assert!(reg.release(0, 1));
        assert_eq!(reg.owner(0), None);
        assert_eq!(reg.violations(), 2);
    }

    proptest! {
        #[test]
        fn blocks_are_contiguous_and_balanced(n in 1usize..200, w in 1usize..50) {
            prop_assume!(w <= n);
            let map = PartitionMap::new(n, w).unwrap();
            let mut sizes = Vec::new();
            let mut next = 0;
            for worker in 0..w {
                let r = map.owned_by(worker);
                prop_assert_eq!(r.start, next);
                for i in r.clone() {
                    prop_assert_eq!(map.owner(i), worker);
                }
                next = r.end;
                sizes.push(r.len());
            }
            prop_assert_eq!(next, n);
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }

        #[test]
        fn plan_is_ownership_difference(n in 1usize..100, a in 1usize..20, b in 1usize..20) {
            prop_assume!(a <= n && b <= n);
            let old = PartitionMap::new(n, a).unwrap();
            let new = PartitionMap::new(n, b).unwrap();
            let plan = plan_migration(&old, b).unwrap();
            let mut owners: Vec<usize> = (0..n).map(|i| old.owner(i)).collect();
            let mut seen = std::collections::HashSet::new();
            for m in &plan.moves {
                prop_assert!(seen.insert(m.partition));
                prop_assert_eq!(owners[m.partition], m.from);
                owners[m.partition] = m.to;
            }
            for (i, &owner) in owners.iter().enumerate() {
                prop_assert_eq!(owner, new.owner(i));
            }
            let diff = (0..n).filter(|&i| old.owner(i) != new.owner(i)).count();
            prop_assert_eq!(plan.len(), diff);
        }
    }
}

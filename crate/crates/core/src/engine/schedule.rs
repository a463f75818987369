use super::Scheduling;
use crate::adaptivity::PartitionMap;

/// How a task may be placed.
#[derive(Debug, Clone, Copy)]
pub enum Route<'a> {
    /// Any worker will do.
    Any,
    /// The task touches partition `key` and must go to its owner.
    Key { key: usize, map: &'a PartitionMap },
}

/// Picks the worker for the next task.
#[derive(Debug, Clone)]
pub struct Scheduler {
    policy: Scheduling,
    previous: Option<usize>,
}

impl Scheduler {
    pub fn new(policy: Scheduling) -> Self {
        Self { policy, previous: None }
    }

    /// A round-robin scheduler that last picked `previous`.
    pub fn with_previous(policy: Scheduling, previous: usize) -> Self {
        Self { policy, previous: Some(previous) }
    }

    pub fn policy(&self) -> Scheduling {
        self.policy
    }

    pub(crate) fn needs_occupancy(&self) -> bool {
        self.policy == Scheduling::OnDemand
    }

    /// Index of the worker that receives the next task. `occupancy[i]` is
    /// the number of items waiting in worker `i`'s queue.
    ///
    /// On-demand scheduling returns the least occupied worker even when
    /// every queue is full; the caller then blocks on it.
    pub fn next(&mut self, route: Route<'_>, occupancy: &[usize], capacity: usize) -> usize {
        let n = occupancy.len();
        debug_assert!(n > 0, "scheduling with no workers");
        let pick = match (self.policy, route) {
            (_, Route::Key { key, map }) => map.owner(key),
            (Scheduling::OnDemand, Route::Any) => {
                let (index, _) = occupancy
                    .iter()
                    .enumerate()
                    .min_by_key(|&(i, &occ)| (occ.min(capacity), i))
                    .expect("at least one worker");
                index
            }
            (Scheduling::RoundRobin | Scheduling::KeyDirected, Route::Any) => {
                self.previous.map_or(0, |p| (p + 1) % n)
            }
        };
        self.previous = Some(pick);
        pick
    }

    /// The worker set changed size; keep the rotation in range.
    pub(crate) fn resized(&mut self, n_workers: usize) {
        if let Some(p) = self.previous {
            if p >= n_workers {
                self.previous = Some(n_workers - 1);
            }
        }
    }
}

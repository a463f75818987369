use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

pub const DEFAULT_SEED: u64 = 42;

/// One synthetic stream item.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub seq: u64,
    pub key: usize,
    pub value: i64,
    /// Busy time of the task function, µs.
    pub spin_f_us: f64,
    /// Busy time of the state update, µs.
    pub spin_s_us: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyDist {
    Uniform(usize),
    /// Zipf over `n` keys; key 0 is the most frequent.
    Skewed { theta: f64, n: usize },
    /// Every task gets key 0.
    Constant,
    /// `hot_fraction` of the tasks go to key 0, the rest to key `n - 1`.
    TwoKey { hot_fraction: f64, n: usize },
}

impl KeyDist {
    /// Number of distinct keys the distribution can produce.
    pub fn key_space(&self) -> usize {
        match *self {
            KeyDist::Uniform(n) | KeyDist::Skewed { n, .. } | KeyDist::TwoKey { n, .. } => n,
            KeyDist::Constant => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamParams {
    pub m: usize,
    pub t_a: f64,
    pub t_f: f64,
    pub t_s: f64,
    pub keys: KeyDist,
    pub seed: u64,
}

impl StreamParams {
    pub fn new(m: usize) -> Self {
        Self { m, t_a: 0.0, t_f: 0.0, t_s: 0.0, keys: KeyDist::Constant, seed: DEFAULT_SEED }
    }

    pub fn timing(mut self, t_f: f64, t_s: f64) -> Self {
        self.t_f = t_f;
        self.t_s = t_s;
        self
    }

    pub fn arrival(mut self, t_a: f64) -> Self {
        self.t_a = t_a;
        self
    }

    pub fn keys(mut self, keys: KeyDist) -> Self {
        self.keys = keys;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `m` tasks with values `1..=m` and keys drawn from `keys`. The same
/// parameters always give the same stream.
pub fn make_stream(p: &StreamParams) -> Vec<SyntheticTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let zipf = match p.keys {
        KeyDist::Skewed { theta, n } => Some(Zipf::new(n.max(1) as f64, theta).expect("valid zipf parameters")),
        _ => None,
    };
    (0..p.m as u64)
        .map(|seq| {
            let key = match p.keys {
                KeyDist::Uniform(n) => rng.random_range(0..n.max(1)),
                KeyDist::Skewed { .. } => zipf.as_ref().map_or(0, |z| z.sample(&mut rng) as usize - 1),
                KeyDist::Constant => 0,
                KeyDist::TwoKey { hot_fraction, n } => {
                    if rng.random_bool(hot_fraction.clamp(0.0, 1.0)) {
                        0
                    } else {
                        n.max(1) - 1
                    }
                }
            };
            SyntheticTask { seq, key, value: seq as i64 + 1, spin_f_us: p.t_f, spin_s_us: p.t_s }
        })
        .collect()
}

/// Permute the payload values (keeping seq order), e.g. to feed a
/// prefix-minimum workload a random arrival order.
pub fn shuffle_values(tasks: &mut [SyntheticTask], seed: u64) {
    let mut values: Vec<i64> = tasks.iter().map(|t| t.value).collect();
    values.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (t, v) in tasks.iter_mut().zip(values) {
        t.value = v;
    }
}

/// Paces a producer so that item `i` is released no earlier than `i·t_a`
/// after the first.
#[derive(Debug, Clone)]
pub struct Release {
    start: Instant,
    t_a: Duration,
}

impl Release {
    pub fn new(t_a_us: f64) -> Self {
        Self { start: Instant::now(), t_a: Duration::from_secs_f64(t_a_us.max(0.0) / 1e6) }
    }

    /// Block until item `index` may be released.
    pub fn wait(&self, index: u64) {
        if self.t_a.is_zero() {
            return;
        }
        let due = self.start + self.t_a.mul_f64(index as f64);
        loop {
            let now = Instant::now();
            if now >= due {
                return;
            }
            let left = due - now;
            if left > Duration::from_millis(1) {
                std::thread::sleep(left - Duration::from_millis(1));
            } else {
                std::hint::spin_loop();
            }
        }
    }
}

//! Clock abstraction, sliding-window rate limiter and TTL cache.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Monotonic time source. `now` is measured from an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Manually driven clock. `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct MockClock {
    now: Mutex<Duration>,
}

impl MockClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().expect("clock poisoned") += d;
    }
}

impl Clock for MockClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("clock poisoned")
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

/// Admits at most `limit` events in any `window`-long interval.
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    clock: Arc<dyn Clock>,
    recent: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(limit: usize, window: Duration, clock: Arc<dyn Clock>) -> Self {
        Self {
            limit: limit.max(1),
            window,
            clock,
            recent: Mutex::new(VecDeque::new()),
        }
    }

    /// NCBI policy: 3 requests per second, 10 with an API key.
    pub fn for_ncbi(has_api_key: bool, clock: Arc<dyn Clock>) -> Self {
        Self::new(if has_api_key { 10 } else { 3 }, Duration::from_secs(1), clock)
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    fn expire(&self, recent: &mut VecDeque<Duration>, now: Duration) {
        while let Some(&t) = recent.front() {
            if t + self.window <= now {
                recent.pop_front();
            } else {
                break;
            }
        }
    }

    /// Records an event if the window has room.
    pub fn try_acquire(&self) -> bool {
        let now = self.clock.now();
        let mut recent = self.recent.lock().expect("limiter poisoned");
        self.expire(&mut recent, now);
        if recent.len() < self.limit {
            recent.push_back(now);
            true
        } else {
            false
        }
    }

    /// Blocks (on the clock) until an event can be recorded.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let now = self.clock.now();
                let mut recent = self.recent.lock().expect("limiter poisoned");
                self.expire(&mut recent, now);
                if recent.len() < self.limit {
                    recent.push_back(now);
                    return;
                }
                recent[0] + self.window - now
            };
            self.clock.sleep(wait);
        }
    }
}

/// Map whose entries expire `ttl` after insertion.
pub struct TtlCache<K, V> {
    ttl: Duration,
    clock: Arc<dyn Clock>,
    entries: Mutex<HashMap<K, (Duration, V)>>,
}

impl<K: Eq + Hash, V: Clone> TtlCache<K, V> {
    pub fn new(ttl: Duration, clock: Arc<dyn Clock>) -> Self {
        Self {
            ttl,
            clock,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, key: &K) -> Option<V> {
        let now = self.clock.now();
        let mut entries = self.entries.lock().expect("cache poisoned");
        match entries.get(key) {
            Some((at, v)) if now < *at + self.ttl => Some(v.clone()),
            Some(_) => {
                entries.remove(key);
                None
            }
            None => None,
        }
    }

    pub fn insert(&self, key: K, value: V) {
        let now = self.clock.now();
        let mut entries = self.entries.lock().expect("cache poisoned");
        entries.retain(|_, (at, _)| now < *at + self.ttl);
        entries.insert(key, (now, value));
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

use std::collections::{HashMap, VecDeque};

use chrono::{DateTime, TimeDelta, Utc};
use parking_lot::Mutex;

/// Fixed-window counter per client key. A window opens on the first request
/// after the previous one closed and admits `limit` requests.
#[derive(Debug)]
pub struct FixedWindowLimiter {
    limit: u32,
    window: TimeDelta,
    windows: Mutex<HashMap<String, (DateTime<Utc>, u32)>>,
}

impl FixedWindowLimiter {
    pub fn new(limit: u32, window: TimeDelta) -> Self {
        FixedWindowLimiter {
            limit,
            window,
            windows: Mutex::new(HashMap::new()),
        }
    }

    /// Counts one request. On refusal returns the time until the window
    /// closes.
    pub fn check(&self, key: &str, now: DateTime<Utc>) -> Result<(), TimeDelta> {
        let mut windows = self.windows.lock();
        let entry = windows.entry(key.to_owned()).or_insert((now, 0));
        if now >= entry.0 + self.window {
            *entry = (now, 0);
        }
        if entry.1 >= self.limit {
            return Err(entry.0 + self.window - now);
        }
        entry.1 += 1;
        Ok(())
    }

    pub fn prune(&self, now: DateTime<Utc>) {
        self.windows.lock().retain(|_, (start, _)| now < *start + self.window);
    }
}

/// Rolling record of failed answers per client.
#[derive(Debug)]
pub struct FailureWindow {
    window: TimeDelta,
    failures: Mutex<HashMap<String, VecDeque<DateTime<Utc>>>>,
}

impl FailureWindow {
    pub fn new(window: TimeDelta) -> Self {
        FailureWindow {
            window,
            failures: Mutex::new(HashMap::new()),
        }
    }

    pub fn record(&self, key: &str, at: DateTime<Utc>) {
        self.failures.lock().entry(key.to_owned()).or_default().push_back(at);
    }

    pub fn recent(&self, key: &str, now: DateTime<Utc>) -> usize {
        let mut failures = self.failures.lock();
        let Some(times) = failures.get_mut(key) else {
            return 0;
        };
        while times.front().is_some_and(|&t| t + self.window <= now) {
            times.pop_front();
        }
        times.len()
    }

    pub fn reset(&self, key: &str) {
        self.failures.lock().remove(key);
    }

    pub fn prune(&self, now: DateTime<Utc>) {
        self.failures
            .lock()
            .retain(|_, times| times.back().is_some_and(|&t| now < t + self.window));
    }
}

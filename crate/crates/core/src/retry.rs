//! Bounded retry with exponential backoff for remote providers.

use std::time::Duration;

/// How an attempt failed.
#[derive(Debug)]
pub enum Attempt<E> {
    /// Worth retrying: network errors, 429, 5xx.
    Transient(E),
    /// Retrying cannot help.
    Fatal(E),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn no_wait(attempts: u32) -> Self {
        Self {
            attempts,
            initial_backoff: Duration::ZERO,
        }
    }

    /// Runs `op` until it succeeds, fails fatally, or attempts run out. On
    /// failure returns the last error and the number of attempts made.
    pub fn run<T, E>(&self, mut op: impl FnMut(u32) -> Result<T, Attempt<E>>) -> Result<T, (E, u32)> {
        let attempts = self.attempts.max(1);
        let mut backoff = self.initial_backoff;
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err((e, attempt)),
                Err(Attempt::Transient(e)) if attempt >= attempts => return Err((e, attempt)),
                Err(Attempt::Transient(e)) => {
                    tracing::debug!(attempt, ?backoff, "transient failure, retrying");
                    drop(e);
                    if !backoff.is_zero() {
                        std::thread::sleep(backoff);
                    }
                    backoff *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stops_after_budget() {
        let mut calls = 0;
        let r: Result<(), _> = RetryPolicy::no_wait(3).run(|_| {
            calls += 1;
            Err(Attempt::Transient("down"))
        });
        assert_eq!(r, Err(("down", 3)));
        assert_eq!(calls, 3);
    }

    #[test]
    fn fatal_is_not_retried() {
        let mut calls = 0;
        let r: Result<(), _> = RetryPolicy::no_wait(3).run(|_| {
            calls += 1;
            Err(Attempt::Fatal("bad request"))
        });
        assert_eq!(r, Err(("bad request", 1)));
        assert_eq!(calls, 1);
    }

    #[test]
    fn recovers() {
        let r = RetryPolicy::no_wait(3).run(|n| if n < 2 { Err(Attempt::Transient(())) } else { Ok(n) });
        assert_eq!(r.unwrap(), 2);
    }
}

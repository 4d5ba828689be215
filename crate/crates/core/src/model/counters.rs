//! Structural operation counters.
//!
//! Inference claims ("no differentiation, no probing") are asserted by
//! counting, not by convention: every query forward, every backward pass,
//! and every finite-difference probe increments a counter on the model.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct OpCounters {
    forwards: AtomicU64,
    backwards: AtomicU64,
    fd_probes: AtomicU64,
}

/// A point-in-time copy of the counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub forwards: u64,
    pub backwards: u64,
    pub fd_probes: u64,
}

impl OpCounts {
    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &OpCounts) -> OpCounts {
        OpCounts {
            forwards: self.forwards - earlier.forwards,
            backwards: self.backwards - earlier.backwards,
            fd_probes: self.fd_probes - earlier.fd_probes,
        }
    }
}

impl OpCounters {
    pub fn add_forwards(&self, n: u64) {
        self.forwards.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_backwards(&self, n: u64) {
        self.backwards.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_fd_probes(&self, n: u64) {
        self.fd_probes.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            forwards: self.forwards.load(Ordering::Relaxed),
            backwards: self.backwards.load(Ordering::Relaxed),
            fd_probes: self.fd_probes.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.forwards.store(0, Ordering::Relaxed);
        self.backwards.store(0, Ordering::Relaxed);
        self.fd_probes.store(0, Ordering::Relaxed);
    }
}

impl Clone for OpCounters {
    fn clone(&self) -> Self {
        let snap = self.snapshot();
        let c = OpCounters::default();
        c.forwards.store(snap.forwards, Ordering::Relaxed);
        c.backwards.store(snap.backwards, Ordering::Relaxed);
        c.fd_probes.store(snap.fd_probes, Ordering::Relaxed);
        c
    }
}

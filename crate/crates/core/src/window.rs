//! FIFO key queue and the assignment of raw keys to protected messages.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::keyspace::KeySpace;
use crate::kft::KftSpec;

/// Raw keys shared by both endpoints, consumed in arrival order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyQueue {
    space: KeySpace,
    entries: VecDeque<u64>,
}

impl KeyQueue {
    pub fn new(space: KeySpace) -> Self {
        Self {
            space,
            entries: VecDeque::new(),
        }
    }

    pub fn from_keys(space: KeySpace, keys: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut q = Self::new(space);
        for k in keys {
            q.push(k)?;
        }
        Ok(q)
    }

    pub fn space(&self) -> KeySpace {
        self.space
    }

    pub fn push(&mut self, key: u64) -> Result<()> {
        self.entries.push_back(self.space.check(key)?);
        Ok(())
    }

    pub fn pop(&mut self) -> Option<u64> {
        self.entries.pop_front()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &u64> {
        self.entries.iter()
    }
}

/// How raw keys are grouped into per-message windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowPolicy {
    /// Message `i` consumes raw keys `[i*w, (i+1)*w)`.
    #[default]
    Disjoint,
    /// Message `i` uses raw keys `[i, i+w)`; consecutive windows share
    /// `w-1` keys. Experimental.
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowPlan {
    window_size: usize,
    message_count: usize,
    policy: WindowPolicy,
}

impl WindowPlan {
    pub fn new(window_size: usize, message_count: usize, policy: WindowPolicy) -> Result<Self> {
        if window_size == 0 {
            return Err(Error::InvalidArgument("window size must be >= 1".into()));
        }
        if message_count == 0 {
            return Err(Error::InvalidArgument("message count must be >= 1".into()));
        }
        window_size
            .checked_mul(message_count)
            .ok_or_else(|| Error::InvalidArgument("window plan too large".into()))?;
        Ok(Self {
            window_size,
            message_count,
            policy,
        })
    }

    pub fn disjoint(window_size: usize, message_count: usize) -> Result<Self> {
        Self::new(window_size, message_count, WindowPolicy::Disjoint)
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn message_count(&self) -> usize {
        self.message_count
    }

    pub fn policy(&self) -> WindowPolicy {
        self.policy
    }

    /// Number of raw keys the plan draws from the queue.
    pub fn raw_keys_required(&self) -> usize {
        match self.policy {
            WindowPolicy::Disjoint => self.window_size * self.message_count,
            WindowPolicy::Sliding => self.message_count + self.window_size - 1,
        }
    }

    /// First raw-key index of message `i`'s window.
    pub(crate) fn window_start(&self, message: usize) -> usize {
        match self.policy {
            WindowPolicy::Disjoint => message * self.window_size,
            WindowPolicy::Sliding => message,
        }
    }
}

/// Raw-key indices for each message, in queue order.
pub fn assign_windows(plan: &WindowPlan) -> Vec<Vec<usize>> {
    (0..plan.message_count)
        .map(|i| {
            let start = plan.window_start(i);
            (start..start + plan.window_size).collect()
        })
        .collect()
}

/// Derives one key per message by fusing its window of raw keys, dequeuing
/// the raw keys the plan consumes.
pub fn fused_message_keys(
    kft: &KftSpec,
    queue: &mut KeyQueue,
    plan: &WindowPlan,
) -> Result<Vec<u64>> {
    queue.space().same_as(&kft.space())?;
    let needed = plan.raw_keys_required();
    if queue.len() < needed {
        return Err(Error::Underflow {
            needed,
            available: queue.len(),
        });
    }
    let raw: Vec<u64> = (0..needed).filter_map(|_| queue.pop()).collect();
    assign_windows(plan)
        .iter()
        .map(|idx| {
            let window: Vec<u64> = idx.iter().map(|&i| raw[i]).collect();
            kft.fuse_keys(&window)
        })
        .collect()
}

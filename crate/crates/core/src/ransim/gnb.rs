//! gNB-side RRC context pool.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Fingerprint, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextState {
    AwaitingMsg5,
    Complete,
    TimedOut,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrcContext {
    pub attempt_id: u64,
    pub rnti: u16,
    pub fingerprint: Fingerprint,
    pub state: ContextState,
    pub created_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GnbError {
    #[error("RRC context pool exhausted ({0} live contexts)")]
    PoolFull(usize),
    #[error("no live context for attempt {0}")]
    UnknownAttempt(u64),
}

/// Lifetime counters, used to check pool conservation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounters {
    pub allocations: u64,
    pub completions: u64,
    pub timeouts: u64,
    pub rejections: u64,
    pub allocation_failures: u64,
}

#[derive(Debug, Clone)]
pub struct GnbModel {
    pub position: [f64; 2],
    pub max_ue: usize,
    pub context_hold_ms: u64,
    active: BTreeMap<u64, RrcContext>,
    counters: PoolCounters,
}

impl GnbModel {
    pub fn new(position: [f64; 2], max_ue: usize, context_hold_ms: u64) -> Self {
        GnbModel {
            position,
            max_ue,
            context_hold_ms,
            active: BTreeMap::new(),
            counters: PoolCounters::default(),
        }
    }

    pub fn live_contexts(&self) -> usize {
        self.active.len()
    }

    pub fn is_full(&self) -> bool {
        self.active.len() >= self.max_ue
    }

    pub fn counters(&self) -> PoolCounters {
        self.counters
    }

    pub fn context(&self, attempt_id: u64) -> Option<&RrcContext> {
        self.active.get(&attempt_id)
    }

    pub fn allocate(
        &mut self,
        attempt_id: u64,
        rnti: u16,
        fingerprint: Fingerprint,
        now: SimTime,
    ) -> Result<&RrcContext, GnbError> {
        if self.is_full() {
            self.counters.allocation_failures += 1;
            return Err(GnbError::PoolFull(self.active.len()));
        }
        self.counters.allocations += 1;
        let ctx = RrcContext {
            attempt_id,
            rnti,
            fingerprint,
            state: ContextState::AwaitingMsg5,
            created_at: now,
        };
        Ok(self.active.entry(attempt_id).or_insert(ctx))
    }

    fn finish(&mut self, attempt_id: u64, state: ContextState) -> Result<RrcContext, GnbError> {
        let mut ctx = self
            .active
            .remove(&attempt_id)
            .ok_or(GnbError::UnknownAttempt(attempt_id))?;
        ctx.state = state;
        match state {
            ContextState::Complete => self.counters.completions += 1,
            ContextState::TimedOut => self.counters.timeouts += 1,
            ContextState::Rejected => self.counters.rejections += 1,
            ContextState::AwaitingMsg5 => unreachable!("not a terminal state"),
        }
        Ok(ctx)
    }

    /// MSG5 received: the procedure completed and the slot is released.
    pub fn complete(&mut self, attempt_id: u64) -> Result<RrcContext, GnbError> {
        self.finish(attempt_id, ContextState::Complete)
    }

    /// The hold timer fired before MSG5.
    pub fn time_out(&mut self, attempt_id: u64) -> Result<RrcContext, GnbError> {
        self.finish(attempt_id, ContextState::TimedOut)
    }

    /// Drop a context the blocklist matched; the slot returns to the pool
    /// immediately.
    pub fn enforce_rejection(&mut self, attempt_id: u64) -> Result<RrcContext, GnbError> {
        self.finish(attempt_id, ContextState::Rejected)
    }

    /// allocations - (completions + timeouts + rejections) == live contexts
    pub fn is_conserved(&self) -> bool {
        let c = self.counters;
        c.allocations - (c.completions + c.timeouts + c.rejections) == self.active.len() as u64
    }
}

//! Deterministic timer wheel over a controllable clock.
//!
//! Timers fire in `(due_at, timer_id)` order, so two timers due at the same
//! instant fire in the order they were scheduled.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ids::{CaseId, TaskId, TimerId, WorkItemId};
use crate::time::Instant;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "purpose", rename_all = "snake_case")]
pub enum TimerPurpose {
    /// Minimum delay of a temporal constraint.
    Temporal,
    /// Deadline of a work item.
    Deadline { item: WorkItemId },
    /// Simulated EMR result delivery.
    EmrDelivery { placer_order_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimerState {
    Pending,
    Fired,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timer {
    pub timer_id: TimerId,
    pub case_id: CaseId,
    pub task_id: TaskId,
    pub purpose: TimerPurpose,
    pub due_at: Instant,
    pub window_end: Option<Instant>,
    pub state: TimerState,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulerError {
    #[error("timer due at {due} is before the current time {now}")]
    DueInPast { due: Instant, now: Instant },
    #[error("clock cannot move back from {now} to {to}")]
    ClockRegression { now: Instant, to: Instant },
    #[error("unknown timer {0}")]
    UnknownTimer(TimerId),
}

/// Whether virtual time only moves when told to, or tracks the wall clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClockMode {
    Virtual,
    Wall { scale: f64 },
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    now: Instant,
    mode: ClockMode,
    next_id: u64,
    timers: BTreeMap<TimerId, Timer>,
    queue: BTreeSet<(Instant, TimerId)>,
}

impl Scheduler {
    pub fn new(start: Instant) -> Self {
        Self::with_mode(start, ClockMode::Virtual)
    }

    pub fn with_mode(start: Instant, mode: ClockMode) -> Self {
        Scheduler {
            now: start,
            mode,
            next_id: 1,
            timers: BTreeMap::new(),
            queue: BTreeSet::new(),
        }
    }

    pub fn now(&self) -> Instant {
        self.now
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn schedule(
        &mut self,
        case_id: CaseId,
        task_id: TaskId,
        purpose: TimerPurpose,
        due_at: Instant,
        window_end: Option<Instant>,
    ) -> Result<TimerId, SchedulerError> {
        if due_at < self.now {
            return Err(SchedulerError::DueInPast {
                due: due_at,
                now: self.now,
            });
        }
        let id = TimerId(self.next_id);
        self.next_id += 1;
        self.timers.insert(
            id,
            Timer {
                timer_id: id,
                case_id,
                task_id,
                purpose,
                due_at,
                window_end,
                state: TimerState::Pending,
            },
        );
        self.queue.insert((due_at, id));
        Ok(id)
    }

    /// Cancels a timer and returns the state it was in. Cancelling a timer
    /// that already fired or was cancelled changes nothing.
    pub fn cancel(&mut self, id: TimerId) -> Result<TimerState, SchedulerError> {
        let timer = self
            .timers
            .get_mut(&id)
            .ok_or(SchedulerError::UnknownTimer(id))?;
        let previous = timer.state;
        if previous == TimerState::Pending {
            timer.state = TimerState::Cancelled;
            self.queue.remove(&(timer.due_at, id));
        }
        Ok(previous)
    }

    pub fn timer(&self, id: TimerId) -> Option<&Timer> {
        self.timers.get(&id)
    }

    pub fn pending(&self) -> impl Iterator<Item = &Timer> {
        self.queue.iter().map(|(_, id)| &self.timers[id])
    }

    pub fn pending_count(&self) -> usize {
        self.queue.len()
    }

    pub fn next_due_at(&self) -> Option<Instant> {
        self.queue.first().map(|(due, _)| *due)
    }

    /// Fires the earliest pending timer due at or before `until`, moving the
    /// clock to its due time. Callers that schedule new timers while handling
    /// the result get them considered on the next call.
    pub fn fire_next(&mut self, until: Instant) -> Result<Option<Timer>, SchedulerError> {
        if until < self.now {
            return Err(SchedulerError::ClockRegression {
                now: self.now,
                to: until,
            });
        }
        let Some(&(due, id)) = self.queue.first() else {
            return Ok(None);
        };
        if due > until {
            return Ok(None);
        }
        self.queue.remove(&(due, id));
        self.now = self.now.max(due);
        let timer = self.timers.get_mut(&id).expect("queued timer exists");
        timer.state = TimerState::Fired;
        Ok(Some(timer.clone()))
    }

    /// Moves the clock to `t` without firing anything. Pending timers due
    /// before `t` must have been drained with [`Scheduler::fire_next`].
    pub fn settle(&mut self, t: Instant) -> Result<(), SchedulerError> {
        if t < self.now {
            return Err(SchedulerError::ClockRegression { now: self.now, to: t });
        }
        self.now = t;
        Ok(())
    }

    /// Fires every timer due at or before `t`, in order, then sets the clock
    /// to `t`.
    pub fn advance_to(&mut self, t: Instant) -> Result<Vec<Timer>, SchedulerError> {
        if t < self.now {
            return Err(SchedulerError::ClockRegression { now: self.now, to: t });
        }
        let mut fired = Vec::new();
        while let Some(timer) = self.fire_next(t)? {
            fired.push(timer);
        }
        self.now = t;
        Ok(fired)
    }
}

//! Case state and the event reducer.
//!
//! The interpreter never mutates a [`CaseInstance`] directly: it emits
//! [`EngineEvent`]s and applies them through [`CaseInstance::apply`], so a
//! case rebuilt from its event stream is identical to the live one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::guideline::{Bindings, Value};
use crate::hl7::AbnormalFlag;
use crate::ids::{ActorId, CaseId, DataItemId, Role, TaskId, TimerId, WorkItemId};
use crate::scheduler::TimerPurpose;
use crate::scoring::{RiskClass, SurveyResponse};
use crate::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskState {
    Dormant,
    Enabled,
    InProgress,
    Completed,
    Skipped,
    Cancelled,
}

impl TaskState {
    /// Whether incoming control flow from this task has been decided.
    pub fn is_resolved(self) -> bool {
        matches!(self, TaskState::Completed | TaskState::Skipped | TaskState::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CaseStatus {
    Running,
    Completed { outcome: String },
    Aborted { reason: String },
}

impl CaseStatus {
    pub fn is_running(&self) -> bool {
        matches!(self, CaseStatus::Running)
    }

    pub fn label(&self) -> &'static str {
        match self {
            CaseStatus::Running => "running",
            CaseStatus::Completed { .. } => "completed",
            CaseStatus::Aborted { .. } => "aborted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkItemState {
    Created,
    Notified,
    InProgress,
    Completed,
    Cancelled,
    Expired,
}

impl WorkItemState {
    /// Live items can still be acted on. Expired items stay live: expiry warns
    /// but leaves the decision to the clinician.
    pub fn is_live(self) -> bool {
        matches!(
            self,
            WorkItemState::Created
                | WorkItemState::Notified
                | WorkItemState::InProgress
                | WorkItemState::Expired
        )
    }

    pub fn can_transition_to(self, next: WorkItemState) -> bool {
        use WorkItemState::*;
        matches!(
            (self, next),
            (Created, Notified)
                | (Notified, InProgress)
                | (Notified | InProgress | Expired, Completed)
                | (Created | Notified | InProgress | Expired, Cancelled)
                | (Notified | InProgress, Expired)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkItem {
    pub item_id: WorkItemId,
    pub case_id: CaseId,
    pub task_id: TaskId,
    pub role: Role,
    pub assignee: Option<ActorId>,
    pub state: WorkItemState,
    /// Task inputs rendered for display.
    pub payload: BTreeMap<String, String>,
    pub deadline: Option<Instant>,
    pub created_at: Instant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingTimer {
    pub timer_id: TimerId,
    pub task_id: TaskId,
    pub purpose: TimerPurpose,
    pub due_at: Instant,
    pub window_end: Option<Instant>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedOrder {
    pub task_id: TaskId,
    pub test_code: String,
    pub placer_order_id: String,
    pub item: Option<DataItemId>,
    pub placed_at: Instant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BindingSource {
    Survey,
    DoctorInput,
    EmrResult,
}

/// What happened. Every state change of a case is one of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EventKind {
    CaseStarted {
        guideline_id: String,
        revision: u32,
        patient_ref: String,
    },
    TaskEnabled {
        task: TaskId,
    },
    TaskSkipped {
        task: TaskId,
    },
    TaskCompleted {
        task: TaskId,
    },
    /// Loop re-entry returns a task to Dormant.
    TaskReset {
        task: TaskId,
    },
    WorkItemCreated {
        item: WorkItemId,
        task: TaskId,
        role: Role,
        deadline: Option<Instant>,
        payload: BTreeMap<String, String>,
    },
    WorkItemNotified {
        item: WorkItemId,
        task: TaskId,
        role: Role,
    },
    WorkItemStarted {
        item: WorkItemId,
        task: TaskId,
        actor: ActorId,
    },
    WorkItemCompleted {
        item: WorkItemId,
        task: TaskId,
        actor: Option<ActorId>,
        outputs: Bindings,
    },
    WorkItemCancelled {
        item: WorkItemId,
        task: TaskId,
    },
    WorkItemExpired {
        item: WorkItemId,
        task: TaskId,
    },
    DataBound {
        item: DataItemId,
        value: Value,
        source: BindingSource,
        /// Enquiry task, for survey answers.
        task: Option<TaskId>,
        flag: Option<AbnormalFlag>,
        rebound: bool,
    },
    ScoreComputed {
        task: TaskId,
        total: i64,
        risk: RiskClass,
        total_item: DataItemId,
        risk_item: DataItemId,
    },
    DecisionTaken {
        task: TaskId,
        branch: String,
    },
    TimerScheduled {
        timer: TimerId,
        task: TaskId,
        purpose: TimerPurpose,
        due_at: Instant,
        window_end: Option<Instant>,
    },
    TimerFired {
        timer: TimerId,
        task: TaskId,
    },
    TimerCancelled {
        timer: TimerId,
        task: TaskId,
    },
    /// Placing an order clears the item so only a fresh result satisfies it.
    OrderPlaced {
        task: TaskId,
        test_code: String,
        placer_order_id: String,
        item: Option<DataItemId>,
    },
    NotificationRaised {
        role: Role,
        severity: Severity,
        message: String,
        task: Option<TaskId>,
    },
    CaseCompleted {
        outcome: String,
    },
    CaseAborted {
        reason: String,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::CaseStarted { .. } => "CaseStarted",
            EventKind::TaskEnabled { .. } => "TaskEnabled",
            EventKind::TaskSkipped { .. } => "TaskSkipped",
            EventKind::TaskCompleted { .. } => "TaskCompleted",
            EventKind::TaskReset { .. } => "TaskReset",
            EventKind::WorkItemCreated { .. } => "WorkItemCreated",
            EventKind::WorkItemNotified { .. } => "WorkItemNotified",
            EventKind::WorkItemStarted { .. } => "WorkItemStarted",
            EventKind::WorkItemCompleted { .. } => "WorkItemCompleted",
            EventKind::WorkItemCancelled { .. } => "WorkItemCancelled",
            EventKind::WorkItemExpired { .. } => "WorkItemExpired",
            EventKind::DataBound { .. } => "DataBound",
            EventKind::ScoreComputed { .. } => "ScoreComputed",
            EventKind::DecisionTaken { .. } => "DecisionTaken",
            EventKind::TimerScheduled { .. } => "TimerScheduled",
            EventKind::TimerFired { .. } => "TimerFired",
            EventKind::TimerCancelled { .. } => "TimerCancelled",
            EventKind::OrderPlaced { .. } => "OrderPlaced",
            EventKind::NotificationRaised { .. } => "NotificationRaised",
            EventKind::CaseCompleted { .. } => "CaseCompleted",
            EventKind::CaseAborted { .. } => "CaseAborted",
        }
    }

    /// Task the event concerns, if any.
    pub fn task(&self) -> Option<&TaskId> {
        match self {
            EventKind::TaskEnabled { task }
            | EventKind::TaskSkipped { task }
            | EventKind::TaskCompleted { task }
            | EventKind::TaskReset { task }
            | EventKind::WorkItemCreated { task, .. }
            | EventKind::WorkItemNotified { task, .. }
            | EventKind::WorkItemStarted { task, .. }
            | EventKind::WorkItemCompleted { task, .. }
            | EventKind::WorkItemCancelled { task, .. }
            | EventKind::WorkItemExpired { task, .. }
            | EventKind::ScoreComputed { task, .. }
            | EventKind::DecisionTaken { task, .. }
            | EventKind::TimerScheduled { task, .. }
            | EventKind::TimerFired { task, .. }
            | EventKind::TimerCancelled { task, .. }
            | EventKind::OrderPlaced { task, .. } => Some(task),
            EventKind::DataBound { task, .. } | EventKind::NotificationRaised { task, .. } => {
                task.as_ref()
            }
            EventKind::CaseStarted { .. }
            | EventKind::CaseCompleted { .. }
            | EventKind::CaseAborted { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineEvent {
    pub case_id: CaseId,
    /// Per-case sequence number, starting at 1, without gaps.
    pub seq: u64,
    pub at: Instant,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("event for case `{got}` applied to case `{expected}`")]
    WrongCase { expected: CaseId, got: CaseId },
    #[error("expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("first event must be CaseStarted")]
    NotStarted,
    #[error("case is already terminal")]
    Terminal,
    #[error("unknown work item `{0}`")]
    UnknownWorkItem(WorkItemId),
    #[error("work item `{item}` cannot go from {from:?} to {to:?}")]
    IllegalTransition {
        item: WorkItemId,
        from: WorkItemState,
        to: WorkItemState,
    },
}

/// One patient's live enactment of a guideline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseInstance {
    pub case_id: CaseId,
    pub guideline_id: String,
    pub revision: u32,
    pub patient_ref: String,
    pub bindings: Bindings,
    pub result_flags: BTreeMap<DataItemId, AbnormalFlag>,
    pub task_states: BTreeMap<TaskId, TaskState>,
    pub status: CaseStatus,
    pub created_at: Instant,
    pub updated_at: Instant,
    pub work_items: BTreeMap<WorkItemId, WorkItem>,
    /// Pending timers only.
    pub timers: BTreeMap<TimerId, PendingTimer>,
    pub decisions: BTreeMap<TaskId, String>,
    pub completed_at: BTreeMap<TaskId, Instant>,
    /// Window end of each Wait whose timer fired, inherited as a deadline.
    pub window_ends: BTreeMap<TaskId, Instant>,
    pub surveys: BTreeMap<TaskId, SurveyResponse>,
    pub orders: Vec<PlacedOrder>,
    pub next_item: u64,
    pub last_seq: u64,
}

impl CaseInstance {
    /// The state before CaseStarted has been applied.
    pub fn empty(case_id: CaseId) -> Self {
        CaseInstance {
            case_id,
            guideline_id: String::new(),
            revision: 0,
            patient_ref: String::new(),
            bindings: Bindings::new(),
            result_flags: BTreeMap::new(),
            task_states: BTreeMap::new(),
            status: CaseStatus::Running,
            created_at: Instant::from_millis(0),
            updated_at: Instant::from_millis(0),
            work_items: BTreeMap::new(),
            timers: BTreeMap::new(),
            decisions: BTreeMap::new(),
            completed_at: BTreeMap::new(),
            window_ends: BTreeMap::new(),
            surveys: BTreeMap::new(),
            orders: Vec::new(),
            next_item: 1,
            last_seq: 0,
        }
    }

    /// Rebuilds a case by folding its events in order.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a EngineEvent>) -> Result<Self, ReplayError> {
        let mut iter = events.into_iter().peekable();
        let first = iter.peek().ok_or(ReplayError::NotStarted)?;
        let mut case = CaseInstance::empty(first.case_id.clone());
        for event in iter {
            case.apply(event)?;
        }
        Ok(case)
    }

    pub fn task_state(&self, task: &str) -> TaskState {
        self.task_states.get(task).copied().unwrap_or(TaskState::Dormant)
    }

    pub fn live_work_items(&self) -> impl Iterator<Item = &WorkItem> {
        self.work_items.values().filter(|w| w.state.is_live())
    }

    pub fn live_item_for_task(&self, task: &str) -> Option<&WorkItem> {
        self.live_work_items().find(|w| w.task_id.as_str() == task)
    }

    pub fn has_pending_timer_for(&self, task: &str, purpose: &TimerPurpose) -> bool {
        self.timers
            .values()
            .any(|t| t.task_id.as_str() == task && &t.purpose == purpose)
    }

    fn item_mut(&mut self, item: &WorkItemId) -> Result<&mut WorkItem, ReplayError> {
        self.work_items
            .get_mut(item)
            .ok_or_else(|| ReplayError::UnknownWorkItem(item.clone()))
    }

    fn transition(&mut self, item: &WorkItemId, to: WorkItemState) -> Result<&mut WorkItem, ReplayError> {
        let w = self.item_mut(item)?;
        if !w.state.can_transition_to(to) {
            return Err(ReplayError::IllegalTransition {
                item: item.clone(),
                from: w.state,
                to,
            });
        }
        w.state = to;
        Ok(w)
    }

    /// Applies one event. Sequence numbers must follow on without gaps.
    pub fn apply(&mut self, event: &EngineEvent) -> Result<(), ReplayError> {
        if event.case_id != self.case_id {
            return Err(ReplayError::WrongCase {
                expected: self.case_id.clone(),
                got: event.case_id.clone(),
            });
        }
        if event.seq != self.last_seq + 1 {
            return Err(ReplayError::SequenceGap {
                expected: self.last_seq + 1,
                got: event.seq,
            });
        }
        let started = self.last_seq > 0;
        match (&event.kind, started) {
            (EventKind::CaseStarted { .. }, true) => return Err(ReplayError::NotStarted),
            (EventKind::CaseStarted { .. }, false) => {}
            (_, false) => return Err(ReplayError::NotStarted),
            (_, true) if !self.status.is_running() => return Err(ReplayError::Terminal),
            _ => {}
        }

        match &event.kind {
            EventKind::CaseStarted {
                guideline_id,
                revision,
                patient_ref,
            } => {
                self.guideline_id = guideline_id.clone();
                self.revision = *revision;
                self.patient_ref = patient_ref.clone();
                self.created_at = event.at;
                self.status = CaseStatus::Running;
            }
            EventKind::TaskEnabled { task } => {
                self.task_states.insert(task.clone(), TaskState::Enabled);
            }
            EventKind::TaskSkipped { task } => {
                self.task_states.insert(task.clone(), TaskState::Skipped);
            }
            EventKind::TaskCompleted { task } => {
                self.task_states.insert(task.clone(), TaskState::Completed);
                self.completed_at.insert(task.clone(), event.at);
            }
            EventKind::TaskReset { task } => {
                self.task_states.insert(task.clone(), TaskState::Dormant);
                self.decisions.remove(task);
                self.surveys.remove(task);
                self.window_ends.remove(task);
            }
            EventKind::WorkItemCreated {
                item,
                task,
                role,
                deadline,
                payload,
            } => {
                self.work_items.insert(
                    item.clone(),
                    WorkItem {
                        item_id: item.clone(),
                        case_id: self.case_id.clone(),
                        task_id: task.clone(),
                        role: role.clone(),
                        assignee: None,
                        state: WorkItemState::Created,
                        payload: payload.clone(),
                        deadline: *deadline,
                        created_at: event.at,
                    },
                );
                self.next_item += 1;
            }
            EventKind::WorkItemNotified { item, .. } => {
                self.transition(item, WorkItemState::Notified)?;
            }
            EventKind::WorkItemStarted { item, task, actor } => {
                self.transition(item, WorkItemState::InProgress)?.assignee = Some(actor.clone());
                self.task_states.insert(task.clone(), TaskState::InProgress);
            }
            EventKind::WorkItemCompleted {
                item,
                actor,
                outputs,
                ..
            } => {
                let w = self.transition(item, WorkItemState::Completed)?;
                if let Some(actor) = actor {
                    w.assignee = Some(actor.clone());
                }
                for (k, v) in outputs {
                    self.bindings.insert(k.clone(), v.clone());
                }
            }
            EventKind::WorkItemCancelled { item, task } => {
                self.transition(item, WorkItemState::Cancelled)?;
                self.task_states.insert(task.clone(), TaskState::Cancelled);
            }
            EventKind::WorkItemExpired { item, .. } => {
                self.transition(item, WorkItemState::Expired)?;
            }
            EventKind::DataBound {
                item,
                value,
                task,
                flag,
                ..
            } => {
                self.bindings.insert(item.clone(), value.clone());
                match flag {
                    Some(f) => {
                        self.result_flags.insert(item.clone(), *f);
                    }
                    None => {
                        self.result_flags.remove(item);
                    }
                }
                if let (Some(task), Value::Text(option)) = (task, value) {
                    self.surveys
                        .entry(task.clone())
                        .or_default()
                        .answer(item.clone(), option.clone(), event.at);
                }
            }
            EventKind::ScoreComputed {
                total,
                risk,
                total_item,
                risk_item,
                ..
            } => {
                self.bindings
                    .insert(total_item.clone(), Value::Number(*total as f64));
                self.bindings
                    .insert(risk_item.clone(), Value::Text(risk.label().to_string()));
            }
            EventKind::DecisionTaken { task, branch } => {
                self.decisions.insert(task.clone(), branch.clone());
            }
            EventKind::TimerScheduled {
                timer,
                task,
                purpose,
                due_at,
                window_end,
            } => {
                self.timers.insert(
                    *timer,
                    PendingTimer {
                        timer_id: *timer,
                        task_id: task.clone(),
                        purpose: purpose.clone(),
                        due_at: *due_at,
                        window_end: *window_end,
                    },
                );
            }
            EventKind::TimerFired { timer, task } => {
                if let Some(t) = self.timers.remove(timer) {
                    if let (TimerPurpose::Temporal, Some(end)) = (&t.purpose, t.window_end) {
                        self.window_ends.insert(task.clone(), end);
                    }
                }
            }
            EventKind::TimerCancelled { timer, .. } => {
                self.timers.remove(timer);
            }
            EventKind::OrderPlaced {
                task,
                test_code,
                placer_order_id,
                item,
            } => {
                if let Some(item) = item {
                    self.bindings.remove(item);
                    self.result_flags.remove(item);
                }
                self.orders.push(PlacedOrder {
                    task_id: task.clone(),
                    test_code: test_code.clone(),
                    placer_order_id: placer_order_id.clone(),
                    item: item.clone(),
                    placed_at: event.at,
                });
            }
            EventKind::NotificationRaised { .. } => {}
            EventKind::CaseCompleted { outcome } => {
                self.status = CaseStatus::Completed {
                    outcome: outcome.clone(),
                };
            }
            EventKind::CaseAborted { reason } => {
                self.status = CaseStatus::Aborted {
                    reason: reason.clone(),
                };
            }
        }
        self.updated_at = event.at;
        self.last_seq = event.seq;
        Ok(())
    }
}

/// Read-only view of a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub case_id: CaseId,
    pub guideline_id: String,
    pub revision: u32,
    pub patient_ref: String,
    pub status: CaseStatus,
    pub task_states: BTreeMap<TaskId, TaskState>,
    pub bindings: Bindings,
    pub result_flags: BTreeMap<DataItemId, AbnormalFlag>,
    pub decisions: BTreeMap<TaskId, String>,
    pub live_work_items: Vec<WorkItem>,
    pub pending_timers: Vec<PendingTimer>,
    pub event_count: u64,
    pub created_at: Instant,
    pub updated_at: Instant,
}

impl CaseView {
    pub fn of(case: &CaseInstance) -> Self {
        CaseView {
            case_id: case.case_id.clone(),
            guideline_id: case.guideline_id.clone(),
            revision: case.revision,
            patient_ref: case.patient_ref.clone(),
            status: case.status.clone(),
            task_states: case.task_states.clone(),
            bindings: case.bindings.clone(),
            result_flags: case.result_flags.clone(),
            decisions: case.decisions.clone(),
            live_work_items: case.live_work_items().cloned().collect(),
            pending_timers: case.timers.values().cloned().collect(),
            event_count: case.last_seq,
            created_at: case.created_at,
            updated_at: case.updated_at,
        }
    }

    pub fn tasks_in(&self, state: TaskState) -> Vec<&TaskId> {
        self.task_states
            .iter()
            .filter(|(_, s)| **s == state)
            .map(|(t, _)| t)
            .collect()
    }
}

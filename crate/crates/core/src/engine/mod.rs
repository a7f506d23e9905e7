//! Guideline interpreter.
//!
//! Each operation checks its preconditions, then emits events through the
//! case reducer. A rejected operation leaves the case untouched.
//!
//! Control flow is an AND-join with dead-path elimination: a task becomes
//! ready once every non-loop incoming edge is resolved, and runs if at least
//! one of them was taken. When none was taken the task is skipped and the
//! skip propagates downstream.

mod state;

pub use state::{
    BindingSource, CaseInstance, CaseStatus, CaseView, EngineEvent, EventKind, PendingTimer,
    PlacedOrder, ReplayError, Severity, TaskState, WorkItem, WorkItemState,
};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::guideline::{Bindings, DataSource, Edge, GuidelineDefinition, TaskKind, TaskNode, Value};
use crate::hl7::ClinicalEvent;
use crate::ids::{ActorId, CaseId, DataItemId, Role, TaskId, TimerId, WorkItemId};
use crate::scheduler::{Scheduler, SchedulerError, Timer, TimerPurpose};
use crate::scoring::{compute_score, next_scene, Characteristic, SceneState, ScoreDefinition};
use crate::time::Instant;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("case `{0}` is not running")]
    CaseNotRunning(CaseId),
    #[error("unknown work item `{0}`")]
    UnknownWorkItem(WorkItemId),
    #[error("work item `{item}` is {state:?} and can no longer be completed")]
    StaleWorkItem { item: WorkItemId, state: WorkItemState },
    #[error("`{0}` is not a survey question")]
    UnknownQuestion(DataItemId),
    #[error("`{option}` is not an option of `{question}`")]
    UnknownOption { question: DataItemId, option: String },
    #[error("`{0}` has already been answered")]
    AlreadyAnswered(DataItemId),
    #[error("survey `{0}` is not active")]
    SurveyNotActive(TaskId),
    #[error("task `{task}` requires output `{item}`")]
    MissingOutput { task: TaskId, item: DataItemId },
    #[error("task `{task}` does not produce `{item}`")]
    UnexpectedOutput { task: TaskId, item: DataItemId },
    #[error("value for `{item}` must be {expected}")]
    InvalidValue { item: DataItemId, expected: String },
    #[error("unknown data item `{0}`")]
    UnknownDataItem(DataItemId),
    #[error("`{0}` is not bound by EMR results")]
    NotAnEmrItem(DataItemId),
    #[error("timer {0} does not belong to this case")]
    UnknownTimer(TimerId),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

/// Creates a case and enables its entry task.
pub fn start_case(
    def: &GuidelineDefinition,
    revision: u32,
    case_id: CaseId,
    patient_ref: &str,
    sched: &mut Scheduler,
) -> (CaseInstance, Vec<EngineEvent>) {
    let mut case = CaseInstance::empty(case_id);
    let events = {
        let mut step = Step::new(def, &mut case, sched);
        step.emit(EventKind::CaseStarted {
            guideline_id: def.id.clone(),
            revision,
            patient_ref: patient_ref.to_string(),
        });
        step.resume_waiting();
        step.events
    };
    (case, events)
}

/// Records one survey answer and reports the scene the wizard moves to.
pub fn answer_scene(
    def: &GuidelineDefinition,
    case: &mut CaseInstance,
    sched: &mut Scheduler,
    question: &str,
    option: &str,
    actor: &ActorId,
) -> Result<(SceneState, Vec<EngineEvent>), EngineError> {
    ensure_running(case)?;
    let (task, q) = def
        .question(question)
        .ok_or_else(|| EngineError::UnknownQuestion(question.into()))?;
    let item = case
        .live_item_for_task(task.id.as_str())
        .ok_or_else(|| EngineError::SurveyNotActive(task.id.clone()))?
        .item_id
        .clone();
    if !q.options.iter().any(|o| o.label == option) {
        return Err(EngineError::UnknownOption {
            question: question.into(),
            option: option.to_string(),
        });
    }
    let answered = case
        .surveys
        .get(&task.id)
        .is_some_and(|s| s.answers.contains_key(question));
    if answered {
        return Err(EngineError::AlreadyAnswered(question.into()));
    }
    let mut step = Step::new(def, case, sched);
    let scene = step.answer(task, &item, &q.item, option, actor);
    step.resume_waiting();
    Ok((scene, step.events))
}

/// The scene currently shown for the case's active survey, or the final
/// state of the most recent one.
pub fn current_scene(def: &GuidelineDefinition, case: &CaseInstance) -> Option<SceneState> {
    let surveys: Vec<&TaskNode> = def
        .tasks
        .iter()
        .filter(|t| matches!(t.kind, TaskKind::Enquiry { .. }))
        .collect();
    let task = surveys
        .iter()
        .find(|t| case.live_item_for_task(t.id.as_str()).is_some())
        .or_else(|| surveys.iter().rev().find(|t| case.surveys.contains_key(&t.id)))
        .or_else(|| surveys.first())?;
    let response = case.surveys.get(&task.id).cloned().unwrap_or_default();
    Some(next_scene(&survey_definition(task), &response))
}

/// Completes a work item with the outputs the user supplied.
///
/// Outputs of a survey item are answers to its remaining questions.
pub fn complete_work_item(
    def: &GuidelineDefinition,
    case: &mut CaseInstance,
    sched: &mut Scheduler,
    item: &WorkItemId,
    outputs: &Bindings,
    actor: Option<&ActorId>,
) -> Result<Vec<EngineEvent>, EngineError> {
    ensure_running(case)?;
    let w = case
        .work_items
        .get(item)
        .ok_or_else(|| EngineError::UnknownWorkItem(item.clone()))?;
    if !w.state.can_transition_to(WorkItemState::Completed) {
        return Err(EngineError::StaleWorkItem {
            item: item.clone(),
            state: w.state,
        });
    }
    let task = def
        .task(w.task_id.as_str())
        .expect("work item task belongs to the definition");

    if let TaskKind::Enquiry { questions, .. } = &task.kind {
        let answered = case.surveys.get(&task.id);
        let mut answers = Vec::new();
        for (key, value) in outputs {
            let q = questions
                .iter()
                .find(|q| &q.item == key)
                .ok_or_else(|| EngineError::UnexpectedOutput {
                    task: task.id.clone(),
                    item: key.clone(),
                })?;
            if answered.is_some_and(|s| s.answers.contains_key(key)) {
                return Err(EngineError::AlreadyAnswered(key.clone()));
            }
            let option = match value {
                Value::Text(t) if q.options.iter().any(|o| &o.label == t) => t.clone(),
                other => {
                    return Err(EngineError::UnknownOption {
                        question: key.clone(),
                        option: other.render(),
                    })
                }
            };
            answers.push((q.item.clone(), option));
        }
        for q in questions {
            let done = answered.is_some_and(|s| s.answers.contains_key(&q.item));
            if !done && !outputs.contains_key(&q.item) {
                return Err(EngineError::MissingOutput {
                    task: task.id.clone(),
                    item: q.item.clone(),
                });
            }
        }
        let actor = actor.cloned().unwrap_or_else(|| ActorId::new("unknown"));
        let mut step = Step::new(def, case, sched);
        for (q, option) in answers {
            step.answer(task, item, &q, &option, &actor);
        }
        step.resume_waiting();
        return Ok(step.events);
    }

    for key in outputs.keys() {
        if !task.outputs.contains(key) {
            return Err(EngineError::UnexpectedOutput {
                task: task.id.clone(),
                item: key.clone(),
            });
        }
    }
    for out in &task.outputs {
        let value = outputs.get(out).ok_or_else(|| EngineError::MissingOutput {
            task: task.id.clone(),
            item: out.clone(),
        })?;
        check_value(def, out, value)?;
    }

    let mut step = Step::new(def, case, sched);
    step.finish_work_item(task, item, outputs.clone(), actor.cloned());
    step.resume_waiting();
    Ok(step.events)
}

/// Binds a result delivered by the EMR.
pub fn deliver_clinical_event(
    def: &GuidelineDefinition,
    case: &mut CaseInstance,
    sched: &mut Scheduler,
    event: &ClinicalEvent,
) -> Result<Vec<EngineEvent>, EngineError> {
    ensure_running(case)?;
    let decl = def
        .data_item(event.data_item.as_str())
        .ok_or_else(|| EngineError::UnknownDataItem(event.data_item.clone()))?;
    if decl.source != DataSource::EmrResult {
        return Err(EngineError::NotAnEmrItem(decl.id.clone()));
    }
    check_value(def, &decl.id, &event.value)?;
    let rebound = case.bindings.contains_key(&decl.id);

    let mut step = Step::new(def, case, sched);
    step.emit(EventKind::DataBound {
        item: decl.id.clone(),
        value: event.value.clone(),
        source: BindingSource::EmrResult,
        task: None,
        flag: event.abnormal_flag,
        rebound,
    });
    let shown = step.render_item(&decl.id);
    let (severity, message) = if rebound {
        (
            Severity::Warning,
            format!("result for {} delivered again, value now {shown}", decl.id),
        )
    } else {
        (Severity::Info, format!("result available: {}: {shown}", decl.id))
    };
    step.emit(EventKind::NotificationRaised {
        role: Role::new("doctor"),
        severity,
        message,
        task: None,
    });
    step.resume_waiting();
    Ok(step.events)
}

/// Handles a timer of this case that the scheduler has fired.
pub fn on_timer_fired(
    def: &GuidelineDefinition,
    case: &mut CaseInstance,
    sched: &mut Scheduler,
    timer: &Timer,
) -> Result<Vec<EngineEvent>, EngineError> {
    ensure_running(case)?;
    if !case.timers.contains_key(&timer.timer_id) {
        return Err(EngineError::UnknownTimer(timer.timer_id));
    }
    let mut step = Step::new(def, case, sched);
    step.emit(EventKind::TimerFired {
        timer: timer.timer_id,
        task: timer.task_id.clone(),
    });
    let idx = def.task_index(timer.task_id.as_str());
    match (&timer.purpose, idx) {
        (TimerPurpose::Temporal, Some(idx)) => {
            if matches!(def.tasks[idx].kind, TaskKind::Wait) {
                step.complete_task(idx);
            } else {
                step.enable(idx);
            }
        }
        (TimerPurpose::Deadline { item }, _) => {
            let live = step
                .case
                .work_items
                .get(item)
                .filter(|w| w.state.can_transition_to(WorkItemState::Expired))
                .map(|w| w.role.clone());
            if let Some(role) = live {
                step.emit(EventKind::WorkItemExpired {
                    item: item.clone(),
                    task: timer.task_id.clone(),
                });
                step.emit(EventKind::NotificationRaised {
                    role,
                    severity: Severity::Warning,
                    message: format!("deadline passed for {}", timer.task_id),
                    task: Some(timer.task_id.clone()),
                });
            }
        }
        _ => {}
    }
    step.resume_waiting();
    Ok(step.events)
}

/// Cancels all live work and timers and marks the case aborted.
pub fn abort_case(
    case: &mut CaseInstance,
    sched: &mut Scheduler,
    reason: &str,
) -> Result<Vec<EngineEvent>, EngineError> {
    ensure_running(case)?;
    let mut events = Vec::new();
    let at = sched.now().max(case.updated_at);
    let mut emit = |case: &mut CaseInstance, kind| {
        let event = EngineEvent {
            case_id: case.case_id.clone(),
            seq: case.last_seq + 1,
            at,
            kind,
        };
        case.apply(&event).expect("abort events apply");
        events.push(event);
    };
    cancel_everything(case, sched, &mut emit);
    emit(
        case,
        EventKind::CaseAborted {
            reason: reason.to_string(),
        },
    );
    Ok(events)
}

fn cancel_everything(
    case: &mut CaseInstance,
    sched: &mut Scheduler,
    emit: &mut impl FnMut(&mut CaseInstance, EventKind),
) {
    let items: Vec<(WorkItemId, TaskId)> = case
        .live_work_items()
        .map(|w| (w.item_id.clone(), w.task_id.clone()))
        .collect();
    for (item, task) in items {
        emit(case, EventKind::WorkItemCancelled { item, task });
    }
    let timers: Vec<(TimerId, TaskId)> = case
        .timers
        .values()
        .map(|t| (t.timer_id, t.task_id.clone()))
        .collect();
    for (timer, task) in timers {
        let _ = sched.cancel(timer);
        emit(case, EventKind::TimerCancelled { timer, task });
    }
}

fn ensure_running(case: &CaseInstance) -> Result<(), EngineError> {
    if case.status.is_running() && case.last_seq > 0 {
        Ok(())
    } else {
        Err(EngineError::CaseNotRunning(case.case_id.clone()))
    }
}

fn check_value(def: &GuidelineDefinition, item: &DataItemId, value: &Value) -> Result<(), EngineError> {
    let decl = def
        .data_item(item.as_str())
        .ok_or_else(|| EngineError::UnknownDataItem(item.clone()))?;
    if decl.value_type.admits(value) {
        return Ok(());
    }
    let expected = match &decl.value_type {
        crate::guideline::ValueType::Enumeration(labels) => format!("one of {}", labels.join(", ")),
        other => format!("a {}", other.name()),
    };
    Err(EngineError::InvalidValue {
        item: item.clone(),
        expected,
    })
}

/// Score definition of an Enquiry; surveys without scoring use threshold 0.
pub fn survey_definition(task: &TaskNode) -> ScoreDefinition {
    if let Some(def) = task.score_definition() {
        return def;
    }
    let characteristics = match &task.kind {
        TaskKind::Enquiry { questions, .. } => questions
            .iter()
            .map(|q| Characteristic {
                id: q.item.clone(),
                label: q.label.clone(),
                options: q.options.clone(),
            })
            .collect(),
        _ => Vec::new(),
    };
    ScoreDefinition {
        characteristics,
        threshold: 0,
    }
}

/// Whether control flows along `edge` given the current case state.
pub fn edge_taken(case: &CaseInstance, edge: &Edge) -> bool {
    if case.task_state(edge.from.as_str()) != TaskState::Completed {
        return false;
    }
    if let Some(label) = &edge.branch {
        if case.decisions.get(&edge.from) != Some(label) {
            return false;
        }
    }
    match &edge.condition {
        Some(c) => c.eval(&case.bindings).unwrap_or(false),
        None => true,
    }
}

struct Step<'a> {
    def: &'a GuidelineDefinition,
    case: &'a mut CaseInstance,
    sched: &'a mut Scheduler,
    at: Instant,
    events: Vec<EngineEvent>,
}

impl<'a> Step<'a> {
    fn new(def: &'a GuidelineDefinition, case: &'a mut CaseInstance, sched: &'a mut Scheduler) -> Self {
        let at = sched.now().max(case.updated_at);
        Step {
            def,
            case,
            sched,
            at,
            events: Vec::new(),
        }
    }

    fn emit(&mut self, kind: EventKind) {
        let event = EngineEvent {
            case_id: self.case.case_id.clone(),
            seq: self.case.last_seq + 1,
            at: self.at,
            kind,
        };
        self.case.apply(&event).expect("engine emits only applicable events");
        self.events.push(event);
    }

    fn running(&self) -> bool {
        self.case.status.is_running()
    }

    fn schedule(&mut self, task: &TaskId, purpose: TimerPurpose, due: Instant, window_end: Option<Instant>) {
        let due = due.max(self.sched.now());
        let timer = self
            .sched
            .schedule(self.case.case_id.clone(), task.clone(), purpose.clone(), due, window_end)
            .expect("due time is clamped to the present");
        self.emit(EventKind::TimerScheduled {
            timer,
            task: task.clone(),
            purpose,
            due_at: due,
            window_end,
        });
    }

    fn render_item(&self, item: &DataItemId) -> String {
        match self.case.bindings.get(item) {
            Some(v) => match self.case.result_flags.get(item) {
                Some(flag) => format!("{} ({})", v.render(), flag.code()),
                None => v.render(),
            },
            None => "pending".to_string(),
        }
    }

    fn answer(&mut self, task: &TaskNode, item: &WorkItemId, question: &DataItemId, option: &str, actor: &ActorId) -> SceneState {
        if self.case.work_items[item].state == WorkItemState::Notified {
            self.emit(EventKind::WorkItemStarted {
                item: item.clone(),
                task: task.id.clone(),
                actor: actor.clone(),
            });
        }
        self.emit(EventKind::DataBound {
            item: question.clone(),
            value: Value::Text(option.to_string()),
            source: BindingSource::Survey,
            task: Some(task.id.clone()),
            flag: None,
            rebound: false,
        });
        let def = survey_definition(task);
        let response = self.case.surveys.get(&task.id).cloned().unwrap_or_default();
        let scene = next_scene(&def, &response);
        if scene.is_complete() {
            if let TaskKind::Enquiry {
                scoring: Some(scoring),
                ..
            } = &task.kind
            {
                let result = compute_score(&def, &response).expect("complete survey scores");
                self.emit(EventKind::ScoreComputed {
                    task: task.id.clone(),
                    total: result.total,
                    risk: result.risk_class,
                    total_item: scoring.total.clone(),
                    risk_item: scoring.risk.clone(),
                });
            }
            self.finish_work_item(task, item, Bindings::new(), Some(actor.clone()));
        }
        scene
    }

    fn finish_work_item(&mut self, task: &TaskNode, item: &WorkItemId, outputs: Bindings, actor: Option<ActorId>) {
        self.emit(EventKind::WorkItemCompleted {
            item: item.clone(),
            task: task.id.clone(),
            actor,
            outputs,
        });
        let deadlines: Vec<TimerId> = self
            .case
            .timers
            .values()
            .filter(|t| matches!(&t.purpose, TimerPurpose::Deadline { item: i } if i == item))
            .map(|t| t.timer_id)
            .collect();
        for timer in deadlines {
            let _ = self.sched.cancel(timer);
            self.emit(EventKind::TimerCancelled {
                timer,
                task: task.id.clone(),
            });
        }
        let idx = self.def.task_index(task.id.as_str()).expect("task exists");
        self.complete_task(idx);
    }

    /// Latest completion of the anchor, or now if it has not completed.
    fn anchor_time(&self, anchor: &TaskId) -> Instant {
        self.case.completed_at.get(anchor).copied().unwrap_or(self.at)
    }

    fn deadline_for(&self, idx: usize) -> Option<Instant> {
        let task = &self.def.tasks[idx];
        let own = task.temporal.as_ref().and_then(|tc| {
            tc.max_delay.map(|max| self.anchor_time(&tc.anchor) + max)
        });
        let inherited = self
            .def
            .incoming(task.id.as_str())
            .filter(|e| !e.is_loop && edge_taken(self.case, e))
            .filter_map(|e| self.case.window_ends.get(&e.from).copied());
        own.into_iter().chain(inherited).min()
    }

    fn inputs_bound(&self, task: &TaskNode) -> bool {
        task.inputs.iter().all(|i| self.case.bindings.contains_key(i))
    }

    /// Called once control reaches a task.
    fn activate(&mut self, idx: usize) {
        let task = &self.def.tasks[idx];
        if !self.inputs_bound(task) {
            return;
        }
        if let Some(pre) = &task.precondition {
            if !pre.eval(&self.case.bindings).unwrap_or(false) {
                self.skip(idx);
                return;
            }
        }
        if let Some(tc) = &task.temporal {
            let anchor = self.anchor_time(&tc.anchor);
            let due = anchor + tc.min_delay;
            if matches!(task.kind, TaskKind::Wait) {
                let window_end = tc.max_delay.map(|max| anchor + max);
                self.emit(EventKind::TaskEnabled { task: task.id.clone() });
                self.schedule(&task.id, TimerPurpose::Temporal, due, window_end);
                return;
            }
            if due > self.at {
                self.schedule(&task.id, TimerPurpose::Temporal, due, None);
                return;
            }
        }
        self.enable(idx);
    }

    fn enable(&mut self, idx: usize) {
        let task = &self.def.tasks[idx];
        self.emit(EventKind::TaskEnabled { task: task.id.clone() });
        match (&task.kind, &task.role) {
            (TaskKind::Terminal { outcome }, _) => {
                self.emit(EventKind::TaskCompleted { task: task.id.clone() });
                self.finish_case(outcome);
            }
            (TaskKind::Wait, _) | (_, None) => self.complete_task(idx),
            (_, Some(role)) => {
                let item = WorkItemId::new(format!("{}-w{:04}", self.case.case_id, self.case.next_item));
                let payload: BTreeMap<String, String> = task
                    .inputs
                    .iter()
                    .map(|i| (i.to_string(), self.render_item(i)))
                    .collect();
                let deadline = self.deadline_for(idx);
                self.emit(EventKind::WorkItemCreated {
                    item: item.clone(),
                    task: task.id.clone(),
                    role: role.clone(),
                    deadline,
                    payload,
                });
                self.emit(EventKind::WorkItemNotified {
                    item: item.clone(),
                    task: task.id.clone(),
                    role: role.clone(),
                });
                if let Some(deadline) = deadline {
                    self.schedule(&task.id, TimerPurpose::Deadline { item }, deadline, None);
                }
            }
        }
    }

    fn finish_case(&mut self, outcome: &str) {
        let mut pending = Vec::new();
        cancel_everything(self.case, self.sched, &mut |_, kind| pending.push(kind));
        for kind in pending {
            self.emit(kind);
        }
        self.emit(EventKind::CaseCompleted {
            outcome: outcome.to_string(),
        });
    }

    fn complete_task(&mut self, idx: usize) {
        let task = &self.def.tasks[idx];
        match &task.kind {
            TaskKind::Decision { branches } => {
                let chosen = branches
                    .iter()
                    .find(|b| b.condition.eval(&self.case.bindings).unwrap_or(false));
                match chosen {
                    Some(b) => self.emit(EventKind::DecisionTaken {
                        task: task.id.clone(),
                        branch: b.label.clone(),
                    }),
                    None => self.emit(EventKind::NotificationRaised {
                        role: task.role.clone().unwrap_or_else(|| Role::new("doctor")),
                        severity: Severity::Warning,
                        message: format!("no branch of {} applies", task.id),
                        task: Some(task.id.clone()),
                    }),
                }
            }
            TaskKind::Subplan { plan } => self.emit(EventKind::NotificationRaised {
                role: task.role.clone().unwrap_or_else(|| Role::new("doctor")),
                severity: Severity::Info,
                message: format!("procedure activated: {plan}"),
                task: Some(task.id.clone()),
            }),
            _ => {}
        }
        self.emit(EventKind::TaskCompleted { task: task.id.clone() });
        if let TaskKind::Action { orders } = &task.kind {
            for code in orders {
                let placer_order_id = format!("{}-o{}", self.case.case_id, self.case.orders.len() + 1);
                self.emit(EventKind::OrderPlaced {
                    task: task.id.clone(),
                    test_code: code.clone(),
                    placer_order_id,
                    item: self.def.item_for_test_code(code).map(|d| d.id.clone()),
                });
            }
        }
        self.propagate(idx);
    }

    fn skip(&mut self, idx: usize) {
        self.emit(EventKind::TaskSkipped {
            task: self.def.tasks[idx].id.clone(),
        });
        self.propagate(idx);
    }

    fn propagate(&mut self, idx: usize) {
        if !self.running() {
            return;
        }
        let from = self.def.tasks[idx].id.as_str();
        let targets: BTreeSet<usize> = self
            .def
            .outgoing(from)
            .filter(|e| !e.is_loop)
            .filter_map(|e| self.def.task_index(e.to.as_str()))
            .collect();
        for t in targets {
            if !self.running() {
                return;
            }
            self.try_resolve(t);
        }
        if !self.running() {
            return;
        }
        let reentry = self
            .def
            .outgoing(from)
            .find(|e| e.is_loop && edge_taken(self.case, e))
            .and_then(|e| self.def.task_index(e.to.as_str()));
        if let Some(target) = reentry {
            self.reenter(target);
        }
    }

    fn has_temporal_timer(&self, idx: usize) -> bool {
        self.case
            .has_pending_timer_for(self.def.tasks[idx].id.as_str(), &TimerPurpose::Temporal)
    }

    fn try_resolve(&mut self, idx: usize) {
        let task = &self.def.tasks[idx];
        if self.case.task_state(task.id.as_str()) != TaskState::Dormant || self.has_temporal_timer(idx) {
            return;
        }
        let incoming: Vec<&Edge> = self.def.incoming(task.id.as_str()).filter(|e| !e.is_loop).collect();
        if incoming.is_empty() {
            if task.id == self.def.entry_task {
                self.activate(idx);
            }
            return;
        }
        if !incoming
            .iter()
            .all(|e| self.case.task_state(e.from.as_str()).is_resolved())
        {
            return;
        }
        if incoming.iter().any(|e| edge_taken(self.case, e)) {
            self.activate(idx);
        } else {
            self.skip(idx);
        }
    }

    /// Loop re-entry: resets the target and everything downstream of it,
    /// then runs the target again.
    fn reenter(&mut self, target: usize) {
        let region = forward_region(self.def, target);
        let items: Vec<(WorkItemId, TaskId)> = self
            .case
            .live_work_items()
            .filter(|w| region.contains(&w.task_id))
            .map(|w| (w.item_id.clone(), w.task_id.clone()))
            .collect();
        for (item, task) in items {
            self.emit(EventKind::WorkItemCancelled { item, task });
        }
        let timers: Vec<(TimerId, TaskId)> = self
            .case
            .timers
            .values()
            .filter(|t| region.contains(&t.task_id))
            .map(|t| (t.timer_id, t.task_id.clone()))
            .collect();
        for (timer, task) in timers {
            let _ = self.sched.cancel(timer);
            self.emit(EventKind::TimerCancelled { timer, task });
        }
        for task in &self.def.tasks {
            if region.contains(&task.id) && self.case.task_state(task.id.as_str()) != TaskState::Dormant {
                self.emit(EventKind::TaskReset { task: task.id.clone() });
            }
        }
        self.activate(target);
    }

    /// Re-checks dormant tasks until nothing changes, so newly bound data
    /// can release tasks that were waiting for their inputs.
    fn resume_waiting(&mut self) {
        loop {
            let before = self.events.len();
            for idx in 0..self.def.tasks.len() {
                if !self.running() {
                    return;
                }
                self.try_resolve(idx);
            }
            if self.events.len() == before {
                return;
            }
        }
    }
}

/// The task and every task reachable from it over non-loop edges.
pub fn forward_region(def: &GuidelineDefinition, start: usize) -> BTreeSet<TaskId> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([def.tasks[start].id.clone()]);
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id.clone()) {
            continue;
        }
        for e in def.outgoing(id.as_str()).filter(|e| !e.is_loop) {
            if !seen.contains(&e.to) {
                queue.push_back(e.to.clone());
            }
        }
    }
    seen
}

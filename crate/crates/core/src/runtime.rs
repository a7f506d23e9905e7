//! Thread-safe host for deployed guidelines and running cases.
//!
//! Locks are always taken in the order case, EMR, scheduler, log. Timer
//! dispatch pops a timer with only the scheduler locked, releases it, and
//! then handles the timer like any other request.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};

use crate::dsl::{self, DslError};
use crate::engine::{
    self, CaseInstance, CaseStatus, CaseView, EngineError, EngineEvent, EventKind, WorkItem,
};
use crate::eventlog::{export_csv, export_xes, EventLog, EventLogEntry, LogError};
use crate::guideline::{validate, Bindings, GuidelineDefinition, ValidationReport, Value};
use crate::hl7::{
    bind_result, decode_parsed_result, encode_order, encode_result, make_ack, make_reject,
    wire_value, AbnormalFlag, AckCode, EmrSimulator, Hl7Error, Hl7Message, OrderRequest,
    ResultMessage, ResultProfile, TestCodeMap,
};
use crate::ids::{ActorId, CaseId, Role, WorkItemId};
use crate::scheduler::{ClockMode, Scheduler, SchedulerError, Timer, TimerPurpose};
use crate::scoring::SceneState;
use crate::time::{Duration, Instant};

pub type Listener = Box<dyn Fn(&EventLogEntry) + Send + Sync>;

/// Who is making a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub role: Role,
}

impl Actor {
    pub fn new(id: &str, role: &str) -> Self {
        Actor {
            id: ActorId::new(id),
            role: Role::new(role),
        }
    }

    pub fn doctor() -> Self {
        Actor::new("doctor", "doctor")
    }
}

#[derive(Debug)]
pub struct Deployment {
    pub id: String,
    pub revision: u32,
    pub definition: Arc<GuidelineDefinition>,
    pub report: ValidationReport,
    pub deployed_at: Instant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentSummary {
    pub id: String,
    pub revision: u32,
    pub title: String,
    pub version: String,
    pub warnings: usize,
    pub deployed_at: Instant,
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("guideline document is malformed: {0}")]
    Parse(#[from] DslError),
    #[error("guideline failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("unknown guideline `{0}`")]
    UnknownGuideline(String),
    #[error("unknown case `{0}`")]
    UnknownCase(CaseId),
    #[error("unknown work item `{0}`")]
    UnknownWorkItem(WorkItemId),
    #[error("role `{role}` may not {action}")]
    Forbidden { role: Role, action: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Hl7(#[from] Hl7Error),
    #[error("advancing the clock is only available in virtual time")]
    NotVirtual,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFilter {
    pub status: Option<String>,
    pub guideline: Option<String>,
    pub patient: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkItemFilter {
    pub role: Option<String>,
    pub case: Option<String>,
    /// Include completed and cancelled items.
    #[serde(default)]
    pub all: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case_id: CaseId,
    pub guideline_id: String,
    pub revision: u32,
    pub patient_ref: String,
    pub status: CaseStatus,
    pub live_work_items: usize,
    pub updated_at: Instant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub scene: SceneState,
    pub events: Vec<EngineEvent>,
    pub processing_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InboundOutcome {
    pub ack: String,
    pub code: AckCode,
    pub case_id: Option<CaseId>,
    pub events: Vec<EngineEvent>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Xes,
    Json,
}

impl ExportFormat {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "csv" => Some(ExportFormat::Csv),
            "xes" => Some(ExportFormat::Xes),
            "json" => Some(ExportFormat::Json),
            _ => None,
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Csv => "text/csv",
            ExportFormat::Xes => "application/xml",
            ExportFormat::Json => "application/json",
        }
    }
}

pub fn export_entries<'a>(entries: impl IntoIterator<Item = &'a EventLogEntry>, format: ExportFormat) -> String {
    match format {
        ExportFormat::Csv => export_csv(entries),
        ExportFormat::Xes => export_xes(entries),
        ExportFormat::Json => {
            let list: Vec<&EventLogEntry> = entries.into_iter().collect();
            serde_json::to_string_pretty(&list).expect("entries serialize") + "\n"
        }
    }
}

pub struct RuntimeConfig {
    pub start: Instant,
    pub clock: ClockMode,
    pub log: EventLog,
    pub profile: ResultProfile,
}

impl RuntimeConfig {
    pub fn virtual_at(start: Instant) -> Self {
        RuntimeConfig {
            start,
            clock: ClockMode::Virtual,
            log: EventLog::in_memory(),
            profile: ResultProfile::default(),
        }
    }
}

struct CaseSlot {
    def: Arc<GuidelineDefinition>,
    case: CaseInstance,
}

pub struct Runtime {
    deployments: RwLock<BTreeMap<String, Vec<Arc<Deployment>>>>,
    cases: RwLock<BTreeMap<CaseId, Arc<Mutex<CaseSlot>>>>,
    item_index: RwLock<HashMap<WorkItemId, CaseId>>,
    emr: Mutex<EmrSimulator>,
    scheduler: Mutex<Scheduler>,
    log: Mutex<EventLog>,
    listeners: RwLock<Vec<Listener>>,
    advancing: Mutex<()>,
    next_case: AtomicU64,
    undeliverable: Mutex<Vec<String>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn read<T>(m: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    m.read().unwrap_or_else(|e| e.into_inner())
}

fn write<T>(m: &RwLock<T>) -> RwLockWriteGuard<'_, T> {
    m.write().unwrap_or_else(|e| e.into_inner())
}

impl Runtime {
    pub fn new(config: RuntimeConfig) -> Self {
        let highest = config
            .log
            .case_ids()
            .iter()
            .filter_map(|c| c.as_str().strip_prefix("case-")?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        let start = config
            .log
            .entries()
            .last()
            .map(|e| e.event.at.max(config.start))
            .unwrap_or(config.start);
        Runtime {
            deployments: RwLock::new(BTreeMap::new()),
            cases: RwLock::new(BTreeMap::new()),
            item_index: RwLock::new(HashMap::new()),
            emr: Mutex::new(EmrSimulator::new(config.profile)),
            scheduler: Mutex::new(Scheduler::with_mode(start, config.clock)),
            log: Mutex::new(config.log),
            listeners: RwLock::new(Vec::new()),
            advancing: Mutex::new(()),
            next_case: AtomicU64::new(highest + 1),
            undeliverable: Mutex::new(Vec::new()),
        }
    }

    pub fn virtual_at(start: Instant) -> Self {
        Self::new(RuntimeConfig::virtual_at(start))
    }

    pub fn subscribe(&self, listener: Listener) {
        write(&self.listeners).push(listener);
    }

    pub fn now(&self) -> Instant {
        lock(&self.scheduler).now()
    }

    pub fn clock_mode(&self) -> ClockMode {
        lock(&self.scheduler).mode()
    }

    pub fn set_profile(&self, profile: ResultProfile) {
        lock(&self.emr).set_profile(profile);
    }

    /// Orders the EMR simulator had no canned result for.
    pub fn undeliverable_orders(&self) -> Vec<String> {
        lock(&self.undeliverable).clone()
    }

    // ---- guidelines ----

    pub fn deploy_text(&self, text: &str) -> Result<Arc<Deployment>, RuntimeError> {
        self.deploy(dsl::parse(text)?)
    }

    /// Validates and registers a definition. Redeploying an id adds a
    /// revision; running cases keep the revision they started on.
    pub fn deploy(&self, def: GuidelineDefinition) -> Result<Arc<Deployment>, RuntimeError> {
        let report = validate(&def);
        if !report.is_deployable() {
            return Err(RuntimeError::Invalid(report));
        }
        let mut all = write(&self.deployments);
        let revisions = all.entry(def.id.clone()).or_default();
        let deployment = Arc::new(Deployment {
            id: def.id.clone(),
            revision: revisions.len() as u32 + 1,
            definition: Arc::new(def),
            report,
            deployed_at: self.now(),
        });
        revisions.push(deployment.clone());
        Ok(deployment)
    }

    pub fn deployment(&self, id: &str) -> Option<Arc<Deployment>> {
        read(&self.deployments).get(id).and_then(|r| r.last().cloned())
    }

    pub fn deployments(&self) -> Vec<DeploymentSummary> {
        read(&self.deployments)
            .values()
            .filter_map(|r| r.last())
            .map(|d| DeploymentSummary {
                id: d.id.clone(),
                revision: d.revision,
                title: d.definition.title.clone(),
                version: d.definition.version.clone(),
                warnings: d.report.warnings().count(),
                deployed_at: d.deployed_at,
            })
            .collect()
    }

    // ---- cases ----

    fn slot(&self, case: &CaseId) -> Result<Arc<Mutex<CaseSlot>>, RuntimeError> {
        read(&self.cases)
            .get(case)
            .cloned()
            .ok_or_else(|| RuntimeError::UnknownCase(case.clone()))
    }

    pub fn start_case(&self, guideline: &str, patient_ref: &str, actor: &Actor) -> Result<CaseView, RuntimeError> {
        let deployment = self
            .deployment(guideline)
            .ok_or_else(|| RuntimeError::UnknownGuideline(guideline.to_string()))?;
        let n = self.next_case.fetch_add(1, Ordering::SeqCst);
        let case_id = CaseId::new(format!("case-{n:06}"));
        let (case, events) = {
            let mut sched = lock(&self.scheduler);
            engine::start_case(&deployment.definition, deployment.revision, case_id.clone(), patient_ref, &mut sched)
        };
        let slot = Arc::new(Mutex::new(CaseSlot {
            def: deployment.definition.clone(),
            case,
        }));
        let guard = lock(&slot);
        write(&self.cases).insert(case_id, slot.clone());
        self.commit(&guard, events, Some(&actor.id), None, None)?;
        Ok(CaseView::of(&guard.case))
    }

    pub fn case_view(&self, case: &CaseId) -> Result<CaseView, RuntimeError> {
        let slot = self.slot(case)?;
        let view = CaseView::of(&lock(&slot).case);
        Ok(view)
    }

    pub fn case_instance(&self, case: &CaseId) -> Result<CaseInstance, RuntimeError> {
        let slot = self.slot(case)?;
        let case = lock(&slot).case.clone();
        Ok(case)
    }

    pub fn definition_of(&self, case: &CaseId) -> Result<Arc<GuidelineDefinition>, RuntimeError> {
        let slot = self.slot(case)?;
        let def = lock(&slot).def.clone();
        Ok(def)
    }

    pub fn list_cases(&self, filter: &CaseFilter) -> Vec<CaseSummary> {
        let slots: Vec<_> = read(&self.cases).values().cloned().collect();
        slots
            .iter()
            .map(|s| {
                let s = lock(s);
                CaseSummary {
                    case_id: s.case.case_id.clone(),
                    guideline_id: s.case.guideline_id.clone(),
                    revision: s.case.revision,
                    patient_ref: s.case.patient_ref.clone(),
                    status: s.case.status.clone(),
                    live_work_items: s.case.live_work_items().count(),
                    updated_at: s.case.updated_at,
                }
            })
            .filter(|c| filter.status.as_deref().is_none_or(|st| c.status.label() == st))
            .filter(|c| filter.guideline.as_deref().is_none_or(|g| c.guideline_id == g))
            .filter(|c| filter.patient.as_deref().is_none_or(|p| c.patient_ref == p))
            .collect()
    }

    pub fn scene(&self, case: &CaseId) -> Result<Option<SceneState>, RuntimeError> {
        let slot = self.slot(case)?;
        let s = lock(&slot);
        Ok(engine::current_scene(&s.def, &s.case))
    }

    pub fn answer_scene(&self, case: &CaseId, question: &str, option: &str, actor: &Actor) -> Result<AnswerOutcome, RuntimeError> {
        let started = std::time::Instant::now();
        let slot = self.slot(case)?;
        let mut s = lock(&slot);
        let s = &mut *s;
        if let Some((task, _)) = s.def.question(question) {
            if let Some(role) = &task.role {
                if role != &actor.role {
                    return Err(RuntimeError::Forbidden {
                        role: actor.role.clone(),
                        action: format!("answer {}", task.id),
                    });
                }
            }
        }
        let (scene, events) = {
            let mut sched = lock(&self.scheduler);
            engine::answer_scene(&s.def, &mut s.case, &mut sched, question, option, &actor.id)?
        };
        let processing_us = started.elapsed().as_micros() as u64;
        self.commit(s, events.clone(), Some(&actor.id), Some(processing_us), None)?;
        Ok(AnswerOutcome {
            scene,
            events,
            processing_us,
        })
    }

    pub fn work_items(&self, filter: &WorkItemFilter) -> Vec<WorkItem> {
        let slots: Vec<_> = read(&self.cases).values().cloned().collect();
        let mut items = Vec::new();
        for slot in slots {
            let s = lock(&slot);
            if filter.case.as_deref().is_some_and(|c| s.case.case_id.as_str() != c) {
                continue;
            }
            items.extend(
                s.case
                    .work_items
                    .values()
                    .filter(|w| filter.all || w.state.is_live())
                    .filter(|w| filter.role.as_deref().is_none_or(|r| w.role.as_str() == r))
                    .cloned(),
            );
        }
        items
    }

    pub fn complete_work_item(&self, item: &WorkItemId, outputs: &Bindings, actor: &Actor) -> Result<Vec<EngineEvent>, RuntimeError> {
        let case = read(&self.item_index)
            .get(item)
            .cloned()
            .ok_or_else(|| RuntimeError::UnknownWorkItem(item.clone()))?;
        let slot = self.slot(&case)?;
        let mut s = lock(&slot);
        let s = &mut *s;
        let role = &s.case.work_items[item].role;
        if role != &actor.role {
            return Err(RuntimeError::Forbidden {
                role: actor.role.clone(),
                action: format!("complete {item}"),
            });
        }
        let started = std::time::Instant::now();
        let events = {
            let mut sched = lock(&self.scheduler);
            engine::complete_work_item(&s.def, &mut s.case, &mut sched, item, outputs, Some(&actor.id))?
        };
        let processing_us = started.elapsed().as_micros() as u64;
        self.commit(s, events.clone(), Some(&actor.id), Some(processing_us), None)?;
        Ok(events)
    }

    /// Live work item of a task, for callers that address work by task.
    pub fn live_item_for_task(&self, case: &CaseId, task: &str) -> Result<Option<WorkItem>, RuntimeError> {
        let slot = self.slot(case)?;
        let s = lock(&slot);
        Ok(s.case.live_item_for_task(task).cloned())
    }

    pub fn abort_case(&self, case: &CaseId, reason: &str, actor: &Actor) -> Result<Vec<EngineEvent>, RuntimeError> {
        if actor.role.as_str() != "doctor" {
            return Err(RuntimeError::Forbidden {
                role: actor.role.clone(),
                action: "abort cases".into(),
            });
        }
        let slot = self.slot(case)?;
        let mut s = lock(&slot);
        let events = {
            let mut sched = lock(&self.scheduler);
            engine::abort_case(&mut s.case, &mut sched, reason)?
        };
        self.commit(&s, events.clone(), Some(&actor.id), None, None)?;
        Ok(events)
    }

    // ---- HL7 ----

    /// Processes an inbound ER7 message and returns the acknowledgement.
    pub fn emr_inbound(&self, raw: &str) -> InboundOutcome {
        let reject = |code: AckCode, error: String, ack: String| InboundOutcome {
            ack,
            code,
            case_id: None,
            events: Vec::new(),
            error: Some(error),
        };
        let message = match Hl7Message::parse(raw) {
            Ok(m) => m,
            Err(e) => return reject(AckCode::AE, e.to_string(), make_reject(AckCode::AE, &e.to_string())),
        };
        let result = match decode_parsed_result(&message) {
            Ok(r) => r,
            Err(e @ Hl7Error::UnsupportedType(_)) => {
                return reject(AckCode::AR, e.to_string(), make_ack(&message, AckCode::AR, Some(&e.to_string())))
            }
            Err(e) => return reject(AckCode::AE, e.to_string(), make_ack(&message, AckCode::AE, Some(&e.to_string()))),
        };
        let case_id = result.case_id.clone();
        match self.deliver_result(result, raw) {
            Ok(events) => InboundOutcome {
                ack: make_ack(&message, AckCode::AA, None),
                code: AckCode::AA,
                case_id: Some(case_id),
                events,
                error: None,
            },
            Err(e) => InboundOutcome {
                ack: make_ack(&message, AckCode::AE, Some(&e.to_string())),
                code: AckCode::AE,
                case_id: Some(case_id),
                events: Vec::new(),
                error: Some(e.to_string()),
            },
        }
    }

    fn deliver_result(&self, result: ResultMessage, raw: &str) -> Result<Vec<EngineEvent>, RuntimeError> {
        let slot = self.slot(&result.case_id)?;
        let mut s = lock(&slot);
        let s = &mut *s;
        let codes = TestCodeMap::from_definition(&s.def);
        let event = bind_result(result, &codes)?;
        let events = {
            let mut sched = lock(&self.scheduler);
            engine::deliver_clinical_event(&s.def, &mut s.case, &mut sched, &event)?
        };
        self.commit(s, events.clone(), Some(&ActorId::new("emr")), None, Some(raw))?;
        Ok(events)
    }

    /// Sends a result for the case's latest order of `test_code` through the
    /// inbound HL7 path, as if the EMR had produced it now.
    pub fn inject_result(&self, case: &CaseId, test_code: &str, value: &Value, flag: Option<AbnormalFlag>) -> Result<InboundOutcome, RuntimeError> {
        let (patient_ref, placer) = {
            let slot = self.slot(case)?;
            let s = lock(&slot);
            let placer = s
                .case
                .orders
                .iter()
                .rev()
                .find(|o| o.test_code == test_code)
                .map(|o| o.placer_order_id.clone())
                .unwrap_or_default();
            (s.case.patient_ref.clone(), placer)
        };
        let (value_type, value) = wire_value(value);
        let raw = encode_result(&ResultMessage {
            case_id: case.clone(),
            patient_ref,
            test_code: test_code.to_string(),
            filler_order_id: format!("M-{placer}"),
            placer_order_id: placer,
            value_type: value_type.to_string(),
            value,
            abnormal_flag: flag,
            observed_at: self.now(),
        });
        Ok(self.emr_inbound(&raw))
    }

    // ---- time ----

    /// Fires the next timer due at or before `until`, if any.
    pub fn fire_next(&self, until: Instant) -> Result<Option<Timer>, RuntimeError> {
        let Some(timer) = lock(&self.scheduler).fire_next(until)? else {
            return Ok(None);
        };
        match &timer.purpose {
            TimerPurpose::EmrDelivery { .. } => {
                let raw = lock(&self.emr).deliver(timer.timer_id, timer.due_at);
                if let Some(raw) = raw {
                    // Failures are recorded in the ACK only; the EMR has no one to tell.
                    let _ = self.emr_inbound(&raw);
                }
            }
            _ => {
                let slot = self.slot(&timer.case_id)?;
                let mut s = lock(&slot);
                let s = &mut *s;
                if s.case.status.is_running() && s.case.timers.contains_key(&timer.timer_id) {
                    let events = {
                        let mut sched = lock(&self.scheduler);
                        engine::on_timer_fired(&s.def, &mut s.case, &mut sched, &timer)?
                    };
                    self.commit(s, events, None, None, None)?;
                }
            }
        }
        Ok(Some(timer))
    }

    /// Moves the clock to `t`, firing everything due on the way. Timers
    /// scheduled while handling a timer fire in the same call if due by `t`.
    pub fn advance_to(&self, t: Instant) -> Result<usize, RuntimeError> {
        let _serial = lock(&self.advancing);
        let mut fired = 0;
        while self.fire_next(t)?.is_some() {
            fired += 1;
        }
        lock(&self.scheduler).settle(t)?;
        Ok(fired)
    }

    pub fn advance_by(&self, by: Duration) -> Result<usize, RuntimeError> {
        if self.clock_mode() != ClockMode::Virtual {
            return Err(RuntimeError::NotVirtual);
        }
        let now = self.now();
        self.advance_to(now + by)
    }

    pub fn pending_timer_count(&self, case: &CaseId) -> usize {
        lock(&self.scheduler).pending().filter(|t| &t.case_id == case).count()
    }

    // ---- log ----

    pub fn log_len(&self) -> usize {
        lock(&self.log).len()
    }

    pub fn entries_since(&self, after: u64) -> Vec<EventLogEntry> {
        lock(&self.log).since(after).to_vec()
    }

    pub fn case_entries(&self, case: &CaseId) -> Vec<EventLogEntry> {
        lock(&self.log).case_entries(case).into_iter().cloned().collect()
    }

    pub fn case_events(&self, case: &CaseId) -> Vec<EngineEvent> {
        lock(&self.log).case_events(case)
    }

    pub fn export_case(&self, case: &CaseId, format: ExportFormat) -> Result<String, RuntimeError> {
        let log = lock(&self.log);
        let entries = log.case_entries(case);
        if entries.is_empty() {
            return Err(RuntimeError::UnknownCase(case.clone()));
        }
        Ok(export_entries(entries, format))
    }

    /// Logs a batch, runs its side effects and notifies listeners.
    fn commit(
        &self,
        slot: &CaseSlot,
        events: Vec<EngineEvent>,
        actor: Option<&ActorId>,
        processing_us: Option<u64>,
        inbound_raw: Option<&str>,
    ) -> Result<(), RuntimeError> {
        let mut raws: Vec<Option<String>> = vec![None; events.len()];
        let mut finished = false;
        for (i, e) in events.iter().enumerate() {
            match &e.kind {
                EventKind::OrderPlaced {
                    test_code,
                    placer_order_id,
                    ..
                } => {
                    let raw = encode_order(&OrderRequest {
                        case_id: e.case_id.clone(),
                        patient_ref: slot.case.patient_ref.clone(),
                        test_code: test_code.clone(),
                        placer_order_id: placer_order_id.clone(),
                        requested_at: e.at,
                    });
                    let mut emr = lock(&self.emr);
                    let mut sched = lock(&self.scheduler);
                    if emr.submit(&raw, &mut sched).is_err() {
                        lock(&self.undeliverable).push(raw.clone());
                    }
                    raws[i] = Some(raw);
                }
                EventKind::DataBound { .. } if inbound_raw.is_some() => {
                    raws[i] = inbound_raw.map(str::to_string);
                }
                EventKind::WorkItemCreated { item, .. } => {
                    write(&self.item_index).insert(item.clone(), e.case_id.clone());
                }
                EventKind::CaseAborted { .. } | EventKind::CaseCompleted { .. } => finished = true,
                _ => {}
            }
        }
        if finished {
            let mut emr = lock(&self.emr);
            let mut sched = lock(&self.scheduler);
            let pending: Vec<_> = sched
                .pending()
                .filter(|t| t.case_id == slot.case.case_id)
                .map(|t| t.timer_id)
                .collect();
            for id in pending {
                let _ = sched.cancel(id);
                emr.forget(id);
            }
        }

        let mut log = lock(&self.log);
        let listeners = read(&self.listeners);
        for (i, (event, raw)) in events.into_iter().zip(raws).enumerate() {
            let us = if i == 0 { processing_us } else { None };
            let entry = log.append(event, actor.cloned(), raw, us)?;
            for l in listeners.iter() {
                l(entry);
            }
        }
        Ok(())
    }
}

//! Scripted case runs in virtual time, compared against an expected trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{CaseStatus, CaseView, EventKind, TaskState};
use crate::eventlog::EventLogEntry;
use crate::guideline::{Bindings, GuidelineDefinition, Value};
use crate::hl7::{AbnormalFlag, ResultProfile};
use crate::ids::{CaseId, DataItemId};
use crate::runtime::{Actor, Runtime, RuntimeConfig, RuntimeError};
use crate::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Guideline document, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guideline: Option<String>,
    pub start: Instant,
    #[serde(default = "default_patient")]
    pub patient_ref: String,
    #[serde(default)]
    pub emr_profile: ResultProfile,
    pub steps: Vec<StepSpec>,
    #[serde(default)]
    pub expect: Expectation,
}

fn default_patient() -> String {
    "PAT-0001".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSpec {
    #[serde(flatten)]
    pub step: Step,
    /// The step must fail with an error whose text contains this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_error: Option<String>,
}

impl From<Step> for StepSpec {
    fn from(step: Step) -> Self {
        StepSpec {
            step,
            expect_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    StartCase {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        patient_ref: Option<String>,
    },
    Answer {
        question: String,
        option: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        actor: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<String>,
    },
    Complete {
        task: String,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        outputs: BTreeMap<String, Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        actor: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<String>,
    },
    Advance {
        by: Duration,
    },
    EmrResult {
        test_code: String,
        value: Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        flag: Option<AbnormalFlag>,
    },
    Abort {
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<String>,
    },
    SetProfile {
        profile: ResultProfile,
    },
    ExpectSnapshot(SnapshotExpectation),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotExpectation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub live_work_items: Option<usize>,
    /// Scheduler timers owned by the case, EMR deliveries included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending_timers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bindings: Option<BTreeMap<String, Value>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// Event kinds kept in the compared trace; all kinds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_transitions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    /// Zero-based line index in the compared trace.
    pub index: usize,
    pub expected: Option<String>,
    pub actual: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub case_id: Option<CaseId>,
    /// Trace restricted to the expected kinds.
    pub trace: Vec<String>,
    pub full_trace: Vec<String>,
    pub divergence: Option<Divergence>,
    pub failures: Vec<String>,
    pub scene_transitions: Option<usize>,
    pub final_view: Option<CaseView>,
    pub entries: Vec<EventLogEntry>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.divergence.is_none() && self.failures.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot deploy guideline: {0}")]
    Deploy(#[from] RuntimeError),
}

/// Renders one log entry as `+HH:MM Kind summary`, with time relative to
/// `origin`.
pub fn trace_line(entry: &EventLogEntry, origin: Instant) -> String {
    let offset = |t: Instant| t.since(origin).to_clock_offset();
    let kind = &entry.event.kind;
    let detail = match kind {
        EventKind::CaseStarted { guideline_id, .. } => guideline_id.clone(),
        EventKind::TaskEnabled { task }
        | EventKind::TaskSkipped { task }
        | EventKind::TaskCompleted { task }
        | EventKind::TaskReset { task }
        | EventKind::WorkItemNotified { task, .. }
        | EventKind::WorkItemCompleted { task, .. }
        | EventKind::WorkItemCancelled { task, .. }
        | EventKind::WorkItemExpired { task, .. }
        | EventKind::TimerFired { task, .. }
        | EventKind::TimerCancelled { task, .. } => task.to_string(),
        EventKind::WorkItemCreated {
            task, role, deadline, ..
        } => match deadline {
            Some(d) => format!("{task} role={role} deadline={}", offset(*d)),
            None => format!("{task} role={role}"),
        },
        EventKind::WorkItemStarted { task, actor, .. } => format!("{task} by={actor}"),
        EventKind::DataBound {
            item,
            value,
            flag,
            rebound,
            ..
        } => {
            let mut s = format!("{item}={}", value.render());
            if let Some(f) = flag {
                s.push_str(&format!(" ({})", f.code()));
            }
            if *rebound {
                s.push_str(" rebound");
            }
            s
        }
        EventKind::ScoreComputed { task, total, risk, .. } => {
            format!("{task} total={total} risk={}", risk.label())
        }
        EventKind::DecisionTaken { task, branch } => format!("{task} -> {branch}"),
        EventKind::TimerScheduled {
            task,
            due_at,
            window_end,
            ..
        } => match window_end {
            Some(end) => format!("{task} due={} window={}", offset(*due_at), offset(*end)),
            None => format!("{task} due={}", offset(*due_at)),
        },
        EventKind::OrderPlaced {
            test_code,
            placer_order_id,
            ..
        } => format!("{test_code} {placer_order_id}"),
        EventKind::NotificationRaised {
            role,
            severity,
            message,
            ..
        } => {
            let sev = match severity {
                crate::engine::Severity::Info => "info",
                crate::engine::Severity::Warning => "warning",
            };
            format!("{role} {sev}: {message}")
        }
        EventKind::CaseCompleted { outcome } => outcome.clone(),
        EventKind::CaseAborted { reason } => reason.clone(),
    };
    format!("{} {} {}", offset(entry.event.at), kind.name(), detail)
}

/// First line where the traces differ.
pub fn first_divergence(expected: &[String], actual: &[String]) -> Option<Divergence> {
    let n = expected.len().max(actual.len());
    (0..n).find_map(|i| {
        let (e, a) = (expected.get(i), actual.get(i));
        (e != a).then(|| Divergence {
            index: i,
            expected: e.cloned(),
            actual: a.cloned(),
        })
    })
}

struct Run<'a> {
    rt: &'a Runtime,
    sc: &'a Scenario,
    case: Option<CaseId>,
    transitions: Option<usize>,
}

impl Run<'_> {
    fn case(&self) -> Result<&CaseId, String> {
        self.case.as_ref().ok_or_else(|| "no case has been started".to_string())
    }

    fn step(&mut self, step: &Step) -> Result<(), String> {
        let err = |e: RuntimeError| e.to_string();
        match step {
            Step::StartCase { patient_ref } => {
                let guideline = self.rt.deployments().first().map(|d| d.id.clone()).ok_or("nothing deployed")?;
                let patient = patient_ref.as_deref().unwrap_or(&self.sc.patient_ref);
                let view = self.rt.start_case(&guideline, patient, &Actor::doctor()).map_err(err)?;
                self.case = Some(view.case_id);
            }
            Step::Answer {
                question,
                option,
                actor,
                role,
            } => {
                let case = self.case()?.clone();
                let actor = Actor::new(
                    actor.as_deref().unwrap_or("doctor"),
                    role.as_deref().unwrap_or("doctor"),
                );
                let out = self.rt.answer_scene(&case, question, option, &actor).map_err(err)?;
                self.transitions = Some(out.scene.transitions());
            }
            Step::Complete {
                task,
                outputs,
                actor,
                role,
            } => {
                let case = self.case()?.clone();
                let item = self
                    .rt
                    .live_item_for_task(&case, task)
                    .map_err(err)?
                    .ok_or_else(|| format!("no live work item for task {task}"))?;
                let role = role.clone().unwrap_or_else(|| item.role.to_string());
                let actor = Actor::new(actor.as_deref().unwrap_or(&role), &role);
                let outputs: Bindings = outputs
                    .iter()
                    .map(|(k, v)| (DataItemId::new(k.as_str()), v.clone()))
                    .collect();
                self.rt.complete_work_item(&item.item_id, &outputs, &actor).map_err(err)?;
            }
            Step::Advance { by } => {
                self.rt.advance_by(*by).map_err(err)?;
            }
            Step::EmrResult { test_code, value, flag } => {
                let case = self.case()?.clone();
                let out = self.rt.inject_result(&case, test_code, value, *flag).map_err(err)?;
                if let Some(e) = out.error {
                    return Err(format!("result rejected ({}): {e}", out.code.as_str()));
                }
            }
            Step::Abort { reason, role } => {
                let case = self.case()?.clone();
                let role = role.as_deref().unwrap_or("doctor");
                self.rt.abort_case(&case, reason, &Actor::new(role, role)).map_err(err)?;
            }
            Step::SetProfile { profile } => self.rt.set_profile(profile.clone()),
            Step::ExpectSnapshot(snap) => {
                let case = self.case()?.clone();
                let view = self.rt.case_view(&case).map_err(err)?;
                let timers = self.rt.pending_timer_count(&case);
                let mismatches = compare_snapshot(snap, &view, timers);
                if !mismatches.is_empty() {
                    return Err(format!("snapshot mismatch: {}", mismatches.join("; ")));
                }
            }
        }
        Ok(())
    }
}

fn compare_snapshot(snap: &SnapshotExpectation, view: &CaseView, timers: usize) -> Vec<String> {
    let mut out = Vec::new();
    let names = |state: TaskState| -> Vec<String> { view.tasks_in(state).into_iter().map(|t| t.to_string()).collect() };
    if let Some(status) = &snap.status {
        if view.status.label() != status {
            out.push(format!("status is {}, expected {status}", view.status.label()));
        }
    }
    for (label, want, state) in [
        ("enabled", &snap.enabled, TaskState::Enabled),
        ("completed", &snap.completed, TaskState::Completed),
    ] {
        if let Some(want) = want {
            let mut want = want.clone();
            want.sort();
            let got = names(state);
            if got != want {
                out.push(format!("{label} tasks are {got:?}, expected {want:?}"));
            }
        }
    }
    if let Some(n) = snap.live_work_items {
        if view.live_work_items.len() != n {
            out.push(format!("{} live work items, expected {n}", view.live_work_items.len()));
        }
    }
    if let Some(n) = snap.pending_timers {
        if timers != n {
            out.push(format!("{timers} pending timers, expected {n}"));
        }
    }
    if let Some(bindings) = &snap.bindings {
        for (k, v) in bindings {
            if view.bindings.get(k.as_str()) != Some(v) {
                out.push(format!("{k} is {:?}, expected {}", view.bindings.get(k.as_str()).map(Value::render), v.render()));
            }
        }
    }
    out
}

/// Runs a scenario against a fresh virtual-time runtime.
pub fn run_scenario(def: &GuidelineDefinition, sc: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    let mut config = RuntimeConfig::virtual_at(sc.start);
    config.profile = sc.emr_profile.clone();
    let rt = Runtime::new(config);
    rt.deploy(def.clone())?;
    Ok(run_on(&rt, sc))
}

/// Runs a scenario's steps on an existing runtime.
pub fn run_on(rt: &Runtime, sc: &Scenario) -> ScenarioReport {
    let mut run = Run {
        rt,
        sc,
        case: None,
        transitions: None,
    };
    let mut failures = Vec::new();
    for (i, spec) in sc.steps.iter().enumerate() {
        match (run.step(&spec.step), &spec.expect_error) {
            (Ok(()), None) => {}
            (Ok(()), Some(want)) => failures.push(format!("step {}: expected error containing `{want}`", i + 1)),
            (Err(e), Some(want)) if e.contains(want.as_str()) => {}
            (Err(e), _) => failures.push(format!("step {}: {e}", i + 1)),
        }
    }

    let entries = match &run.case {
        Some(c) => rt.case_entries(c),
        None => Vec::new(),
    };
    let origin = entries.first().map(|e| e.event.at).unwrap_or(sc.start);
    let full_trace: Vec<String> = entries.iter().map(|e| trace_line(e, origin)).collect();
    let trace: Vec<String> = entries
        .iter()
        .filter(|e| sc.expect.kinds.as_ref().is_none_or(|k| k.iter().any(|k| k == e.kind())))
        .map(|e| trace_line(e, origin))
        .collect();
    let divergence = sc
        .expect
        .trace
        .as_ref()
        .and_then(|want| first_divergence(want, &trace));

    if let Some(want) = sc.expect.scene_transitions {
        if run.transitions != Some(want) {
            failures.push(format!("scene transitions {:?}, expected {want}", run.transitions));
        }
    }
    let final_view = run.case.as_ref().and_then(|c| rt.case_view(c).ok());
    if let Some(view) = &final_view {
        if let Some(want) = &sc.expect.status {
            if view.status.label() != want {
                failures.push(format!("final status {}, expected {want}", view.status.label()));
            }
        }
        if let Some(want) = &sc.expect.outcome {
            match &view.status {
                CaseStatus::Completed { outcome } if outcome == want => {}
                other => failures.push(format!("final status {other:?}, expected outcome {want}")),
            }
        }
    }

    ScenarioReport {
        name: sc.name.clone(),
        case_id: run.case.clone(),
        trace,
        full_trace,
        divergence,
        failures,
        scene_transitions: run.transitions,
        final_view,
        entries,
    }
}

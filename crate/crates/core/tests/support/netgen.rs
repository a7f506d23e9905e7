//! Random acyclic task networks, a random driver, and a brute-force
//! reachability oracle for the enabling rule.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use carepath_core::engine::{EngineEvent, EventKind};
use carepath_core::guideline::{Bindings, GuidelineDefinition, Value};
use carepath_core::ids::{CaseId, DataItemId, WorkItemId};
use carepath_core::runtime::{Actor, Runtime};
use carepath_core::time::{Duration, Instant};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value as Json};

const LABELS: [&str; 3] = ["x", "y", "z"];
pub const END: &str = "end";

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Action { staffed: bool },
    Decision { staffed: bool },
    Wait,
}

struct Node {
    kind: Kind,
    branches: Vec<String>,
}

/// A JSON document for a random valid network of 3..=`max_tasks` tasks
/// feeding one terminal.
pub fn random_document(rng: &mut impl Rng, max_tasks: usize) -> String {
    let n = rng.random_range(3..=max_tasks);
    let mut nodes: Vec<Node> = Vec::new();
    // (from, to, branch, condition), non-terminal indices; `n` is the terminal.
    let mut edges: Vec<(usize, usize, Option<String>, Option<String>)> = Vec::new();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n + 1];

    let label_for = |nodes: &[Node], rng: &mut dyn rand::RngCore, from: usize| -> Option<String> {
        match nodes[from].kind {
            Kind::Decision { .. } => Some(nodes[from].branches.choose(rng).unwrap().clone()),
            _ => None,
        }
    };

    for i in 0..n {
        let mine: Vec<usize> = if i == 0 {
            Vec::new()
        } else {
            let k = rng.random_range(1..=2.min(i));
            let mut picked = BTreeSet::new();
            while picked.len() < k {
                picked.insert(rng.random_range(0..i));
            }
            picked.into_iter().collect()
        };
        let kind = if i > 0 && mine.len() == 1 && rng.random_bool(0.2) {
            Kind::Wait
        } else if rng.random_bool(0.35) {
            Kind::Decision { staffed: rng.random_bool(0.7) }
        } else {
            Kind::Action { staffed: rng.random_bool(0.6) }
        };
        let branches = match kind {
            Kind::Decision { .. } => {
                let k = rng.random_range(2..=3);
                (0..k).map(|b| if b + 1 == k { "other".to_string() } else { format!("b{b}") }).collect()
            }
            _ => Vec::new(),
        };
        nodes.push(Node { kind, branches });
        for &p in &mine {
            let label = label_for(&nodes, rng, p);
            edges.push((p, i, label, None));
        }
        preds[i] = mine;
    }

    // Every decision branch and every other task needs a way out.
    for i in 0..n {
        let targets = |rng: &mut dyn rand::RngCore| -> usize {
            if i + 1 < n && rng.random_bool(0.5) {
                rng.random_range(i + 1..n)
            } else {
                n
            }
        };
        let add = |edges: &mut Vec<_>, preds: &mut Vec<Vec<usize>>, to: usize, label: Option<String>| {
            if !edges.iter().any(|(f, t, l, _): &(usize, usize, Option<String>, Option<String>)| *f == i && *t == to && *l == label) {
                edges.push((i, to, label, None));
                preds[to].push(i);
            }
        };
        match nodes[i].kind {
            Kind::Decision { .. } => {
                for b in nodes[i].branches.clone() {
                    if !edges.iter().any(|(f, _, l, _)| *f == i && l.as_deref() == Some(b.as_str())) {
                        let mut to = targets(rng);
                        // Waits keep a single predecessor.
                        if to < n && matches!(nodes[to].kind, Kind::Wait) {
                            to = n;
                        }
                        add(&mut edges, &mut preds, to, Some(b));
                    }
                }
            }
            _ => {
                if !edges.iter().any(|(f, ..)| *f == i) {
                    let mut to = targets(rng);
                    if to < n && matches!(nodes[to].kind, Kind::Wait) {
                        to = n;
                    }
                    add(&mut edges, &mut preds, to, None);
                }
            }
        }
    }

    // Ancestor decisions of each task, for conditions that are decided
    // before they are evaluated.
    let mut ancestors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n + 1];
    for i in 0..=n {
        let mut acc = BTreeSet::new();
        for &p in &preds[i] {
            acc.insert(p);
            acc.extend(ancestors[p].iter().copied());
        }
        ancestors[i] = acc;
    }
    let decided = |set: &BTreeSet<usize>| -> Vec<usize> {
        set.iter().copied().filter(|&a| matches!(nodes[a].kind, Kind::Decision { staffed: true })).collect()
    };

    // Extra guards on action edges, keeping one unguarded way out.
    for i in 0..n {
        if !matches!(nodes[i].kind, Kind::Action { .. }) {
            continue;
        }
        let mut upstream: BTreeSet<usize> = ancestors[i].clone();
        upstream.insert(i);
        let sources = decided(&upstream);
        let out: Vec<usize> = (0..edges.len()).filter(|&k| edges[k].0 == i).collect();
        if out.len() >= 2 && !sources.is_empty() {
            for &k in &out[1..] {
                if rng.random_bool(0.5) {
                    let d = *sources.choose(rng).unwrap();
                    let l = LABELS.choose(rng).unwrap();
                    let op = if rng.random_bool(0.5) { "=" } else { "!=" };
                    edges[k].3 = Some(format!("d{d} {op} '{l}'"));
                }
            }
        }
    }

    let name = |i: usize| if i == n { END.to_string() } else { format!("t{i}") };
    let tasks: Vec<Json> = nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let id = name(i);
            match node.kind {
                Kind::Action { staffed } => {
                    let mut t = json!({"id": id, "kind": "Action"});
                    if staffed {
                        t["role"] = json!("staff");
                    }
                    t
                }
                Kind::Wait => {
                    let min = rng.random_range(1..=3);
                    let mut temporal = json!({"anchor": name(preds[i][0]), "min_delay": format!("{min}h")});
                    if rng.random_bool(0.5) {
                        temporal["max_delay"] = json!(format!("{}h", min + rng.random_range(0..=2)));
                    }
                    json!({"id": id, "kind": "Wait", "temporal": temporal})
                }
                Kind::Decision { staffed } => {
                    let mut upstream = decided(&ancestors[i]);
                    if staffed {
                        upstream = vec![i];
                    }
                    let branches: Vec<Json> = node
                        .branches
                        .iter()
                        .map(|b| {
                            let when = if b == "other" || upstream.is_empty() {
                                if b == "other" { "true".to_string() } else { "false".to_string() }
                            } else {
                                let d = *upstream.choose(rng).unwrap();
                                format!("d{d} = '{}'", LABELS.choose(rng).unwrap())
                            };
                            json!({"label": b, "when": when})
                        })
                        .collect();
                    let mut t = json!({"id": id, "kind": "Decision", "branches": branches});
                    if staffed {
                        t["role"] = json!("doctor");
                        t["outputs"] = json!([format!("d{i}")]);
                    }
                    t
                }
            }
        })
        .chain(std::iter::once(json!({"id": END, "kind": "Terminal", "outcome": "done"})))
        .collect();
    let data_items: Vec<Json> = nodes
        .iter()
        .enumerate()
        .filter(|(_, node)| matches!(node.kind, Kind::Decision { staffed: true }))
        .map(|(i, _)| json!({"id": format!("d{i}"), "type": "enumeration", "labels": LABELS, "source": "doctor-input"}))
        .collect();
    let edges: Vec<Json> = edges
        .iter()
        .map(|(f, t, label, cond)| {
            let mut e = json!({"from": name(*f), "to": name(*t)});
            if let Some(l) = label {
                e["branch"] = json!(l);
            }
            if let Some(c) = cond {
                e["when"] = json!(c);
            }
            e
        })
        .collect();
    let doc = json!({
        "guideline": {"id": "net", "title": "Random network", "version": "1"},
        "data_items": data_items,
        "tasks": tasks,
        "edges": edges,
        "entry_task": "t0",
    });
    serde_json::to_string_pretty(&doc).unwrap()
}

/// Runs a case to completion, choosing among live work items and clock
/// advances at random. Returns the case id, or an error if the case stalls.
pub fn drive(rt: &Runtime, def: &GuidelineDefinition, rng: &mut impl Rng) -> Result<CaseId, String> {
    let view = rt.start_case(&def.id, "PAT-RANDOM", &Actor::doctor()).map_err(|e| e.to_string())?;
    let case = view.case_id;
    for _ in 0..500 {
        let view = rt.case_view(&case).map_err(|e| e.to_string())?;
        if !view.status.is_running() {
            return Ok(case);
        }
        let items: Vec<_> = view.live_work_items.clone();
        let timers = rt.pending_timer_count(&case);
        if items.is_empty() && timers == 0 {
            return Err(format!("case stalled with states {:?}", view.task_states));
        }
        if !items.is_empty() && (timers == 0 || rng.random_bool(0.75)) {
            let item = items.choose(rng).unwrap();
            let task = def.task(item.task_id.as_str()).unwrap();
            let outputs: Bindings = task
                .outputs
                .iter()
                .map(|o| (o.clone(), Value::Text(LABELS.choose(rng).unwrap().to_string())))
                .collect();
            let actor = Actor::new(item.role.as_str(), item.role.as_str());
            rt.complete_work_item(&WorkItemId::new(item.item_id.as_str()), &outputs, &actor)
                .map_err(|e| format!("completing {}: {e}", item.task_id))?;
        } else {
            let by = Duration::from_minutes(rng.random_range(15..=240));
            rt.advance_by(by).map_err(|e| e.to_string())?;
        }
    }
    Err("case did not finish in 500 steps".into())
}

/// Tasks reachable from the entry over satisfied edges, found by listing
/// every path. An edge is satisfied when its source completed, its branch
/// is the recorded decision and its guard holds on the final bindings.
pub fn reachable_by_paths(def: &GuidelineDefinition, decisions: &BTreeMap<String, String>, bindings: &Bindings) -> BTreeSet<String> {
    let satisfied = |e: &carepath_core::guideline::Edge| {
        if let Some(b) = &e.branch {
            if decisions.get(e.from.as_str()) != Some(b) {
                return false;
            }
        }
        e.condition.as_ref().is_none_or(|c| c.eval(bindings).unwrap_or(false))
    };
    let mut reached = BTreeSet::new();
    let mut stack: Vec<Vec<String>> = vec![vec![def.entry_task.to_string()]];
    while let Some(path) = stack.pop() {
        let last = path.last().unwrap().clone();
        reached.insert(last.clone());
        for e in def.outgoing(&last).filter(|e| !e.is_loop) {
            if satisfied(e) {
                let mut next = path.clone();
                next.push(e.to.to_string());
                stack.push(next);
            }
        }
    }
    reached
}

/// Checks one finished case's log against the oracle.
pub fn check_case(def: &GuidelineDefinition, events: &[EngineEvent]) -> Result<(), String> {
    let mut decisions = BTreeMap::new();
    let mut bindings = Bindings::new();
    let mut completed_at: BTreeMap<String, usize> = BTreeMap::new();
    let mut enabled_at: BTreeMap<String, usize> = BTreeMap::new();
    for (i, ev) in events.iter().enumerate() {
        match &ev.kind {
            EventKind::DecisionTaken { task, branch } => {
                decisions.insert(task.to_string(), branch.clone());
            }
            EventKind::DataBound { item, value, .. } => {
                bindings.insert(DataItemId::new(item.as_str()), value.clone());
            }
            EventKind::WorkItemCompleted { outputs, .. } => {
                bindings.extend(outputs.iter().map(|(k, v)| (k.clone(), v.clone())));
            }
            EventKind::TaskCompleted { task } => {
                completed_at.insert(task.to_string(), i);
            }
            EventKind::TaskEnabled { task } if enabled_at.insert(task.to_string(), i).is_some() => {
                return Err(format!("{task} enabled twice"));
            }
            _ => {}
        }
    }
    let reachable = reachable_by_paths(def, &decisions, &bindings);
    let enabled: BTreeSet<String> = enabled_at.keys().cloned().collect();
    if enabled != reachable {
        return Err(format!("enabled {enabled:?} but the oracle reaches {reachable:?}"));
    }
    for (task, &at) in &enabled_at {
        for e in def.incoming(task).filter(|e| !e.is_loop) {
            let pred = e.from.as_str();
            if reachable.contains(pred) && !completed_at.get(pred).is_some_and(|&c| c < at) {
                return Err(format!("{task} enabled at event {at} before predecessor {pred} completed"));
            }
        }
    }
    match events.last().map(|e| &e.kind) {
        Some(EventKind::CaseCompleted { outcome }) if outcome == "done" => Ok(()),
        other => Err(format!("case ended with {other:?}")),
    }
}

pub fn t0() -> Instant {
    Instant::parse_rfc3339("2025-03-01T08:00:00Z").unwrap()
}

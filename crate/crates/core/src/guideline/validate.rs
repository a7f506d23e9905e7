//! Static checks run before a guideline may be deployed.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::Serialize;

use super::{Condition, DataSource, GuidelineDefinition, Literal, TaskKind, ValueType};
use crate::scoring::RiskClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingCode {
    DuplicateTaskId,
    DuplicateDataItem,
    DuplicateEnumLabel,
    EmptyEnumeration,
    DuplicateTestCode,
    EmrItemWithoutTestCode,
    UnknownEntryTask,
    EntryHasIncoming,
    DanglingEdge,
    UnreachableTask,
    Cycle,
    LoopNotBackEdge,
    LoopWithoutCondition,
    UndeclaredDataItem,
    ConditionType,
    DecisionBranches,
    DecisionDefault,
    DuplicateBranchLabel,
    MissingBranchLabel,
    UnknownBranch,
    BranchOnNonDecision,
    BranchWithoutEdge,
    MissingTemporal,
    UnknownAnchor,
    AnchorDoesNotPrecede,
    TemporalWindow,
    MissingRole,
    EmptySurvey,
    QuestionItem,
    QuestionOptions,
    ScoringItem,
    EmptyOutcome,
    EmptyPlan,
    TerminalHasSuccessors,
    DeadEnd,
    UnknownTestCode,
}

impl FindingCode {
    pub fn as_str(self) -> &'static str {
        match self {
            FindingCode::DuplicateTaskId => "duplicate task id",
            FindingCode::DuplicateDataItem => "duplicate data item",
            FindingCode::DuplicateEnumLabel => "duplicate enumeration label",
            FindingCode::EmptyEnumeration => "empty enumeration",
            FindingCode::DuplicateTestCode => "duplicate test code",
            FindingCode::EmrItemWithoutTestCode => "emr item without test code",
            FindingCode::UnknownEntryTask => "unknown entry task",
            FindingCode::EntryHasIncoming => "entry task has incoming edges",
            FindingCode::DanglingEdge => "dangling edge",
            FindingCode::UnreachableTask => "unreachable task",
            FindingCode::Cycle => "cycle without loop flag",
            FindingCode::LoopNotBackEdge => "loop edge does not close a cycle",
            FindingCode::LoopWithoutCondition => "loop edge without condition",
            FindingCode::UndeclaredDataItem => "undeclared data item",
            FindingCode::ConditionType => "condition type error",
            FindingCode::DecisionBranches => "decision needs at least two branches",
            FindingCode::DecisionDefault => "decision default branch",
            FindingCode::DuplicateBranchLabel => "duplicate branch label",
            FindingCode::MissingBranchLabel => "missing branch label",
            FindingCode::UnknownBranch => "unknown branch",
            FindingCode::BranchOnNonDecision => "branch label on non-decision edge",
            FindingCode::BranchWithoutEdge => "branch without edge",
            FindingCode::MissingTemporal => "wait without temporal constraint",
            FindingCode::UnknownAnchor => "unknown temporal anchor",
            FindingCode::AnchorDoesNotPrecede => "temporal anchor does not precede task",
            FindingCode::TemporalWindow => "invalid temporal window",
            FindingCode::MissingRole => "missing role",
            FindingCode::EmptySurvey => "enquiry without questions",
            FindingCode::QuestionItem => "invalid question item",
            FindingCode::QuestionOptions => "question options mismatch",
            FindingCode::ScoringItem => "invalid scoring item",
            FindingCode::EmptyOutcome => "terminal without outcome",
            FindingCode::EmptyPlan => "subplan without plan",
            FindingCode::TerminalHasSuccessors => "terminal has successors",
            FindingCode::DeadEnd => "dead end",
            FindingCode::UnknownTestCode => "unknown test code",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: FindingCode,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.code.as_str(), self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
    }

    pub fn error_count(&self) -> usize {
        self.errors().count()
    }

    pub fn warning_count(&self) -> usize {
        self.warnings().count()
    }

    pub fn is_deployable(&self) -> bool {
        self.error_count() == 0
    }

    pub fn has(&self, code: FindingCode) -> bool {
        self.findings.iter().any(|f| f.code == code)
    }

    fn error(&mut self, code: FindingCode, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Error,
            code,
            message: message.into(),
        });
    }

    fn warning(&mut self, code: FindingCode, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Warning,
            code,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        write!(
            f,
            "{} error(s), {} warning(s)",
            self.error_count(),
            self.warning_count()
        )
    }
}

/// Runs every static check. Findings are reported in a stable order.
pub fn validate(def: &GuidelineDefinition) -> ValidationReport {
    let mut report = ValidationReport::default();
    let items = check_data_items(def, &mut report);
    let tasks = check_task_ids(def, &mut report);

    if !tasks.contains_key(def.entry_task.as_str()) {
        report.error(
            FindingCode::UnknownEntryTask,
            format!("entry task `{}` is not declared", def.entry_task),
        );
    }

    // Edges whose endpoints both exist; everything graph-shaped works on these.
    let mut graph = Graph::new(def.tasks.len());
    for edge in &def.edges {
        let from = tasks.get(edge.from.as_str()).copied();
        let to = tasks.get(edge.to.as_str()).copied();
        match (from, to) {
            (Some(f), Some(t)) => graph.add(f, t, edge.is_loop),
            _ => {
                let missing: Vec<&str> = [edge.from.as_str(), edge.to.as_str()]
                    .into_iter()
                    .filter(|id| !tasks.contains_key(id))
                    .collect();
                report.error(
                    FindingCode::DanglingEdge,
                    format!(
                        "edge {} -> {} names unknown task(s) {}",
                        edge.from,
                        edge.to,
                        missing
                            .iter()
                            .map(|m| format!("`{m}`"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                );
            }
        }
        if let Some(cond) = &edge.condition {
            check_condition(
                cond,
                &items,
                &format!("edge {} -> {}", edge.from, edge.to),
                &mut report,
            );
        }
    }

    if let Some(&entry) = tasks.get(def.entry_task.as_str()) {
        if def.incoming(def.entry_task.as_str()).next().is_some() {
            report.error(
                FindingCode::EntryHasIncoming,
                format!("entry task `{}` has incoming edges", def.entry_task),
            );
        }
        let reachable = graph.reachable_from(entry, true);
        for (idx, task) in def.tasks.iter().enumerate() {
            if !reachable.contains(&idx) && tasks.get(task.id.as_str()) == Some(&idx) {
                report.error(
                    FindingCode::UnreachableTask,
                    format!("task `{}` is not reachable from `{}`", task.id, def.entry_task),
                );
            }
        }
    }

    if let Some(cycle) = graph.find_cycle() {
        let names: Vec<&str> = cycle.iter().map(|&i| def.tasks[i].id.as_str()).collect();
        report.error(
            FindingCode::Cycle,
            format!(
                "cycle {} is not closed by an edge flagged loop",
                names.join(" -> ")
            ),
        );
    }

    for edge in def.edges.iter().filter(|e| e.is_loop) {
        if let (Some(&f), Some(&t)) = (tasks.get(edge.from.as_str()), tasks.get(edge.to.as_str()))
        {
            if !graph.reachable_from(t, false).contains(&f) {
                report.warning(
                    FindingCode::LoopNotBackEdge,
                    format!(
                        "loop edge {} -> {} does not return to an earlier task",
                        edge.from, edge.to
                    ),
                );
            }
        }
        if edge.condition.is_none() {
            report.warning(
                FindingCode::LoopWithoutCondition,
                format!("loop edge {} -> {} repeats unconditionally", edge.from, edge.to),
            );
        }
    }

    for task in &def.tasks {
        check_task(def, task, &items, &tasks, &graph, &mut report);
    }

    report
}

type ItemTypes<'a> = HashMap<&'a str, &'a ValueType>;

fn check_data_items<'a>(def: &'a GuidelineDefinition, report: &mut ValidationReport) -> ItemTypes<'a> {
    let mut items = HashMap::new();
    let mut codes = HashSet::new();
    for item in &def.data_items {
        if items.insert(item.id.as_str(), &item.value_type).is_some() {
            report.error(
                FindingCode::DuplicateDataItem,
                format!("data item `{}` declared more than once", item.id),
            );
        }
        if let ValueType::Enumeration(labels) = &item.value_type {
            if labels.is_empty() {
                report.error(
                    FindingCode::EmptyEnumeration,
                    format!("enumeration `{}` has no labels", item.id),
                );
            }
            let mut seen = HashSet::new();
            for label in labels {
                if !seen.insert(label.as_str()) {
                    report.error(
                        FindingCode::DuplicateEnumLabel,
                        format!("enumeration `{}` repeats label `{label}`", item.id),
                    );
                }
            }
        }
        match (&item.test_code, item.source) {
            (Some(code), DataSource::EmrResult) => {
                if !codes.insert(code.as_str()) {
                    report.error(
                        FindingCode::DuplicateTestCode,
                        format!("test code `{code}` mapped to more than one data item"),
                    );
                }
            }
            (None, DataSource::EmrResult) => report.warning(
                FindingCode::EmrItemWithoutTestCode,
                format!("emr-result item `{}` has no test code and can never be bound", item.id),
            ),
            _ => {}
        }
    }
    items
}

fn check_task_ids<'a>(
    def: &'a GuidelineDefinition,
    report: &mut ValidationReport,
) -> HashMap<&'a str, usize> {
    let mut tasks = HashMap::new();
    for (idx, task) in def.tasks.iter().enumerate() {
        if tasks.contains_key(task.id.as_str()) {
            report.error(
                FindingCode::DuplicateTaskId,
                format!("task id `{}` declared more than once", task.id),
            );
        } else {
            tasks.insert(task.id.as_str(), idx);
        }
    }
    tasks
}

fn check_condition(cond: &Condition, items: &ItemTypes<'_>, site: &str, report: &mut ValidationReport) {
    match cond {
        Condition::True | Condition::False => {}
        Condition::Not(inner) => check_condition(inner, items, site, report),
        Condition::And(l, r) | Condition::Or(l, r) => {
            check_condition(l, items, site, report);
            check_condition(r, items, site, report);
        }
        Condition::Compare { item, op, literal } => {
            let Some(ty) = items.get(item.as_str()) else {
                report.error(
                    FindingCode::UndeclaredDataItem,
                    format!("{site}: condition references undeclared data item `{item}`"),
                );
                return;
            };
            let type_ok = matches!(
                (ty, literal),
                (ValueType::Number, Literal::Number(_))
                    | (ValueType::Text, Literal::Text(_))
                    | (ValueType::Boolean, Literal::Bool(_))
                    | (ValueType::Enumeration(_), Literal::Text(_))
            );
            if !type_ok {
                report.error(
                    FindingCode::ConditionType,
                    format!(
                        "{site}: `{item}` is {} but is compared with a {} literal",
                        ty.name(),
                        literal.type_name()
                    ),
                );
                return;
            }
            if op.is_ordering() && !matches!(ty, ValueType::Number) {
                report.error(
                    FindingCode::ConditionType,
                    format!(
                        "{site}: operator `{}` needs a number but `{item}` is {}",
                        op.symbol(),
                        ty.name()
                    ),
                );
            }
            if let (ValueType::Enumeration(labels), Literal::Text(t)) = (ty, literal) {
                if !labels.contains(t) {
                    report.error(
                        FindingCode::ConditionType,
                        format!("{site}: `{t}` is not a label of enumeration `{item}`"),
                    );
                }
            }
        }
    }
}

fn check_item_refs<'a>(
    ids: impl IntoIterator<Item = &'a crate::ids::DataItemId>,
    items: &ItemTypes<'_>,
    site: &str,
    report: &mut ValidationReport,
) {
    for id in ids {
        if !items.contains_key(id.as_str()) {
            report.error(
                FindingCode::UndeclaredDataItem,
                format!("{site} references undeclared data item `{id}`"),
            );
        }
    }
}

fn check_task(
    def: &GuidelineDefinition,
    task: &super::TaskNode,
    items: &ItemTypes<'_>,
    tasks: &HashMap<&str, usize>,
    graph: &Graph,
    report: &mut ValidationReport,
) {
    let site = format!("task `{}`", task.id);
    check_item_refs(&task.inputs, items, &format!("{site} input"), report);
    check_item_refs(&task.outputs, items, &format!("{site} output"), report);
    if let Some(pre) = &task.precondition {
        check_condition(pre, items, &format!("{site} precondition"), report);
    }

    if let Some(temporal) = &task.temporal {
        match tasks.get(temporal.anchor.as_str()) {
            None => report.error(
                FindingCode::UnknownAnchor,
                format!("{site}: temporal anchor `{}` is not declared", temporal.anchor),
            ),
            Some(&anchor) => {
                let me = tasks.get(task.id.as_str()).copied();
                let precedes = me.is_some_and(|me| {
                    anchor != me && graph.reachable_from(anchor, false).contains(&me)
                });
                if !precedes {
                    report.error(
                        FindingCode::AnchorDoesNotPrecede,
                        format!(
                            "{site}: temporal anchor `{}` is not a predecessor",
                            temporal.anchor
                        ),
                    );
                }
            }
        }
        if let Some(max) = temporal.max_delay {
            if max < temporal.min_delay {
                report.error(
                    FindingCode::TemporalWindow,
                    format!(
                        "{site}: max_delay {max} is shorter than min_delay {}",
                        temporal.min_delay
                    ),
                );
            }
        }
    }

    let outgoing: Vec<_> = def.outgoing(task.id.as_str()).collect();
    match &task.kind {
        TaskKind::Decision { branches } => {
            if branches.len() < 2 {
                report.error(
                    FindingCode::DecisionBranches,
                    format!("{site} has {} branch(es)", branches.len()),
                );
            }
            let mut labels = HashSet::new();
            for (i, branch) in branches.iter().enumerate() {
                if !labels.insert(branch.label.as_str()) {
                    report.error(
                        FindingCode::DuplicateBranchLabel,
                        format!("{site} repeats branch `{}`", branch.label),
                    );
                }
                check_condition(
                    &branch.condition,
                    items,
                    &format!("{site} branch `{}`", branch.label),
                    report,
                );
                let is_last = i + 1 == branches.len();
                if branch.condition.is_true_literal() && !is_last {
                    report.error(
                        FindingCode::DecisionDefault,
                        format!("{site}: default branch `{}` must be last", branch.label),
                    );
                }
                if is_last && !branch.condition.is_true_literal() {
                    report.error(
                        FindingCode::DecisionDefault,
                        format!("{site}: last branch `{}` must be the default `true`", branch.label),
                    );
                }
                if !outgoing
                    .iter()
                    .any(|e| e.branch.as_deref() == Some(branch.label.as_str()))
                {
                    report.warning(
                        FindingCode::BranchWithoutEdge,
                        format!("{site}: branch `{}` has no outgoing edge", branch.label),
                    );
                }
            }
            for edge in &outgoing {
                match &edge.branch {
                    None => report.error(
                        FindingCode::MissingBranchLabel,
                        format!("edge {} -> {} leaves a decision without a branch", edge.from, edge.to),
                    ),
                    Some(b) if !labels.contains(b.as_str()) => report.error(
                        FindingCode::UnknownBranch,
                        format!("edge {} -> {} names unknown branch `{b}`", edge.from, edge.to),
                    ),
                    _ => {}
                }
            }
        }
        _ => {
            for edge in outgoing.iter().filter(|e| e.branch.is_some()) {
                report.error(
                    FindingCode::BranchOnNonDecision,
                    format!("edge {} -> {} has a branch label but `{}` is not a decision", edge.from, edge.to, task.id),
                );
            }
        }
    }

    match &task.kind {
        TaskKind::Wait if task.temporal.is_none() => report.error(
            FindingCode::MissingTemporal,
            format!("{site} is a Wait without a temporal constraint"),
        ),
        TaskKind::Enquiry { questions, scoring } => {
            if task.role.is_none() {
                report.error(FindingCode::MissingRole, format!("{site}: enquiry needs a role"));
            }
            if questions.is_empty() {
                report.error(FindingCode::EmptySurvey, format!("{site} has no questions"));
            }
            let mut seen = HashSet::new();
            for q in questions {
                if !seen.insert(q.item.as_str()) {
                    report.error(
                        FindingCode::QuestionItem,
                        format!("{site} asks `{}` twice", q.item),
                    );
                }
                match items.get(q.item.as_str()) {
                    Some(ValueType::Enumeration(labels)) => {
                        let opts: BTreeSet<&str> = q.options.iter().map(|o| o.label.as_str()).collect();
                        let enum_labels: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
                        if opts.len() != q.options.len() || opts != enum_labels {
                            report.error(
                                FindingCode::QuestionOptions,
                                format!(
                                    "{site}: options of `{}` must be exactly the enumeration labels, each once",
                                    q.item
                                ),
                            );
                        }
                    }
                    Some(_) => report.error(
                        FindingCode::QuestionItem,
                        format!("{site}: question item `{}` must be an enumeration", q.item),
                    ),
                    None => report.error(
                        FindingCode::UndeclaredDataItem,
                        format!("{site}: question item `{}` is not declared", q.item),
                    ),
                }
            }
            if let Some(scoring) = scoring {
                if scoring.threshold < 0 {
                    report.error(
                        FindingCode::ScoringItem,
                        format!("{site}: threshold must be non-negative"),
                    );
                }
                match items.get(scoring.total.as_str()) {
                    Some(ValueType::Number) => {}
                    _ => report.error(
                        FindingCode::ScoringItem,
                        format!("{site}: score total `{}` must be a declared number", scoring.total),
                    ),
                }
                match items.get(scoring.risk.as_str()) {
                    Some(ValueType::Enumeration(labels))
                        if RiskClass::ALL
                            .iter()
                            .all(|r| labels.iter().any(|l| l == r.label())) => {}
                    _ => report.error(
                        FindingCode::ScoringItem,
                        format!(
                            "{site}: risk item `{}` must be an enumeration with labels {}",
                            scoring.risk,
                            RiskClass::ALL.map(|r| r.label()).join(", ")
                        ),
                    ),
                }
            }
        }
        TaskKind::Terminal { outcome } => {
            if outcome.is_empty() {
                report.error(FindingCode::EmptyOutcome, format!("{site} has an empty outcome"));
            }
            if !outgoing.is_empty() {
                report.warning(
                    FindingCode::TerminalHasSuccessors,
                    format!("{site} is terminal but has outgoing edges"),
                );
            }
        }
        TaskKind::Subplan { plan } if plan.is_empty() => {
            report.error(FindingCode::EmptyPlan, format!("{site} names no plan"));
        }
        TaskKind::Action { orders } => {
            for code in orders {
                if def.item_for_test_code(code).is_none() {
                    report.warning(
                        FindingCode::UnknownTestCode,
                        format!("{site} orders `{code}` but no emr-result item maps that test code"),
                    );
                }
            }
        }
        _ => {}
    }

    if !matches!(task.kind, TaskKind::Terminal { .. }) && outgoing.is_empty() {
        report.warning(
            FindingCode::DeadEnd,
            format!("{site} has no outgoing edges and is not terminal"),
        );
    }
}

/// Adjacency over task indices, split into forward and loop edges.
pub(crate) struct Graph {
    forward: Vec<Vec<usize>>,
    back: Vec<Vec<usize>>,
}

impl Graph {
    pub(crate) fn new(n: usize) -> Self {
        Graph {
            forward: vec![Vec::new(); n],
            back: vec![Vec::new(); n],
        }
    }

    pub(crate) fn add(&mut self, from: usize, to: usize, is_loop: bool) {
        if is_loop {
            self.back[from].push(to);
        } else {
            self.forward[from].push(to);
        }
    }

    pub(crate) fn reachable_from(&self, start: usize, include_loops: bool) -> HashSet<usize> {
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            let loops = if include_loops { &self.back[n][..] } else { &[] };
            for &m in self.forward[n].iter().chain(loops) {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// First cycle among forward edges, as a task path.
    pub(crate) fn find_cycle(&self) -> Option<Vec<usize>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let n = self.forward.len();
        let mut mark = vec![Mark::New; n];
        for root in 0..n {
            if mark[root] != Mark::New {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            mark[root] = Mark::Active;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if let Some(&succ) = self.forward[node].get(*next) {
                    *next += 1;
                    match mark[succ] {
                        Mark::New => {
                            mark[succ] = Mark::Active;
                            stack.push((succ, 0));
                        }
                        Mark::Active => {
                            let start = stack.iter().position(|&(t, _)| t == succ).unwrap_or(0);
                            let mut path: Vec<usize> = stack[start..].iter().map(|&(t, _)| t).collect();
                            path.push(succ);
                            return Some(path);
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark[node] = Mark::Done;
                    stack.pop();
                }
            }
        }
        None
    }
}

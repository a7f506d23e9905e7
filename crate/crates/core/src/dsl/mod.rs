//! The guideline document format: JSON with a fixed schema.
//!
//! [`parse`] reads a document into a [`GuidelineDefinition`] without
//! validating it; [`serialize`] writes the canonical form (fixed key order,
//! declaration order preserved, two-space indentation, trailing newline).
//! The field reference lives in `docs/guideline-format.md`.

mod condition;
mod json;

pub use condition::{parse_condition, render_condition, ConditionSyntaxError};

use std::fmt::Write as _;

use json::{Key, Node, NodeValue, Pos};

use crate::guideline::{
    Branch, Condition, DataItemDecl, DataSource, Edge, GuidelineDefinition, Question, Scoring,
    TaskKind, TaskNode, TemporalConstraint, ValueType,
};
use crate::ids::{DataItemId, Role, TaskId};
use crate::scoring::ScoreOption;
use crate::time::Duration;

const DURATION_UNITS: [char; 3] = ['m', 'h', 'd'];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DslError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate key `{key}` at {line}:{column}")]
    DuplicateKey {
        key: String,
        line: usize,
        column: usize,
    },
    #[error("unknown task kind `{kind}` at {line}:{column} (expected one of Enquiry, Decision, Action, Wait, Subplan, Terminal)")]
    UnknownTaskKind {
        kind: String,
        line: usize,
        column: usize,
    },
    #[error("invalid document at {line}:{column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
}

impl DslError {
    pub fn location(&self) -> (usize, usize) {
        match self {
            DslError::Syntax { line, column, .. }
            | DslError::DuplicateKey { line, column, .. }
            | DslError::UnknownTaskKind { line, column, .. }
            | DslError::Schema { line, column, .. } => (*line, *column),
        }
    }
}

fn schema(pos: Pos, message: impl Into<String>) -> DslError {
    DslError::Schema {
        line: pos.line,
        column: pos.column,
        message: message.into(),
    }
}

/// Object members with consumption tracking; leftover keys are rejected.
struct Fields<'a> {
    pos: Pos,
    what: &'static str,
    members: Vec<(&'a Key, &'a Node)>,
}

impl<'a> Fields<'a> {
    fn of(node: &'a Node, what: &'static str) -> Result<Self, DslError> {
        match &node.value {
            NodeValue::Object(members) => Ok(Fields {
                pos: node.pos,
                what,
                members: members.iter().map(|(k, v)| (k, v)).collect(),
            }),
            other => Err(schema(node.pos, format!("{what} must be an object, found {}", other.type_name()))),
        }
    }

    fn take(&mut self, key: &str) -> Option<&'a Node> {
        let idx = self.members.iter().position(|(k, _)| k.name == key)?;
        Some(self.members.remove(idx).1)
    }

    fn required(&mut self, key: &str) -> Result<&'a Node, DslError> {
        self.take(key)
            .ok_or_else(|| schema(self.pos, format!("{} is missing required key `{key}`", self.what)))
    }

    fn finish(self) -> Result<(), DslError> {
        match self.members.first() {
            None => Ok(()),
            Some((key, _)) => Err(schema(key.pos, format!("unknown key `{}` in {}", key.name, self.what))),
        }
    }
}

fn as_str<'a>(node: &'a Node, what: &str) -> Result<&'a str, DslError> {
    match &node.value {
        NodeValue::String(s) => Ok(s),
        other => Err(schema(node.pos, format!("{what} must be a string, found {}", other.type_name()))),
    }
}

fn as_nonempty_str<'a>(node: &'a Node, what: &str) -> Result<&'a str, DslError> {
    let s = as_str(node, what)?;
    if s.is_empty() {
        return Err(schema(node.pos, format!("{what} must not be empty")));
    }
    Ok(s)
}

fn as_array<'a>(node: &'a Node, what: &str) -> Result<&'a [Node], DslError> {
    match &node.value {
        NodeValue::Array(items) => Ok(items),
        other => Err(schema(node.pos, format!("{what} must be an array, found {}", other.type_name()))),
    }
}

fn as_bool(node: &Node, what: &str) -> Result<bool, DslError> {
    match &node.value {
        NodeValue::Bool(b) => Ok(*b),
        other => Err(schema(node.pos, format!("{what} must be a boolean, found {}", other.type_name()))),
    }
}

fn as_int(node: &Node, what: &str) -> Result<i64, DslError> {
    match &node.value {
        NodeValue::Number(raw) => raw
            .parse::<i64>()
            .map_err(|_| schema(node.pos, format!("{what} must be an integer, found `{raw}`"))),
        other => Err(schema(node.pos, format!("{what} must be an integer, found {}", other.type_name()))),
    }
}

fn string_list(node: &Node, what: &str) -> Result<Vec<String>, DslError> {
    as_array(node, what)?
        .iter()
        .map(|n| as_nonempty_str(n, what).map(str::to_string))
        .collect()
}

fn item_list(node: Option<&Node>, what: &str) -> Result<Vec<DataItemId>, DslError> {
    match node {
        None => Ok(Vec::new()),
        Some(n) => Ok(string_list(n, what)?.into_iter().map(DataItemId).collect()),
    }
}

fn duration(node: &Node, what: &str) -> Result<Duration, DslError> {
    let text = as_str(node, what)?;
    Duration::parse_with_units(text, &DURATION_UNITS).map_err(|_| {
        schema(
            node.pos,
            format!("{what} `{text}` is not a duration (expected <integer><unit>, unit m, h or d)"),
        )
    })
}

fn condition(node: &Node, what: &str) -> Result<Condition, DslError> {
    let text = as_str(node, what)?;
    parse_condition(text).map_err(|e| DslError::Syntax {
        line: node.pos.line,
        // +1 for the opening quote; escapes inside the string may shift this
        column: node.pos.column + 1 + e.offset,
        message: format!("in {what}: {}", e.message),
    })
}

/// Parses a guideline document. The result has not been validated.
pub fn parse(text: &str) -> Result<GuidelineDefinition, DslError> {
    let root = json::parse(text)?;
    let mut top = Fields::of(&root, "document")?;

    let mut meta = Fields::of(top.required("guideline")?, "guideline")?;
    let id = as_nonempty_str(meta.required("id")?, "guideline id")?.to_string();
    let title = as_str(meta.required("title")?, "guideline title")?.to_string();
    let version = as_nonempty_str(meta.required("version")?, "guideline version")?.to_string();
    meta.finish()?;

    let data_items = as_array(top.required("data_items")?, "data_items")?
        .iter()
        .map(data_item)
        .collect::<Result<Vec<_>, _>>()?;
    let tasks = as_array(top.required("tasks")?, "tasks")?
        .iter()
        .map(task)
        .collect::<Result<Vec<_>, _>>()?;
    let edges = as_array(top.required("edges")?, "edges")?
        .iter()
        .map(edge)
        .collect::<Result<Vec<_>, _>>()?;
    let entry_task = TaskId::new(as_nonempty_str(top.required("entry_task")?, "entry_task")?);
    top.finish()?;

    Ok(GuidelineDefinition {
        id,
        title,
        version,
        data_items,
        tasks,
        edges,
        entry_task,
    })
}

fn data_item(node: &Node) -> Result<DataItemDecl, DslError> {
    let mut f = Fields::of(node, "data item")?;
    let id = DataItemId::new(as_nonempty_str(f.required("id")?, "data item id")?);
    let type_node = f.required("type")?;
    let value_type = match as_str(type_node, "data item type")? {
        "number" => ValueType::Number,
        "text" => ValueType::Text,
        "boolean" => ValueType::Boolean,
        "enumeration" => {
            let labels = f.required("labels")?;
            ValueType::Enumeration(string_list(labels, "enumeration label")?)
        }
        other => {
            return Err(schema(
                type_node.pos,
                format!("unknown data item type `{other}` (expected number, text, boolean or enumeration)"),
            ))
        }
    };
    let source_node = f.required("source")?;
    let source_text = as_str(source_node, "data item source")?;
    let source = DataSource::parse(source_text).ok_or_else(|| {
        schema(
            source_node.pos,
            format!("unknown source `{source_text}` (expected survey, doctor-input or emr-result)"),
        )
    })?;
    let test_code = f
        .take("test_code")
        .map(|n| as_nonempty_str(n, "test_code").map(str::to_string))
        .transpose()?;
    f.finish()?;
    Ok(DataItemDecl {
        id,
        value_type,
        source,
        test_code,
    })
}

fn task(node: &Node) -> Result<TaskNode, DslError> {
    let mut f = Fields::of(node, "task")?;
    let id = TaskId::new(as_nonempty_str(f.required("id")?, "task id")?);
    let kind_node = f.required("kind")?;
    let kind_text = as_str(kind_node, "task kind")?;
    let title = f
        .take("title")
        .map(|n| as_str(n, "task title").map(str::to_string))
        .transpose()?
        .unwrap_or_default();
    let role = f
        .take("role")
        .map(|n| as_nonempty_str(n, "role").map(Role::new))
        .transpose()?;
    let inputs = item_list(f.take("inputs"), "inputs")?;
    let outputs = item_list(f.take("outputs"), "outputs")?;
    let precondition = f
        .take("precondition")
        .map(|n| condition(n, "precondition"))
        .transpose()?;
    let temporal = f.take("temporal").map(temporal).transpose()?;

    let kind = match kind_text {
        "Enquiry" => {
            let questions = as_array(f.required("questions")?, "questions")?
                .iter()
                .map(question)
                .collect::<Result<Vec<_>, _>>()?;
            let scoring = f.take("scoring").map(scoring).transpose()?;
            TaskKind::Enquiry { questions, scoring }
        }
        "Decision" => {
            let branches = as_array(f.required("branches")?, "branches")?
                .iter()
                .map(branch)
                .collect::<Result<Vec<_>, _>>()?;
            TaskKind::Decision { branches }
        }
        "Action" => TaskKind::Action {
            orders: f
                .take("orders")
                .map(|n| string_list(n, "order test code"))
                .transpose()?
                .unwrap_or_default(),
        },
        "Wait" => TaskKind::Wait,
        "Subplan" => TaskKind::Subplan {
            plan: as_nonempty_str(f.required("plan")?, "plan")?.to_string(),
        },
        "Terminal" => TaskKind::Terminal {
            outcome: as_nonempty_str(f.required("outcome")?, "outcome")?.to_string(),
        },
        other => {
            return Err(DslError::UnknownTaskKind {
                kind: other.to_string(),
                line: kind_node.pos.line,
                column: kind_node.pos.column,
            })
        }
    };
    f.finish()?;
    Ok(TaskNode {
        id,
        title,
        kind,
        role,
        inputs,
        outputs,
        precondition,
        temporal,
    })
}

fn temporal(node: &Node) -> Result<TemporalConstraint, DslError> {
    let mut f = Fields::of(node, "temporal constraint")?;
    let anchor = TaskId::new(as_nonempty_str(f.required("anchor")?, "anchor")?);
    let min_delay = duration(f.required("min_delay")?, "min_delay")?;
    let max_delay = f.take("max_delay").map(|n| duration(n, "max_delay")).transpose()?;
    f.finish()?;
    Ok(TemporalConstraint {
        anchor,
        min_delay,
        max_delay,
    })
}

fn question(node: &Node) -> Result<Question, DslError> {
    let mut f = Fields::of(node, "question")?;
    let item = DataItemId::new(as_nonempty_str(f.required("item")?, "question item")?);
    let label = as_str(f.required("label")?, "question label")?.to_string();
    let options = as_array(f.required("options")?, "options")?
        .iter()
        .map(|n| {
            let mut o = Fields::of(n, "option")?;
            let label = as_nonempty_str(o.required("label")?, "option label")?.to_string();
            let score = as_int(o.required("score")?, "option score")?;
            o.finish()?;
            Ok(ScoreOption { label, score })
        })
        .collect::<Result<Vec<_>, DslError>>()?;
    f.finish()?;
    Ok(Question {
        item,
        label,
        options,
    })
}

fn scoring(node: &Node) -> Result<Scoring, DslError> {
    let mut f = Fields::of(node, "scoring")?;
    let threshold = as_int(f.required("threshold")?, "threshold")?;
    let total = DataItemId::new(as_nonempty_str(f.required("total")?, "scoring total")?);
    let risk = DataItemId::new(as_nonempty_str(f.required("risk")?, "scoring risk")?);
    f.finish()?;
    Ok(Scoring {
        threshold,
        total,
        risk,
    })
}

fn branch(node: &Node) -> Result<Branch, DslError> {
    let mut f = Fields::of(node, "branch")?;
    let label = as_nonempty_str(f.required("label")?, "branch label")?.to_string();
    let condition = condition(f.required("when")?, "branch condition")?;
    f.finish()?;
    Ok(Branch { label, condition })
}

fn edge(node: &Node) -> Result<Edge, DslError> {
    let mut f = Fields::of(node, "edge")?;
    let from = TaskId::new(as_nonempty_str(f.required("from")?, "edge from")?);
    let to = TaskId::new(as_nonempty_str(f.required("to")?, "edge to")?);
    let branch = f
        .take("branch")
        .map(|n| as_nonempty_str(n, "edge branch").map(str::to_string))
        .transpose()?;
    let condition = f.take("when").map(|n| condition(n, "edge condition")).transpose()?;
    let is_loop = f.take("loop").map(|n| as_bool(n, "loop")).transpose()?.unwrap_or(false);
    f.finish()?;
    Ok(Edge {
        from,
        to,
        condition,
        branch,
        is_loop,
    })
}

/// Canonical document text for a definition.
pub fn serialize(def: &GuidelineDefinition) -> String {
    let mut w = Writer::default();
    w.open('{');
    w.key("guideline");
    w.open('{');
    w.str_field("id", &def.id);
    w.str_field("title", &def.title);
    w.str_field("version", &def.version);
    w.close('}');

    w.key("data_items");
    w.open('[');
    for item in &def.data_items {
        w.element();
        w.open('{');
        w.str_field("id", item.id.as_str());
        let (type_name, labels) = match &item.value_type {
            ValueType::Enumeration(labels) => ("enumeration", Some(labels)),
            other => (other.name(), None),
        };
        w.str_field("type", type_name);
        if let Some(labels) = labels {
            w.str_list_field("labels", labels.iter().map(String::as_str));
        }
        w.str_field("source", item.source.as_str());
        if let Some(code) = &item.test_code {
            w.str_field("test_code", code);
        }
        w.close('}');
    }
    w.close(']');

    w.key("tasks");
    w.open('[');
    for task in &def.tasks {
        w.element();
        write_task(&mut w, task);
    }
    w.close(']');

    w.key("edges");
    w.open('[');
    for edge in &def.edges {
        w.element();
        w.open('{');
        w.str_field("from", edge.from.as_str());
        w.str_field("to", edge.to.as_str());
        if let Some(b) = &edge.branch {
            w.str_field("branch", b);
        }
        if let Some(c) = &edge.condition {
            w.str_field("when", &render_condition(c));
        }
        if edge.is_loop {
            w.key("loop");
            w.raw("true");
        }
        w.close('}');
    }
    w.close(']');

    w.str_field("entry_task", def.entry_task.as_str());
    w.close('}');
    w.out.push('\n');
    w.out
}

fn write_task(w: &mut Writer, task: &TaskNode) {
    w.open('{');
    w.str_field("id", task.id.as_str());
    w.str_field("kind", task.kind.name());
    if !task.title.is_empty() {
        w.str_field("title", &task.title);
    }
    if let Some(role) = &task.role {
        w.str_field("role", role.as_str());
    }
    if !task.inputs.is_empty() {
        w.str_list_field("inputs", task.inputs.iter().map(DataItemId::as_str));
    }
    if !task.outputs.is_empty() {
        w.str_list_field("outputs", task.outputs.iter().map(DataItemId::as_str));
    }
    if let Some(pre) = &task.precondition {
        w.str_field("precondition", &render_condition(pre));
    }
    if let Some(t) = &task.temporal {
        w.key("temporal");
        w.open('{');
        w.str_field("anchor", t.anchor.as_str());
        w.str_field("min_delay", &t.min_delay.to_text());
        if let Some(max) = t.max_delay {
            w.str_field("max_delay", &max.to_text());
        }
        w.close('}');
    }
    match &task.kind {
        TaskKind::Enquiry { questions, scoring } => {
            w.key("questions");
            w.open('[');
            for q in questions {
                w.element();
                w.open('{');
                w.str_field("item", q.item.as_str());
                w.str_field("label", &q.label);
                w.key("options");
                w.open('[');
                for o in &q.options {
                    w.element();
                    w.inline_object(&[("label", json_string(&o.label)), ("score", o.score.to_string())]);
                }
                w.close(']');
                w.close('}');
            }
            w.close(']');
            if let Some(s) = scoring {
                w.key("scoring");
                w.open('{');
                w.key("threshold");
                w.raw(&s.threshold.to_string());
                w.str_field("total", s.total.as_str());
                w.str_field("risk", s.risk.as_str());
                w.close('}');
            }
        }
        TaskKind::Decision { branches } => {
            w.key("branches");
            w.open('[');
            for b in branches {
                w.element();
                w.inline_object(&[
                    ("label", json_string(&b.label)),
                    ("when", json_string(&render_condition(&b.condition))),
                ]);
            }
            w.close(']');
        }
        TaskKind::Action { orders } => {
            if !orders.is_empty() {
                w.str_list_field("orders", orders.iter().map(String::as_str));
            }
        }
        TaskKind::Wait => {}
        TaskKind::Subplan { plan } => w.str_field("plan", plan),
        TaskKind::Terminal { outcome } => w.str_field("outcome", outcome),
    }
    w.close('}');
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Pretty printer tracking whether a separator is due at each nesting level.
#[derive(Default)]
struct Writer {
    out: String,
    // one entry per open container: has it received a member yet
    stack: Vec<bool>,
}

impl Writer {
    fn indent(&mut self) {
        self.out.push('\n');
        for _ in 0..self.stack.len() {
            self.out.push_str("  ");
        }
    }

    fn separator(&mut self) {
        if let Some(seen) = self.stack.last_mut() {
            if *seen {
                self.out.push(',');
            }
            *seen = true;
        }
        self.indent();
    }

    fn open(&mut self, c: char) {
        self.out.push(c);
        self.stack.push(false);
    }

    fn close(&mut self, c: char) {
        let had_members = self.stack.pop().unwrap_or(false);
        if had_members {
            self.indent();
        }
        self.out.push(c);
    }

    fn key(&mut self, name: &str) {
        self.separator();
        let _ = write!(self.out, "{}: ", json_string(name));
    }

    fn element(&mut self) {
        self.separator();
    }

    fn raw(&mut self, text: &str) {
        self.out.push_str(text);
    }

    fn str_field(&mut self, name: &str, value: &str) {
        self.key(name);
        self.out.push_str(&json_string(value));
    }

    fn str_list_field<'a>(&mut self, name: &str, values: impl Iterator<Item = &'a str>) {
        self.key(name);
        let rendered: Vec<String> = values.map(json_string).collect();
        let _ = write!(self.out, "[{}]", rendered.join(", "));
    }

    fn inline_object(&mut self, fields: &[(&str, String)]) {
        let parts: Vec<String> = fields
            .iter()
            .map(|(k, v)| format!("{}: {v}", json_string(k)))
            .collect();
        let _ = write!(self.out, "{{{}}}", parts.join(", "));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "guideline": {
    "id": "minimal",
    "title": "Minimal",
    "version": "1"
  },
  "data_items": [],
  "tasks": [
    {
      "id": "done",
      "kind": "Terminal",
      "outcome": "discharge"
    }
  ],
  "edges": [],
  "entry_task": "done"
}
"#;

    #[test]
    fn minimal_document() {
        let def = parse(MINIMAL).unwrap();
        assert_eq!(def.tasks.len(), 1);
        assert_eq!(serialize(&def), MINIMAL);
    }

    #[test]
    fn misspelled_kind_is_located() {
        let text = MINIMAL.replace("\"Terminal\"", "\"Decission\"");
        match parse(&text).unwrap_err() {
            DslError::UnknownTaskKind { kind, line, column } => {
                assert_eq!(kind, "Decission");
                assert_eq!((line, column), (11, 15));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_and_unknown_keys() {
        let text = MINIMAL.replace("\"outcome\": \"discharge\"", "\"outcome\": \"a\", \"outcome\": \"b\"");
        assert!(matches!(parse(&text), Err(DslError::DuplicateKey { ref key, .. }) if key == "outcome"));
        let text = MINIMAL.replace("\"outcome\": \"discharge\"", "\"outcome\": \"a\", \"colour\": \"b\"");
        assert!(matches!(parse(&text), Err(DslError::Schema { ref message, .. }) if message.contains("colour")));
    }

    #[test]
    fn durations_use_clinical_units() {
        let text = r#"{"guideline": {"id": "w", "title": "", "version": "1"}, "data_items": [],
          "tasks": [{"id": "a", "kind": "Action"},
                    {"id": "w", "kind": "Wait", "temporal": {"anchor": "a", "min_delay": "8h", "max_delay": "12h"}},
                    {"id": "z", "kind": "Terminal", "outcome": "x"}],
          "edges": [{"from": "a", "to": "w"}, {"from": "w", "to": "z"}], "entry_task": "a"}"#;
        let def = parse(text).unwrap();
        let t = def.tasks[1].temporal.as_ref().unwrap();
        assert_eq!(t.min_delay, Duration::from_hours(8));
        assert_eq!(t.max_delay, Some(Duration::from_hours(12)));
        assert!(parse(&text.replace("\"8h\"", "\"30s\"")).is_err());
        assert!(parse(&text.replace("\"8h\"", "\"8\"")).is_err());
    }

    #[test]
    fn condition_errors_point_into_the_document() {
        let text = r#"{"guideline": {"id": "c", "title": "", "version": "1"}, "data_items": [],
"tasks": [{"id": "z", "kind": "Terminal", "outcome": "x", "precondition": "a >= "}],
"edges": [], "entry_task": "z"}"#;
        match parse(text).unwrap_err() {
            DslError::Syntax { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("precondition"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }
}

//! Guideline task networks: the deployable model a case is enacted from.

mod condition;
mod validate;

pub use condition::{Bindings, CompareOp, Condition, ConditionError, Literal, Value};
pub(crate) use condition::format_number as format_number_literal;
pub use validate::{validate, Finding, FindingCode, Severity, ValidationReport};

use crate::ids::{DataItemId, Role, TaskId};
use crate::scoring::{Characteristic, ScoreDefinition, ScoreOption};
use crate::time::Duration;

/// A complete guideline: data items, tasks and the control-flow edges between them.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidelineDefinition {
    pub id: String,
    pub title: String,
    pub version: String,
    pub data_items: Vec<DataItemDecl>,
    pub tasks: Vec<TaskNode>,
    pub edges: Vec<Edge>,
    pub entry_task: TaskId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataItemDecl {
    pub id: DataItemId,
    pub value_type: ValueType,
    pub source: DataSource,
    /// EMR test code whose results bind this item (emr-result items only).
    pub test_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValueType {
    Number,
    Text,
    Boolean,
    Enumeration(Vec<String>),
}

impl ValueType {
    pub fn name(&self) -> &'static str {
        match self {
            ValueType::Number => "number",
            ValueType::Text => "text",
            ValueType::Boolean => "boolean",
            ValueType::Enumeration(_) => "enumeration",
        }
    }

    /// Whether a runtime value is acceptable for this type.
    pub fn admits(&self, value: &Value) -> bool {
        match (self, value) {
            (ValueType::Number, Value::Number(_)) => true,
            (ValueType::Text, Value::Text(_)) => true,
            (ValueType::Boolean, Value::Bool(_)) => true,
            (ValueType::Enumeration(labels), Value::Text(t)) => labels.iter().any(|l| l == t),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Survey,
    DoctorInput,
    EmrResult,
}

impl DataSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSource::Survey => "survey",
            DataSource::DoctorInput => "doctor-input",
            DataSource::EmrResult => "emr-result",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "survey" => Some(DataSource::Survey),
            "doctor-input" => Some(DataSource::DoctorInput),
            "emr-result" => Some(DataSource::EmrResult),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub id: TaskId,
    pub title: String,
    pub kind: TaskKind,
    /// Role that receives the work item. Tasks without a role run automatically.
    pub role: Option<Role>,
    pub inputs: Vec<DataItemId>,
    pub outputs: Vec<DataItemId>,
    pub precondition: Option<Condition>,
    pub temporal: Option<TemporalConstraint>,
}

impl TaskNode {
    pub fn kind_name(&self) -> &'static str {
        self.kind.name()
    }

    /// Score definition carried by an Enquiry with a scoring block.
    pub fn score_definition(&self) -> Option<ScoreDefinition> {
        match &self.kind {
            TaskKind::Enquiry {
                questions,
                scoring: Some(scoring),
            } => Some(ScoreDefinition {
                characteristics: questions
                    .iter()
                    .map(|q| Characteristic {
                        id: q.item.clone(),
                        label: q.label.clone(),
                        options: q.options.clone(),
                    })
                    .collect(),
                threshold: scoring.threshold,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    Enquiry {
        questions: Vec<Question>,
        scoring: Option<Scoring>,
    },
    Decision {
        branches: Vec<Branch>,
    },
    Action {
        /// EMR tests ordered when the action completes.
        orders: Vec<String>,
    },
    Wait,
    Subplan {
        plan: String,
    },
    Terminal {
        outcome: String,
    },
}

impl TaskKind {
    pub const NAMES: [&'static str; 6] =
        ["Enquiry", "Decision", "Action", "Wait", "Subplan", "Terminal"];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Enquiry { .. } => "Enquiry",
            TaskKind::Decision { .. } => "Decision",
            TaskKind::Action { .. } => "Action",
            TaskKind::Wait => "Wait",
            TaskKind::Subplan { .. } => "Subplan",
            TaskKind::Terminal { .. } => "Terminal",
        }
    }
}

/// One survey question. The answer binds `item`, an enumeration data item.
#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    pub item: DataItemId,
    pub label: String,
    pub options: Vec<ScoreOption>,
}

/// Where an Enquiry writes its score total and risk class.
#[derive(Debug, Clone, PartialEq)]
pub struct Scoring {
    pub threshold: i64,
    pub total: DataItemId,
    pub risk: DataItemId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: String,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConstraint {
    pub anchor: TaskId,
    pub min_delay: Duration,
    pub max_delay: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: TaskId,
    pub to: TaskId,
    pub condition: Option<Condition>,
    /// For edges leaving a Decision: the branch label that activates the edge.
    pub branch: Option<String>,
    /// Back edge closing an intended cycle.
    pub is_loop: bool,
}

impl GuidelineDefinition {
    pub fn task(&self, id: &str) -> Option<&TaskNode> {
        self.tasks.iter().find(|t| t.id.as_str() == id)
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id.as_str() == id)
    }

    pub fn data_item(&self, id: &str) -> Option<&DataItemDecl> {
        self.data_items.iter().find(|d| d.id.as_str() == id)
    }

    /// Outgoing edges of `task`, in declaration order.
    pub fn outgoing<'a>(&'a self, task: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.from.as_str() == task)
    }

    pub fn incoming<'a>(&'a self, task: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.to.as_str() == task)
    }

    /// Data item bound by results for an EMR test code.
    pub fn item_for_test_code(&self, code: &str) -> Option<&DataItemDecl> {
        self.data_items
            .iter()
            .find(|d| d.source == DataSource::EmrResult && d.test_code.as_deref() == Some(code))
    }

    /// All Enquiry questions, keyed by their data item, with the owning task.
    pub fn question(&self, item: &str) -> Option<(&TaskNode, &Question)> {
        self.tasks.iter().find_map(|t| match &t.kind {
            TaskKind::Enquiry { questions, .. } => questions
                .iter()
                .find(|q| q.item.as_str() == item)
                .map(|q| (t, q)),
            _ => None,
        })
    }
}

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::DataItemId;

/// A bound data value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl Value {
    pub fn render(&self) -> String {
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Number(n) => format_number(*n),
            Value::Text(t) => t.clone(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub(crate) fn format_number(n: f64) -> String {
    if n == 0.0 {
        // normalizes -0
        "0".to_string()
    } else {
        format!("{n}")
    }
}

pub type Bindings = BTreeMap<DataItemId, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CompareOp::Eq | CompareOp::Ne)
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            CompareOp::Eq => ord == Ordering::Equal,
            CompareOp::Ne => ord != Ordering::Equal,
            CompareOp::Lt => ord == Ordering::Less,
            CompareOp::Le => ord != Ordering::Greater,
            CompareOp::Gt => ord == Ordering::Greater,
            CompareOp::Ge => ord != Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Text(String),
    Bool(bool),
}

impl Literal {
    pub fn type_name(&self) -> &'static str {
        match self {
            Literal::Number(_) => "number",
            Literal::Text(_) => "text",
            Literal::Bool(_) => "boolean",
        }
    }
}

/// Boolean expression over data items.
#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    True,
    False,
    Compare {
        item: DataItemId,
        op: CompareOp,
        literal: Literal,
    },
    Not(Box<Condition>),
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConditionError {
    #[error("data item `{0}` is not bound")]
    UnboundDataItem(DataItemId),
}

impl Condition {
    pub fn compare(item: &str, op: CompareOp, literal: Literal) -> Self {
        Condition::Compare {
            item: DataItemId::new(item),
            op,
            literal,
        }
    }

    pub fn negate(inner: Condition) -> Self {
        Condition::Not(Box::new(inner))
    }

    pub fn and(lhs: Condition, rhs: Condition) -> Self {
        Condition::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Condition, rhs: Condition) -> Self {
        Condition::Or(Box::new(lhs), Box::new(rhs))
    }

    pub fn is_true_literal(&self) -> bool {
        matches!(self, Condition::True)
    }

    /// Evaluates the condition. Short-circuits left to right.
    pub fn eval(&self, bindings: &Bindings) -> Result<bool, ConditionError> {
        match self {
            Condition::True => Ok(true),
            Condition::False => Ok(false),
            Condition::Not(inner) => inner.eval(bindings).map(|b| !b),
            Condition::And(l, r) => Ok(l.eval(bindings)? && r.eval(bindings)?),
            Condition::Or(l, r) => Ok(l.eval(bindings)? || r.eval(bindings)?),
            Condition::Compare { item, op, literal } => {
                let value = bindings
                    .get(item)
                    .ok_or_else(|| ConditionError::UnboundDataItem(item.clone()))?;
                Ok(compare(value, *op, literal))
            }
        }
    }

    /// Data items referenced, in first-occurrence order.
    pub fn referenced_items(&self) -> Vec<&DataItemId> {
        let mut out = Vec::new();
        self.collect_items(&mut out);
        out
    }

    fn collect_items<'a>(&'a self, out: &mut Vec<&'a DataItemId>) {
        match self {
            Condition::True | Condition::False => {}
            Condition::Compare { item, .. } => {
                if !out.contains(&item) {
                    out.push(item);
                }
            }
            Condition::Not(inner) => inner.collect_items(out),
            Condition::And(l, r) | Condition::Or(l, r) => {
                l.collect_items(out);
                r.collect_items(out);
            }
        }
    }
}

// Mismatched types compare as "not equal" and never satisfy an ordering.
fn compare(value: &Value, op: CompareOp, literal: &Literal) -> bool {
    let ord = match (value, literal) {
        (Value::Number(a), Literal::Number(b)) => a.partial_cmp(b),
        (Value::Text(a), Literal::Text(b)) => Some(a.cmp(b)),
        (Value::Bool(a), Literal::Bool(b)) => Some(a.cmp(b)),
        _ => None,
    };
    match ord {
        Some(ord) => op.holds(ord),
        None => op == CompareOp::Ne,
    }
}

//! Random condition trees and bindings over a small typed item universe.

#![allow(dead_code)]

use carepath_core::guideline::{Bindings, CompareOp, Condition, Literal, Value};
use carepath_core::ids::DataItemId;
use rand::seq::IndexedRandom;
use rand::Rng;

#[derive(Clone, Copy)]
pub enum Ty {
    Number,
    Text,
    Bool,
}

pub const ITEMS: [(&str, Ty); 5] = [("n1", Ty::Number), ("n2", Ty::Number), ("s1", Ty::Text), ("e1", Ty::Text), ("f1", Ty::Bool)];
const WORDS: [&str; 5] = ["a", "b", "it's", "", "Ünïcode with spaces"];
const OPS: [CompareOp; 6] = [CompareOp::Eq, CompareOp::Ne, CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge];

pub fn number(rng: &mut impl Rng) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(-5..=5) as f64,
        1 => rng.random_range(-100.0..100.0),
        2 => rng.random_range(-3..=3) as f64 / 4.0,
        _ => 0.0,
    }
}

pub fn literal(rng: &mut impl Rng, ty: Ty) -> Literal {
    match ty {
        Ty::Number => Literal::Number(number(rng)),
        Ty::Text => Literal::Text(WORDS.choose(rng).unwrap().to_string()),
        Ty::Bool => Literal::Bool(rng.random()),
    }
}

/// A well-typed tree: ordering operators on numbers only.
pub fn condition(rng: &mut impl Rng, depth: u32) -> Condition {
    let leaf = depth == 0 || rng.random_bool(0.3);
    if leaf {
        return match rng.random_range(0..10) {
            0 => Condition::True,
            1 => Condition::False,
            _ => {
                let (item, ty) = *ITEMS.choose(rng).unwrap();
                let op = match ty {
                    Ty::Number => *OPS.choose(rng).unwrap(),
                    _ => *[CompareOp::Eq, CompareOp::Ne].choose(rng).unwrap(),
                };
                Condition::compare(item, op, literal(rng, ty))
            }
        };
    }
    match rng.random_range(0..3) {
        0 => Condition::negate(condition(rng, depth - 1)),
        1 => Condition::and(condition(rng, depth - 1), condition(rng, depth - 1)),
        _ => Condition::or(condition(rng, depth - 1), condition(rng, depth - 1)),
    }
}

/// Binds each item with probability `p`.
pub fn bindings(rng: &mut impl Rng, p: f64) -> Bindings {
    let mut b = Bindings::new();
    for (item, ty) in ITEMS {
        if rng.random_bool(p) {
            let v = match literal(rng, ty) {
                Literal::Number(n) => Value::Number(n),
                Literal::Text(t) => Value::Text(t),
                Literal::Bool(x) => Value::Bool(x),
            };
            b.insert(DataItemId::new(item), v);
        }
    }
    b
}

/// Reference semantics, written independently of the library.
pub fn reference_eval(c: &Condition, b: &Bindings) -> Option<bool> {
    Some(match c {
        Condition::True => true,
        Condition::False => false,
        Condition::Not(x) => !reference_eval(x, b)?,
        // Left to right; the right side is not looked at once the left decides.
        Condition::And(l, r) => reference_eval(l, b)? && reference_eval(r, b)?,
        Condition::Or(l, r) => reference_eval(l, b)? || reference_eval(r, b)?,
        Condition::Compare { item, op, literal } => {
            let v = b.get(item)?;
            let ord = match (v, literal) {
                (Value::Number(a), Literal::Number(x)) => a.partial_cmp(x),
                (Value::Text(a), Literal::Text(x)) => Some(a.cmp(x)),
                (Value::Bool(a), Literal::Bool(x)) => Some(a.cmp(x)),
                _ => None,
            };
            match (op, ord) {
                (CompareOp::Eq, o) => o == Some(std::cmp::Ordering::Equal),
                (CompareOp::Ne, o) => o != Some(std::cmp::Ordering::Equal),
                (CompareOp::Lt, Some(o)) => o.is_lt(),
                (CompareOp::Le, Some(o)) => o.is_le(),
                (CompareOp::Gt, Some(o)) => o.is_gt(),
                (CompareOp::Ge, Some(o)) => o.is_ge(),
                (_, None) => false,
            }
        }
    })
}

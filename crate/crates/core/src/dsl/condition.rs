//! Infix condition expressions.
//!
//! ```text
//! or      := and ("OR" and)*
//! and     := unary ("AND" unary)*
//! unary   := "NOT" unary | primary
//! primary := "true" | "false" | "(" or ")" | IDENT OP literal
//! literal := NUMBER | 'text' | true | false
//! OP      := = | != | ≠ | < | <= | ≤ | > | >= | ≥
//! ```
//!
//! `NOT` binds tighter than a comparison group, comparisons tighter than
//! `AND`, and `AND` tighter than `OR`. Binary operators associate left.
//! Text literals use single quotes; a quote inside is written `''`.

use crate::guideline::{CompareOp, Condition, Literal};
use crate::ids::DataItemId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} at offset {offset}")]
pub struct ConditionSyntaxError {
    /// Character offset within the expression text.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Text(String),
    Op(CompareOp),
    And,
    Or,
    Not,
    True,
    False,
    LParen,
    RParen,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Number(n) => format!("number `{n}`"),
            Token::Text(t) => format!("text '{t}'"),
            Token::Op(op) => format!("operator `{}`", op.symbol()),
            Token::And => "`AND`".into(),
            Token::Or => "`OR`".into(),
            Token::Not => "`NOT`".into(),
            Token::True => "`true`".into(),
            Token::False => "`false`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>, ConditionSyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |offset, message: String| ConditionSyntaxError { offset, message };
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '(' => {
                out.push((start, Token::LParen));
                i += 1;
            }
            ')' => {
                out.push((start, Token::RParen));
                i += 1;
            }
            '=' => {
                out.push((start, Token::Op(CompareOp::Eq)));
                i += 1;
            }
            '≠' => {
                out.push((start, Token::Op(CompareOp::Ne)));
                i += 1;
            }
            '≤' => {
                out.push((start, Token::Op(CompareOp::Le)));
                i += 1;
            }
            '≥' => {
                out.push((start, Token::Op(CompareOp::Ge)));
                i += 1;
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push((start, Token::Op(CompareOp::Ne)));
                    i += 2;
                } else {
                    return Err(err(start, "expected `!=`".into()));
                }
            }
            '<' | '>' => {
                let eq = chars.get(i + 1) == Some(&'=');
                let op = match (c, eq) {
                    ('<', false) => CompareOp::Lt,
                    ('<', true) => CompareOp::Le,
                    ('>', false) => CompareOp::Gt,
                    _ => CompareOp::Ge,
                };
                out.push((start, Token::Op(op)));
                i += if eq { 2 } else { 1 };
            }
            '\'' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err(start, "unterminated text literal".into())),
                        Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                            s.push('\'');
                            i += 2;
                        }
                        Some('\'') => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                out.push((start, Token::Text(s)));
            }
            c if c == '-' || c.is_ascii_digit() => {
                let mut raw = String::new();
                if c == '-' {
                    raw.push('-');
                    i += 1;
                }
                let digits_start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    raw.push(chars[i]);
                    i += 1;
                }
                if i == digits_start {
                    return Err(err(start, "expected digits".into()));
                }
                if chars[digits_start] == '0' && i - digits_start > 1 {
                    return Err(err(digits_start, "leading zero in number".into()));
                }
                if chars.get(i) == Some(&'.') {
                    raw.push('.');
                    i += 1;
                    let frac_start = i;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        raw.push(chars[i]);
                        i += 1;
                    }
                    if i == frac_start {
                        return Err(err(start, "expected digits after `.`".into()));
                    }
                }
                if chars.get(i).is_some_and(|c| c.is_alphanumeric() || *c == '_') {
                    return Err(err(i, "malformed number".into()));
                }
                let n: f64 = raw
                    .parse()
                    .map_err(|_| err(start, format!("malformed number `{raw}`")))?;
                out.push((start, Token::Number(n)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut word = String::new();
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    word.push(chars[i]);
                    i += 1;
                }
                let tok = match word.as_str() {
                    "AND" => Token::And,
                    "OR" => Token::Or,
                    "NOT" => Token::Not,
                    "true" => Token::True,
                    "false" => Token::False,
                    _ => Token::Ident(word),
                };
                out.push((start, tok));
            }
            other => return Err(err(start, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.at).map_or(self.end, |(o, _)| *o)
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ConditionSyntaxError> {
        let found = self
            .peek()
            .map_or_else(|| "end of expression".to_string(), Token::describe);
        Err(ConditionSyntaxError {
            offset: self.offset(),
            message: format!("expected {expected}, found {found}"),
        })
    }

    fn or(&mut self) -> Result<Condition, ConditionSyntaxError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Token::Or) {
            self.at += 1;
            let rhs = self.and()?;
            lhs = Condition::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Condition, ConditionSyntaxError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Token::And) {
            self.at += 1;
            let rhs = self.unary()?;
            lhs = Condition::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Condition, ConditionSyntaxError> {
        if self.peek() == Some(&Token::Not) {
            self.at += 1;
            return Ok(Condition::negate(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Condition, ConditionSyntaxError> {
        match self.peek().cloned() {
            Some(Token::True) => {
                self.at += 1;
                Ok(Condition::True)
            }
            Some(Token::False) => {
                self.at += 1;
                Ok(Condition::False)
            }
            Some(Token::LParen) => {
                self.at += 1;
                let inner = self.or()?;
                if self.peek() != Some(&Token::RParen) {
                    return self.fail("`)`");
                }
                self.at += 1;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                self.at += 1;
                let Some(Token::Op(op)) = self.peek().cloned() else {
                    return self.fail("comparison operator");
                };
                self.at += 1;
                let literal = match self.peek().cloned() {
                    Some(Token::Number(n)) => Literal::Number(n),
                    Some(Token::Text(t)) => Literal::Text(t),
                    Some(Token::True) => Literal::Bool(true),
                    Some(Token::False) => Literal::Bool(false),
                    _ => return self.fail("literal (number, 'text', true or false)"),
                };
                self.at += 1;
                Ok(Condition::Compare {
                    item: DataItemId::new(name),
                    op,
                    literal,
                })
            }
            _ => self.fail("condition (comparison, `NOT`, `(`, `true` or `false`)"),
        }
    }
}

pub fn parse_condition(text: &str) -> Result<Condition, ConditionSyntaxError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        at: 0,
        end: text.chars().count(),
    };
    let cond = parser.or()?;
    if parser.peek().is_some() {
        return parser.fail("`AND`, `OR` or end of expression");
    }
    Ok(cond)
}

/// Canonical text. Inserts only the parentheses the tree shape needs.
pub fn render_condition(cond: &Condition) -> String {
    let mut out = String::new();
    write_cond(cond, 0, &mut out);
    out
}

fn precedence(cond: &Condition) -> u8 {
    match cond {
        Condition::Or(..) => 1,
        Condition::And(..) => 2,
        Condition::Not(_) => 3,
        _ => 4,
    }
}

fn write_cond(cond: &Condition, min_prec: u8, out: &mut String) {
    let prec = precedence(cond);
    let wrap = prec < min_prec;
    if wrap {
        out.push('(');
    }
    match cond {
        Condition::True => out.push_str("true"),
        Condition::False => out.push_str("false"),
        Condition::Compare { item, op, literal } => {
            out.push_str(item.as_str());
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_literal(literal, out);
        }
        Condition::Not(inner) => {
            out.push_str("NOT ");
            write_cond(inner, 3, out);
        }
        Condition::And(l, r) => {
            write_cond(l, 2, out);
            out.push_str(" AND ");
            write_cond(r, 3, out);
        }
        Condition::Or(l, r) => {
            write_cond(l, 1, out);
            out.push_str(" OR ");
            write_cond(r, 2, out);
        }
    }
    if wrap {
        out.push(')');
    }
}

fn write_literal(literal: &Literal, out: &mut String) {
    match literal {
        Literal::Number(n) => out.push_str(&crate::guideline::format_number_literal(*n)),
        Literal::Text(t) => {
            out.push('\'');
            out.push_str(&t.replace('\'', "''"));
            out.push('\'');
        }
        Literal::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmp(item: &str, op: CompareOp, n: f64) -> Condition {
        Condition::compare(item, op, Literal::Number(n))
    }

    #[test]
    fn precedence_not_and_or() {
        let c = parse_condition("NOT a = 1 AND b = 2 OR c = 3").unwrap();
        let expected = Condition::or(
            Condition::and(
                Condition::negate(cmp("a", CompareOp::Eq, 1.0)),
                cmp("b", CompareOp::Eq, 2.0),
            ),
            cmp("c", CompareOp::Eq, 3.0),
        );
        assert_eq!(c, expected);
        assert_eq!(render_condition(&c), "NOT a = 1 AND b = 2 OR c = 3");
    }

    #[test]
    fn parentheses_survive_rendering() {
        let text = "NOT (a = 1 AND b = 2)";
        let c = parse_condition(text).unwrap();
        assert_eq!(render_condition(&c), text);
        let c = parse_condition("a = 1 AND (b = 2 OR c = 3)").unwrap();
        assert!(matches!(c, Condition::And(..)));
        assert_eq!(render_condition(&c), "a = 1 AND (b = 2 OR c = 3)");
        let c = parse_condition("a = 1 OR (b = 2 OR c = 3)").unwrap();
        assert_eq!(render_condition(&c), "a = 1 OR (b = 2 OR c = 3)");
    }

    #[test]
    fn literals_and_operators() {
        let c = parse_condition("score >= 4 AND troponin = 'abnormal'").unwrap();
        assert_eq!(
            c,
            Condition::and(
                cmp("score", CompareOp::Ge, 4.0),
                Condition::compare("troponin", CompareOp::Eq, Literal::Text("abnormal".into()))
            )
        );
        let c = parse_condition("x ≠ -0.5 OR y ≤ 2 OR z ≥ 3 OR w != true").unwrap();
        assert_eq!(render_condition(&c), "x != -0.5 OR y <= 2 OR z >= 3 OR w != true");
        let c = parse_condition("note = 'it''s'").unwrap();
        assert_eq!(c, Condition::compare("note", CompareOp::Eq, Literal::Text("it's".into())));
        assert_eq!(render_condition(&c), "note = 'it''s'");
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let e = parse_condition("score >=").unwrap_err();
        assert_eq!(e.offset, 8);
        assert!(e.message.contains("expected literal"));
        assert!(parse_condition("").is_err());
        assert!(parse_condition("a = 1 b = 2").is_err());
        assert!(parse_condition("(a = 1").is_err());
        assert!(parse_condition("a = 'x").is_err());
        assert!(parse_condition("a & 1").is_err());
        assert!(parse_condition("a = 4h").is_err());
        assert_eq!(parse_condition("a <059.25").unwrap_err().offset, 3);
        assert!(parse_condition("a = -007").is_err());
        assert!(parse_condition("a = 0.5 AND b = -0.25").is_ok());
    }
}

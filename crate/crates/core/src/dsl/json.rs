//! A small JSON reader that keeps source positions and rejects duplicate keys.

use super::DslError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub pos: Pos,
    pub value: NodeValue,
}

#[derive(Debug, Clone)]
pub(crate) enum NodeValue {
    Null,
    Bool(bool),
    /// Raw number text, converted on demand.
    Number(String),
    String(String),
    Array(Vec<Node>),
    Object(Vec<(Key, Node)>),
}

#[derive(Debug, Clone)]
pub(crate) struct Key {
    pub name: String,
    pub pos: Pos,
}

impl NodeValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            NodeValue::Null => "null",
            NodeValue::Bool(_) => "boolean",
            NodeValue::Number(_) => "number",
            NodeValue::String(_) => "string",
            NodeValue::Array(_) => "array",
            NodeValue::Object(_) => "object",
        }
    }
}

const MAX_DEPTH: usize = 64;

pub(crate) fn parse(text: &str) -> Result<Node, DslError> {
    let mut reader = Reader {
        chars: text.chars().collect(),
        at: 0,
        line: 1,
        column: 1,
    };
    reader.skip_ws();
    let node = reader.value(0)?;
    reader.skip_ws();
    if let Some(c) = reader.peek() {
        return Err(reader.syntax(format!("expected end of document, found `{c}`")));
    }
    Ok(node)
}

struct Reader {
    chars: Vec<char>,
    at: usize,
    line: usize,
    column: usize,
}

impl Reader {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.at).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.at += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn syntax(&self, message: impl Into<String>) -> DslError {
        DslError::Syntax {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    fn describe_next(&self) -> String {
        match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of document".to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\n' | '\r')) {
            self.bump();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), DslError> {
        if self.peek() == Some(want) {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{want}`, found {}", self.describe_next())))
        }
    }

    fn value(&mut self, depth: usize) -> Result<Node, DslError> {
        if depth > MAX_DEPTH {
            return Err(self.syntax("document nested too deeply"));
        }
        let pos = self.pos();
        let value = match self.peek() {
            Some('{') => self.object(depth)?,
            Some('[') => self.array(depth)?,
            Some('"') => NodeValue::String(self.string()?),
            Some('t') => self.keyword("true", NodeValue::Bool(true))?,
            Some('f') => self.keyword("false", NodeValue::Bool(false))?,
            Some('n') => self.keyword("null", NodeValue::Null)?,
            Some(c) if c == '-' || c.is_ascii_digit() => NodeValue::Number(self.number()?),
            _ => {
                return Err(self.syntax(format!(
                    "expected a value (object, array, string, number, true, false or null), found {}",
                    self.describe_next()
                )))
            }
        };
        Ok(Node { pos, value })
    }

    fn keyword(&mut self, word: &str, value: NodeValue) -> Result<NodeValue, DslError> {
        for want in word.chars() {
            if self.peek() != Some(want) {
                return Err(self.syntax(format!("expected `{word}`")));
            }
            self.bump();
        }
        Ok(value)
    }

    fn number(&mut self) -> Result<String, DslError> {
        let mut raw = String::new();
        if self.peek() == Some('-') {
            raw.push('-');
            self.bump();
        }
        match self.peek() {
            Some('0') => {
                raw.push('0');
                self.bump();
            }
            Some(c) if c.is_ascii_digit() => self.digits(&mut raw),
            _ => return Err(self.syntax(format!("expected digit, found {}", self.describe_next()))),
        }
        if self.peek() == Some('.') {
            raw.push('.');
            self.bump();
            if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.syntax(format!("expected digit after `.`, found {}", self.describe_next())));
            }
            self.digits(&mut raw);
        }
        if let Some(e @ ('e' | 'E')) = self.peek() {
            raw.push(e);
            self.bump();
            if let Some(sign @ ('+' | '-')) = self.peek() {
                raw.push(sign);
                self.bump();
            }
            if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.syntax(format!("expected exponent digit, found {}", self.describe_next())));
            }
            self.digits(&mut raw);
        }
        Ok(raw)
    }

    fn digits(&mut self, out: &mut String) {
        while let Some(c) = self.peek().filter(|c| c.is_ascii_digit()) {
            out.push(c);
            self.bump();
        }
    }

    fn string(&mut self) -> Result<String, DslError> {
        self.expect('"')?;
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.syntax("unterminated string")),
                Some('"') => return Ok(out),
                Some('\\') => {
                    let esc = self.bump().ok_or_else(|| self.syntax("unterminated escape"))?;
                    match esc {
                        '"' => out.push('"'),
                        '\\' => out.push('\\'),
                        '/' => out.push('/'),
                        'b' => out.push('\u{8}'),
                        'f' => out.push('\u{c}'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        't' => out.push('\t'),
                        'u' => {
                            let hi = self.hex4()?;
                            let code = if (0xD800..0xDC00).contains(&hi) {
                                if self.bump() != Some('\\') || self.bump() != Some('u') {
                                    return Err(self.syntax("expected low surrogate escape"));
                                }
                                let lo = self.hex4()?;
                                if !(0xDC00..0xE000).contains(&lo) {
                                    return Err(self.syntax("invalid low surrogate"));
                                }
                                0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00)
                            } else {
                                hi
                            };
                            out.push(
                                char::from_u32(code)
                                    .ok_or_else(|| self.syntax("invalid unicode escape"))?,
                            );
                        }
                        other => {
                            return Err(self.syntax(format!("invalid escape `\\{other}`")));
                        }
                    }
                }
                Some(c) if (c as u32) < 0x20 => {
                    return Err(self.syntax("control character in string"));
                }
                Some(c) => out.push(c),
            }
        }
    }

    fn hex4(&mut self) -> Result<u32, DslError> {
        let mut v = 0;
        for _ in 0..4 {
            let d = self
                .bump()
                .and_then(|c| c.to_digit(16))
                .ok_or_else(|| self.syntax("expected four hex digits"))?;
            v = v * 16 + d;
        }
        Ok(v)
    }

    fn array(&mut self, depth: usize) -> Result<NodeValue, DslError> {
        self.expect('[')?;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(']') {
            self.bump();
            return Ok(NodeValue::Array(items));
        }
        loop {
            self.skip_ws();
            items.push(self.value(depth + 1)?);
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(']') => {
                    self.bump();
                    return Ok(NodeValue::Array(items));
                }
                _ => return Err(self.syntax(format!("expected `,` or `]`, found {}", self.describe_next()))),
            }
        }
    }

    fn object(&mut self, depth: usize) -> Result<NodeValue, DslError> {
        self.expect('{')?;
        let mut members: Vec<(Key, Node)> = Vec::new();
        self.skip_ws();
        if self.peek() == Some('}') {
            self.bump();
            return Ok(NodeValue::Object(members));
        }
        loop {
            self.skip_ws();
            let pos = self.pos();
            if self.peek() != Some('"') {
                return Err(self.syntax(format!("expected object key string, found {}", self.describe_next())));
            }
            let name = self.string()?;
            if members.iter().any(|(k, _)| k.name == name) {
                return Err(DslError::DuplicateKey {
                    key: name,
                    line: pos.line,
                    column: pos.column,
                });
            }
            self.skip_ws();
            self.expect(':')?;
            self.skip_ws();
            let value = self.value(depth + 1)?;
            members.push((Key { name, pos }, value));
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some('}') => {
                    self.bump();
                    return Ok(NodeValue::Object(members));
                }
                _ => return Err(self.syntax(format!("expected `,` or `}}`, found {}", self.describe_next()))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_values() {
        let node = parse(r#"{"a": [1, -2.5e3, "xé\n"], "b": {"c": true, "d": null}}"#).unwrap();
        let NodeValue::Object(members) = node.value else { panic!() };
        assert_eq!(members.len(), 2);
        let NodeValue::Array(items) = &members[0].1.value else { panic!() };
        assert!(matches!(&items[1].value, NodeValue::Number(n) if n == "-2.5e3"));
        assert!(matches!(&items[2].value, NodeValue::String(s) if s == "xé\n"));
    }

    #[test]
    fn reports_line_and_column() {
        let err = parse("{\n  \"a\": 1,\n  \"b\" 2\n}").unwrap_err();
        match err {
            DslError::Syntax { line, column, message } => {
                assert_eq!((line, column), (3, 7));
                assert!(message.contains("expected `:`"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_keys() {
        let err = parse("{\"a\": 1, \"a\": 2}").unwrap_err();
        assert!(matches!(err, DslError::DuplicateKey { ref key, line: 1, column: 10 } if key == "a"));
    }

    #[test]
    fn rejects_trailing_garbage_and_bad_numbers() {
        assert!(parse("{} x").is_err());
        assert!(parse("[01]").is_err());
        assert!(parse("[1.]").is_err());
        assert!(parse("[1,]").is_err());
        assert!(parse("\"abc").is_err());
    }
}

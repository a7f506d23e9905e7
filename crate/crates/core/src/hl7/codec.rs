//! HL7 v2 ER7 framing: segments, fields and escape sequences.

use std::fmt;

pub const FIELD_SEP: char = '|';
pub const COMPONENT_SEP: char = '^';
pub const REPETITION_SEP: char = '~';
pub const ESCAPE: char = '\\';
pub const SUBCOMPONENT_SEP: char = '&';
pub const ENCODING_CHARS: &str = "^~\\&";
pub const SEGMENT_END: char = '\r';

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Hl7Error {
    #[error("malformed segment {index}: {reason}")]
    MalformedSegment { index: usize, reason: String },
    #[error("unsupported message type `{0}`")]
    UnsupportedType(String),
    #[error("missing required field {0}")]
    MissingField(String),
    #[error("unknown test code `{0}`")]
    UnknownTestCode(String),
    #[error("invalid value in {field}: {reason}")]
    InvalidValue { field: String, reason: String },
    #[error("message is not valid UTF-8")]
    NotUtf8,
}

/// Escapes delimiter characters inside a field value.
pub fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            FIELD_SEP => out.push_str("\\F\\"),
            COMPONENT_SEP => out.push_str("\\S\\"),
            SUBCOMPONENT_SEP => out.push_str("\\T\\"),
            REPETITION_SEP => out.push_str("\\R\\"),
            ESCAPE => out.push_str("\\E\\"),
            '\r' => out.push_str("\\X0D\\"),
            '\n' => out.push_str("\\X0A\\"),
            c => out.push(c),
        }
    }
    out
}

/// Reverses [`escape`]. Hex escapes must decode to valid UTF-8.
pub fn unescape(raw: &str) -> Result<String, String> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(start) = rest.find(ESCAPE) {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after
            .find(ESCAPE)
            .ok_or_else(|| "unterminated escape sequence".to_string())?;
        let seq = &after[..end];
        match seq {
            "F" => out.push(FIELD_SEP),
            "S" => out.push(COMPONENT_SEP),
            "T" => out.push(SUBCOMPONENT_SEP),
            "R" => out.push(REPETITION_SEP),
            "E" => out.push(ESCAPE),
            hex if hex.starts_with('X') && hex.len() > 1 && (hex.len() - 1) % 2 == 0 => {
                let bytes = (1..hex.len())
                    .step_by(2)
                    .map(|i| u8::from_str_radix(&hex[i..i + 2], 16))
                    .collect::<Result<Vec<u8>, _>>()
                    .map_err(|_| format!("bad hex escape `\\{hex}\\`"))?;
                let text = String::from_utf8(bytes).map_err(|_| format!("hex escape `\\{hex}\\` is not UTF-8"))?;
                out.push_str(&text);
            }
            other => return Err(format!("unknown escape sequence `\\{other}\\`")),
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// One segment. `fields[n - 1]` holds field n, so for MSH `fields[0]` is the
/// field separator itself and `fields[1]` the encoding characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub id: String,
    pub fields: Vec<String>,
}

impl Segment {
    pub fn new(id: &str) -> Self {
        Segment {
            id: id.to_string(),
            fields: Vec::new(),
        }
    }

    /// Sets field `n` (1-based) to an already escaped value.
    pub fn set_raw(&mut self, n: usize, raw: impl Into<String>) -> &mut Self {
        if self.fields.len() < n {
            self.fields.resize(n, String::new());
        }
        self.fields[n - 1] = raw.into();
        self
    }

    pub fn set(&mut self, n: usize, value: &str) -> &mut Self {
        self.set_raw(n, escape(value))
    }

    pub fn raw(&self, n: usize) -> &str {
        self.fields.get(n - 1).map(String::as_str).unwrap_or("")
    }

    /// Field `n`, unescaped.
    pub fn value(&self, n: usize) -> Result<String, Hl7Error> {
        unescape(self.raw(n)).map_err(|reason| Hl7Error::InvalidValue {
            field: format!("{}-{n}", self.id),
            reason,
        })
    }

    /// Component `c` (1-based) of field `n`, unescaped.
    pub fn component(&self, n: usize, c: usize) -> Result<String, Hl7Error> {
        let raw = self.raw(n).split(COMPONENT_SEP).nth(c - 1).unwrap_or("");
        unescape(raw).map_err(|reason| Hl7Error::InvalidValue {
            field: format!("{}-{n}.{c}", self.id),
            reason,
        })
    }

    pub fn required(&self, n: usize) -> Result<String, Hl7Error> {
        let v = self.value(n)?;
        if v.is_empty() {
            Err(Hl7Error::MissingField(format!("{}-{n}", self.id)))
        } else {
            Ok(v)
        }
    }

    fn render(&self, out: &mut String) {
        out.push_str(&self.id);
        if self.id == "MSH" {
            out.push(FIELD_SEP);
            for (i, f) in self.fields.iter().enumerate().skip(1) {
                if i > 1 {
                    out.push(FIELD_SEP);
                }
                out.push_str(f);
            }
        } else {
            for f in &self.fields {
                out.push(FIELD_SEP);
                out.push_str(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hl7Message {
    pub segments: Vec<Segment>,
}

impl Hl7Message {
    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn require(&self, id: &str) -> Result<&Segment, Hl7Error> {
        self.segment(id)
            .ok_or_else(|| Hl7Error::MissingField(format!("{id} segment")))
    }

    pub fn msh(&self) -> &Segment {
        &self.segments[0]
    }

    /// MSH-9 as `TYPE^EVENT`.
    pub fn message_type(&self) -> String {
        self.msh().raw(9).to_string()
    }

    pub fn control_id(&self) -> &str {
        self.msh().raw(10)
    }

    pub fn parse_bytes(raw: &[u8]) -> Result<Self, Hl7Error> {
        let text = std::str::from_utf8(raw).map_err(|_| Hl7Error::NotUtf8)?;
        Self::parse(text)
    }

    /// Parses an ER7 message. Segments may end in `\r`, `\n` or `\r\n`.
    pub fn parse(text: &str) -> Result<Self, Hl7Error> {
        let mut segments = Vec::new();
        for (index, line) in text.split(['\r', '\n']).filter(|l| !l.is_empty()).enumerate() {
            segments.push(parse_segment(index, line)?);
        }
        match segments.first() {
            None => Err(Hl7Error::MalformedSegment {
                index: 0,
                reason: "empty message".into(),
            }),
            Some(s) if s.id != "MSH" => Err(Hl7Error::MalformedSegment {
                index: 0,
                reason: format!("first segment is {} instead of MSH", s.id),
            }),
            Some(_) => Ok(Hl7Message { segments }),
        }
    }
}

fn parse_segment(index: usize, line: &str) -> Result<Segment, Hl7Error> {
    let malformed = |reason: String| Hl7Error::MalformedSegment { index, reason };
    let id: String = line.chars().take(3).collect();
    if id.len() != 3 || !id.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit()) {
        return Err(malformed(format!("invalid segment id `{id}`")));
    }
    let rest = &line[3..];
    if id == "MSH" {
        if index != 0 {
            return Err(malformed("MSH must be the first segment".into()));
        }
        let mut chars = rest.chars();
        if chars.next() != Some(FIELD_SEP) {
            return Err(malformed("field separator must be `|`".into()));
        }
        let body = &rest[1..];
        let mut fields = vec![FIELD_SEP.to_string()];
        fields.extend(body.split(FIELD_SEP).map(str::to_string));
        if fields[1] != ENCODING_CHARS {
            return Err(malformed(format!(
                "encoding characters must be `{ENCODING_CHARS}`, found `{}`",
                fields[1]
            )));
        }
        return Ok(Segment { id, fields });
    }
    if index == 0 {
        return Err(malformed(format!("first segment is {id} instead of MSH")));
    }
    let fields = if rest.is_empty() {
        Vec::new()
    } else if let Some(body) = rest.strip_prefix(FIELD_SEP) {
        body.split(FIELD_SEP).map(str::to_string).collect()
    } else {
        return Err(malformed("segment id must be followed by `|`".into()));
    };
    Ok(Segment { id, fields })
}

impl fmt::Display for Hl7Message {
    /// ER7 text with `\r` after every segment.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for s in &self.segments {
            s.render(&mut out);
            out.push(SEGMENT_END);
        }
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_every_delimiter() {
        assert_eq!(escape("a|b^c&d~e\\f"), "a\\F\\b\\S\\c\\T\\d\\R\\e\\E\\f");
        assert_eq!(unescape("a\\F\\b\\S\\c\\T\\d\\R\\e\\E\\f").unwrap(), "a|b^c&d~e\\f");
        assert_eq!(unescape(&escape("line\r\nnext")).unwrap(), "line\r\nnext");
    }

    #[test]
    fn rejects_bad_escapes() {
        assert!(unescape("\\Q\\").is_err());
        assert!(unescape("abc\\F").is_err());
        assert!(unescape("\\XZZ\\").is_err());
    }

    #[test]
    fn msh_field_numbering() {
        let m = Hl7Message::parse("MSH|^~\\&|SND|FAC|RCV|FAC2|20250101120000||ORU^R01|42|P|2.5\r").unwrap();
        let msh = m.msh();
        assert_eq!(msh.raw(1), "|");
        assert_eq!(msh.raw(2), "^~\\&");
        assert_eq!(msh.raw(3), "SND");
        assert_eq!(m.message_type(), "ORU^R01");
        assert_eq!(m.control_id(), "42");
        assert_eq!(msh.raw(12), "2.5");
    }

    #[test]
    fn render_round_trips() {
        let raw = "MSH|^~\\&|A|B|C|D|20250101120000||ACK|1|P|2.5\rMSA|AA|1\r";
        assert_eq!(Hl7Message::parse(raw).unwrap().to_string(), raw);
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(Hl7Message::parse(""), Err(Hl7Error::MalformedSegment { .. })));
        assert!(matches!(Hl7Message::parse("PID|1\r"), Err(Hl7Error::MalformedSegment { .. })));
        assert!(matches!(Hl7Message::parse("MSH#^~\\&\r"), Err(Hl7Error::MalformedSegment { .. })));
        assert!(matches!(Hl7Message::parse("MSH|^~\\&|x\rpid|1\r"), Err(Hl7Error::MalformedSegment { index: 1, .. })));
        assert!(matches!(Hl7Message::parse_bytes(&[0x4d, 0xff]), Err(Hl7Error::NotUtf8)));
    }
}

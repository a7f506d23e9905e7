//! HL7 v2.5 orders (ORM^O01), results (ORU^R01) and acknowledgements.

mod codec;
mod emr;

pub use codec::{escape, unescape, Hl7Error, Hl7Message, Segment, ENCODING_CHARS};
pub use emr::{EmrError, EmrSimulator, ProfileEntry, ResultProfile, ScheduledResult};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::guideline::{format_number_literal, GuidelineDefinition, Value, ValueType};
use crate::ids::{CaseId, DataItemId};
use crate::time::Instant;

pub const VERSION: &str = "2.5";
const PLACER_APP: &str = "CAREPATH";
const PLACER_FACILITY: &str = "WARD";
const FILLER_APP: &str = "EMR";
const FILLER_FACILITY: &str = "HOSPITAL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AbnormalFlag {
    #[serde(rename = "N")]
    Normal,
    #[serde(rename = "A")]
    Abnormal,
    #[serde(rename = "H")]
    High,
    #[serde(rename = "L")]
    Low,
}

impl AbnormalFlag {
    pub fn code(self) -> &'static str {
        match self {
            AbnormalFlag::Normal => "N",
            AbnormalFlag::Abnormal => "A",
            AbnormalFlag::High => "H",
            AbnormalFlag::Low => "L",
        }
    }

    pub fn parse(code: &str) -> Option<Self> {
        match code {
            "N" => Some(AbnormalFlag::Normal),
            "A" => Some(AbnormalFlag::Abnormal),
            "H" => Some(AbnormalFlag::High),
            "L" => Some(AbnormalFlag::Low),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AckCode {
    AA,
    AE,
    AR,
}

impl AckCode {
    pub fn as_str(self) -> &'static str {
        match self {
            AckCode::AA => "AA",
            AckCode::AE => "AE",
            AckCode::AR => "AR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRequest {
    pub case_id: CaseId,
    pub patient_ref: String,
    pub test_code: String,
    pub placer_order_id: String,
    pub requested_at: Instant,
}

/// A result as carried on the wire, before it is tied to a data item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMessage {
    pub case_id: CaseId,
    pub patient_ref: String,
    pub test_code: String,
    pub placer_order_id: String,
    pub filler_order_id: String,
    /// OBX-2: `NM` for numbers, `ST` otherwise.
    pub value_type: String,
    pub value: String,
    pub abnormal_flag: Option<AbnormalFlag>,
    pub observed_at: Instant,
}

/// A result bound for a case data item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalEvent {
    pub case_id: CaseId,
    pub patient_ref: String,
    pub data_item: DataItemId,
    pub test_code: String,
    pub value: Value,
    pub abnormal_flag: Option<AbnormalFlag>,
    pub observed_at: Instant,
    pub placer_order_id: String,
    pub filler_order_id: String,
}

/// Maps EMR test codes to the data items their results bind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TestCodeMap {
    entries: BTreeMap<String, (DataItemId, ValueType)>,
}

impl TestCodeMap {
    pub fn from_definition(def: &GuidelineDefinition) -> Self {
        let mut map = TestCodeMap::default();
        for d in &def.data_items {
            if let Some(code) = &d.test_code {
                map.insert(code, d.id.clone(), d.value_type.clone());
            }
        }
        map
    }

    pub fn insert(&mut self, code: &str, item: DataItemId, value_type: ValueType) {
        self.entries.insert(code.to_string(), (item, value_type));
    }

    pub fn get(&self, code: &str) -> Option<&(DataItemId, ValueType)> {
        self.entries.get(code)
    }
}

fn header(sending: (&str, &str), receiving: (&str, &str), at: Instant, kind: &str, control_id: &str) -> Segment {
    let mut msh = Segment::new("MSH");
    msh.set_raw(1, "|")
        .set_raw(2, ENCODING_CHARS)
        .set(3, sending.0)
        .set(4, sending.1)
        .set(5, receiving.0)
        .set(6, receiving.1)
        .set(7, &at.to_hl7())
        .set_raw(9, kind)
        .set(10, control_id)
        .set(11, "P")
        .set(12, VERSION);
    msh
}

fn pid(case_id: &CaseId, patient_ref: &str) -> Segment {
    let mut pid = Segment::new("PID");
    pid.set(1, "1").set(3, patient_ref).set(18, case_id.as_str());
    pid
}

pub fn encode_order(order: &OrderRequest) -> String {
    let mut orc = Segment::new("ORC");
    orc.set(1, "NW")
        .set(2, &order.placer_order_id)
        .set(9, &order.requested_at.to_hl7());
    let mut obr = Segment::new("OBR");
    obr.set(1, "1")
        .set(2, &order.placer_order_id)
        .set(4, &order.test_code)
        .set(7, &order.requested_at.to_hl7());
    Hl7Message {
        segments: vec![
            header(
                (PLACER_APP, PLACER_FACILITY),
                (FILLER_APP, FILLER_FACILITY),
                order.requested_at,
                "ORM^O01",
                &format!("ORM-{}", order.placer_order_id),
            ),
            pid(&order.case_id, &order.patient_ref),
            orc,
            obr,
        ],
    }
    .to_string()
}

fn expect_type(m: &Hl7Message, want: &str) -> Result<(), Hl7Error> {
    let kind = m.message_type();
    if kind == want {
        Ok(())
    } else {
        Err(Hl7Error::UnsupportedType(kind))
    }
}

fn parse_time(seg: &Segment, n: usize) -> Result<Instant, Hl7Error> {
    let raw = seg.required(n)?;
    Instant::parse_hl7(&raw).map_err(|e| Hl7Error::InvalidValue {
        field: format!("{}-{n}", seg.id),
        reason: e.to_string(),
    })
}

pub fn decode_order(raw: &str) -> Result<OrderRequest, Hl7Error> {
    let m = Hl7Message::parse(raw)?;
    expect_type(&m, "ORM^O01")?;
    let pid = m.require("PID")?;
    let obr = m.require("OBR")?;
    Ok(OrderRequest {
        case_id: CaseId::new(pid.required(18)?),
        patient_ref: pid.value(3)?,
        test_code: obr.required(4)?,
        placer_order_id: obr.required(2)?,
        requested_at: parse_time(obr, 7)?,
    })
}

pub fn encode_result(result: &ResultMessage) -> String {
    let mut obr = Segment::new("OBR");
    obr.set(1, "1")
        .set(2, &result.placer_order_id)
        .set(3, &result.filler_order_id)
        .set(4, &result.test_code)
        .set(7, &result.observed_at.to_hl7());
    let mut obx = Segment::new("OBX");
    obx.set(1, "1")
        .set(2, &result.value_type)
        .set(3, &result.test_code)
        .set(5, &result.value)
        .set(8, result.abnormal_flag.map(AbnormalFlag::code).unwrap_or(""))
        .set(11, "F");
    Hl7Message {
        segments: vec![
            header(
                (FILLER_APP, FILLER_FACILITY),
                (PLACER_APP, PLACER_FACILITY),
                result.observed_at,
                "ORU^R01",
                &format!("ORU-{}", result.filler_order_id),
            ),
            pid(&result.case_id, &result.patient_ref),
            obr,
            obx,
        ],
    }
    .to_string()
}

/// Decodes an ORU^R01 without interpreting the value.
pub fn decode_result_message(raw: &str) -> Result<ResultMessage, Hl7Error> {
    decode_parsed_result(&Hl7Message::parse(raw)?)
}

pub fn decode_parsed_result(m: &Hl7Message) -> Result<ResultMessage, Hl7Error> {
    expect_type(m, "ORU^R01")?;
    let pid = m.require("PID")?;
    let obr = m.require("OBR")?;
    let obx = m.require("OBX")?;
    let flag_raw = obx.value(8)?;
    let abnormal_flag = if flag_raw.is_empty() {
        None
    } else {
        Some(AbnormalFlag::parse(&flag_raw).ok_or_else(|| Hl7Error::InvalidValue {
            field: "OBX-8".into(),
            reason: format!("unknown abnormal flag `{flag_raw}`"),
        })?)
    };
    let value_type = obx.value(2)?;
    let value = obx.value(5)?;
    if value_type == "NM" && !value.parse::<f64>().is_ok_and(f64::is_finite) {
        return Err(Hl7Error::InvalidValue {
            field: "OBX-5".into(),
            reason: format!("`{value}` is not numeric"),
        });
    }
    let test_code = {
        let obx_code = obx.value(3)?;
        if obx_code.is_empty() {
            obr.required(4)?
        } else {
            obx_code
        }
    };
    Ok(ResultMessage {
        case_id: CaseId::new(pid.required(18)?),
        patient_ref: pid.value(3)?,
        test_code,
        placer_order_id: obr.value(2)?,
        filler_order_id: obr.value(3)?,
        value_type,
        value,
        abnormal_flag,
        observed_at: parse_time(obr, 7)?,
    })
}

/// Decodes a result and ties it to the data item its test code binds.
pub fn decode_result(raw: &str, codes: &TestCodeMap) -> Result<ClinicalEvent, Hl7Error> {
    bind_result(decode_result_message(raw)?, codes)
}

pub fn bind_result(msg: ResultMessage, codes: &TestCodeMap) -> Result<ClinicalEvent, Hl7Error> {
    let (item, value_type) = codes
        .get(&msg.test_code)
        .ok_or_else(|| Hl7Error::UnknownTestCode(msg.test_code.clone()))?;
    let invalid = |reason: String| Hl7Error::InvalidValue {
        field: "OBX-5".into(),
        reason,
    };
    let value = match value_type {
        ValueType::Number => Value::Number(
            msg.value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| invalid(format!("`{}` is not numeric", msg.value)))?,
        ),
        ValueType::Boolean => match msg.value.as_str() {
            "true" | "Y" => Value::Bool(true),
            "false" | "N" => Value::Bool(false),
            other => return Err(invalid(format!("`{other}` is not a boolean"))),
        },
        ValueType::Text | ValueType::Enumeration(_) => Value::Text(msg.value.clone()),
    };
    Ok(ClinicalEvent {
        case_id: msg.case_id,
        patient_ref: msg.patient_ref,
        data_item: item.clone(),
        test_code: msg.test_code,
        value,
        abnormal_flag: msg.abnormal_flag,
        observed_at: msg.observed_at,
        placer_order_id: msg.placer_order_id,
        filler_order_id: msg.filler_order_id,
    })
}

/// OBX-2 and OBX-5 for a bound value.
pub fn wire_value(value: &Value) -> (&'static str, String) {
    match value {
        Value::Number(n) => ("NM", format_number_literal(*n)),
        Value::Bool(b) => ("ST", b.to_string()),
        Value::Text(t) => ("ST", t.clone()),
    }
}

/// Acknowledges a parsed message, echoing its control id and timestamp.
pub fn make_ack(original: &Hl7Message, code: AckCode, text: Option<&str>) -> String {
    let msh = original.msh();
    let mut ack = Segment::new("MSH");
    ack.set_raw(1, "|")
        .set_raw(2, ENCODING_CHARS)
        .set_raw(3, msh.raw(5))
        .set_raw(4, msh.raw(6))
        .set_raw(5, msh.raw(3))
        .set_raw(6, msh.raw(4))
        .set_raw(7, msh.raw(7))
        .set_raw(9, "ACK")
        .set_raw(10, format!("ACK-{}", msh.raw(10)))
        .set(11, "P")
        .set(12, VERSION);
    let mut msa = Segment::new("MSA");
    msa.set(1, code.as_str()).set_raw(2, msh.raw(10));
    if let Some(text) = text {
        msa.set(3, text);
    }
    Hl7Message {
        segments: vec![ack, msa],
    }
    .to_string()
}

/// Acknowledgement for input that could not be parsed at all.
pub fn make_reject(code: AckCode, text: &str) -> String {
    let mut msh = Segment::new("MSH");
    msh.set_raw(1, "|")
        .set_raw(2, ENCODING_CHARS)
        .set(3, PLACER_APP)
        .set(4, PLACER_FACILITY)
        .set_raw(9, "ACK")
        .set(11, "P")
        .set(12, VERSION);
    let mut msa = Segment::new("MSA");
    msa.set(1, code.as_str()).set(2, "").set(3, text);
    Hl7Message {
        segments: vec![msh, msa],
    }
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::DataItemId;

    fn t0() -> Instant {
        Instant::parse_rfc3339("2025-03-01T08:00:00Z").unwrap()
    }

    fn order() -> OrderRequest {
        OrderRequest {
            case_id: "case-000001".into(),
            patient_ref: "PAT|1^x".into(),
            test_code: "TROPONIN".into(),
            placer_order_id: "case-000001-o1".into(),
            requested_at: t0(),
        }
    }

    #[test]
    fn order_layout() {
        let raw = encode_order(&order());
        let lines: Vec<&str> = raw.split('\r').collect();
        assert_eq!(lines[0], "MSH|^~\\&|CAREPATH|WARD|EMR|HOSPITAL|20250301080000||ORM^O01|ORM-case-000001-o1|P|2.5");
        assert_eq!(lines[1], "PID|1||PAT\\F\\1\\S\\x|||||||||||||||case-000001");
        assert_eq!(lines[2], "ORC|NW|case-000001-o1|||||||20250301080000");
        assert_eq!(lines[3], "OBR|1|case-000001-o1||TROPONIN|||20250301080000");
        assert_eq!(lines[4], "");
        assert_eq!(decode_order(&raw).unwrap(), order());
    }

    #[test]
    fn result_round_trip() {
        let msg = ResultMessage {
            case_id: "case-000001".into(),
            patient_ref: "PAT-1".into(),
            test_code: "TROPONIN".into(),
            placer_order_id: "case-000001-o1".into(),
            filler_order_id: "F-7".into(),
            value_type: "NM".into(),
            value: "0.52".into(),
            abnormal_flag: Some(AbnormalFlag::Abnormal),
            observed_at: t0(),
        };
        let raw = encode_result(&msg);
        assert!(raw.contains("\rOBX|1|NM|TROPONIN||0.52|||A|||F\r"), "{raw}");
        assert_eq!(decode_result_message(&raw).unwrap(), msg);

        let mut codes = TestCodeMap::default();
        codes.insert("TROPONIN", DataItemId::new("troponin"), ValueType::Number);
        let ev = decode_result(&raw, &codes).unwrap();
        assert_eq!(ev.value, Value::Number(0.52));
        assert_eq!(ev.data_item.as_str(), "troponin");

        let empty = TestCodeMap::default();
        assert_eq!(decode_result(&raw, &empty), Err(Hl7Error::UnknownTestCode("TROPONIN".into())));
    }

    #[test]
    fn wrong_type_is_unsupported() {
        let raw = encode_order(&order());
        assert!(matches!(decode_result_message(&raw), Err(Hl7Error::UnsupportedType(t)) if t == "ORM^O01"));
    }

    #[test]
    fn ack_echoes_control_id_and_time() {
        let raw = encode_order(&order());
        let m = Hl7Message::parse(&raw).unwrap();
        let ack = Hl7Message::parse(&make_ack(&m, AckCode::AA, None)).unwrap();
        assert_eq!(ack.message_type(), "ACK");
        assert_eq!(ack.msh().raw(7), "20250301080000");
        let msa = ack.segment("MSA").unwrap();
        assert_eq!(msa.raw(1), "AA");
        assert_eq!(msa.raw(2), "ORM-case-000001-o1");
    }
}

//! Random order/result traffic and fuzz inputs for the HL7 codec.

#![allow(dead_code)]

use std::panic::{catch_unwind, AssertUnwindSafe};

use carepath_core::hl7::{
    decode_order, decode_result, decode_result_message, encode_order, AbnormalFlag, EmrSimulator, Hl7Message, OrderRequest,
    ProfileEntry, ResultProfile, TestCodeMap,
};
use carepath_core::guideline::ValueType;
use carepath_core::ids::{CaseId, DataItemId};
use carepath_core::scheduler::Scheduler;
use carepath_core::time::{Duration, Instant};
use rand::seq::IndexedRandom;
use rand::Rng;

const AWKWARD: [char; 9] = ['|', '^', '&', '~', '\\', '\r', '\n', 'é', ' '];

/// Non-empty text mixing letters, digits and every delimiter.
pub fn text(rng: &mut impl Rng, max: usize) -> String {
    let len = rng.random_range(1..=max);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.25) {
                *AWKWARD.choose(rng).unwrap()
            } else {
                let alphabet = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_.";
                *alphabet.choose(rng).unwrap() as char
            }
        })
        .collect()
}

fn instant(rng: &mut impl Rng) -> Instant {
    // Whole seconds: the wire format has no sub-second part.
    Instant::from_millis(rng.random_range(946_684_800i64..4_102_444_800) * 1000)
}

pub fn order(rng: &mut impl Rng) -> OrderRequest {
    OrderRequest {
        case_id: CaseId::new(text(rng, 16)),
        patient_ref: text(rng, 16),
        test_code: text(rng, 10),
        placer_order_id: text(rng, 20),
        requested_at: instant(rng),
    }
}

/// encode order → simulated EMR → decode result, checking that every field
/// arrives intact.
pub fn order_result_pair(rng: &mut impl Rng) -> Result<(), String> {
    let order = order(rng);
    let raw_orm = encode_order(&order);
    let decoded = decode_order(&raw_orm).map_err(|e| format!("order: {e}"))?;
    if decoded != order {
        return Err(format!("order changed: {order:?} -> {decoded:?}"));
    }

    let numeric = rng.random_bool(0.5);
    let value = if numeric { format!("{:.3}", rng.random_range(-1000.0..1000.0)) } else { format!("r{}", text(rng, 40)) };
    let flag = [None, Some(AbnormalFlag::Normal), Some(AbnormalFlag::Abnormal), Some(AbnormalFlag::High), Some(AbnormalFlag::Low)]
        .choose(rng)
        .copied()
        .unwrap();
    let latency = Duration::from_minutes(rng.random_range(0..600));
    let mut profile = ResultProfile::default();
    profile.entries.insert(order.test_code.clone(), ProfileEntry { latency, value: value.clone(), flag });

    let mut sched = Scheduler::new(order.requested_at);
    let mut emr = EmrSimulator::new(profile);
    let scheduled = emr.submit(&raw_orm, &mut sched).map_err(|e| format!("submit: {e}"))?;
    let timer = sched.fire_next(order.requested_at + latency).map_err(|e| e.to_string())?.ok_or("delivery timer missing")?;
    if timer.timer_id != scheduled.timer_id || timer.due_at != order.requested_at + latency {
        return Err(format!("delivery timer {timer:?} does not match {scheduled:?}"));
    }
    let oru = emr.deliver(timer.timer_id, timer.due_at).ok_or("no result produced")?;
    let r = decode_result_message(&oru).map_err(|e| format!("result: {e}\n{oru:?}"))?;
    let checks = [
        ("case", r.case_id == order.case_id),
        ("patient", r.patient_ref == order.patient_ref),
        ("test code", r.test_code == order.test_code),
        ("placer", r.placer_order_id == order.placer_order_id),
        ("filler", r.filler_order_id == scheduled.filler_order_id),
        ("value", r.value == value),
        ("value type", r.value_type == if numeric { "NM" } else { "ST" }),
        ("flag", r.abnormal_flag == flag),
        ("time", r.observed_at == timer.due_at),
    ];
    match checks.iter().find(|(_, ok)| !ok) {
        Some((field, _)) => Err(format!("{field} lost: {order:?} / {r:?}")),
        None => Ok(()),
    }
}

/// Arbitrary bytes, half of them mutations of a valid result.
pub fn fuzz_input(rng: &mut impl Rng, seed_message: &[u8]) -> Vec<u8> {
    if rng.random_bool(0.5) {
        let len = rng.random_range(0..300);
        (0..len).map(|_| rng.random()).collect()
    } else {
        let mut bytes = seed_message.to_vec();
        for _ in 0..rng.random_range(1..8) {
            let at = rng.random_range(0..bytes.len().max(1));
            match rng.random_range(0..3) {
                0 if !bytes.is_empty() => {
                    bytes.remove(at.min(bytes.len() - 1));
                }
                1 => bytes.insert(at.min(bytes.len()), *b"|^~\\&\r\nX0".choose(rng).unwrap()),
                _ if !bytes.is_empty() => {
                    let i = at.min(bytes.len() - 1);
                    bytes[i] = rng.random();
                }
                _ => {}
            }
        }
        bytes
    }
}

/// Runs the parser and the result decoder on `bytes`; `Err` only if either
/// panics.
pub fn decode_is_total(bytes: &[u8], codes: &TestCodeMap) -> Result<(), String> {
    catch_unwind(AssertUnwindSafe(|| {
        let _ = Hl7Message::parse_bytes(bytes);
        if let Ok(text) = std::str::from_utf8(bytes) {
            let _ = decode_result(text, codes);
            let _ = decode_order(text);
        }
    }))
    .map_err(|_| format!("panic on {:?}", String::from_utf8_lossy(bytes)))
}

pub fn chest_pain_codes() -> TestCodeMap {
    let mut codes = TestCodeMap::default();
    codes.insert("TROPONIN", DataItemId::new("troponin"), ValueType::Number);
    codes.insert("ECG", DataItemId::new("ecg"), ValueType::Text);
    codes
}

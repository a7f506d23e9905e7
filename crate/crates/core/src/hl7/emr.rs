//! A simulated EMR that answers orders with results after a fixed latency.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{decode_order, encode_result, AbnormalFlag, Hl7Error, OrderRequest, ResultMessage};
use crate::ids::{TaskId, TimerId};
use crate::scheduler::{Scheduler, SchedulerError, TimerPurpose};
use crate::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub latency: Duration,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<AbnormalFlag>,
}

/// Canned result per test code.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResultProfile {
    pub entries: BTreeMap<String, ProfileEntry>,
}

impl ResultProfile {
    pub fn with(mut self, code: &str, latency: Duration, value: &str, flag: Option<AbnormalFlag>) -> Self {
        self.entries.insert(
            code.to_string(),
            ProfileEntry {
                latency,
                value: value.to_string(),
                flag,
            },
        );
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmrError {
    #[error(transparent)]
    Decode(#[from] Hl7Error),
    #[error("no simulated result for test code `{0}`")]
    NoProfile(String),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledResult {
    pub timer_id: TimerId,
    pub due_at: Instant,
    pub filler_order_id: String,
}

#[derive(Debug, Clone)]
struct Pending {
    order: OrderRequest,
    filler_order_id: String,
    entry: ProfileEntry,
}

#[derive(Debug, Clone, Default)]
pub struct EmrSimulator {
    profile: ResultProfile,
    pending: BTreeMap<TimerId, Pending>,
    next_filler: u64,
    received: Vec<String>,
}

impl EmrSimulator {
    pub fn new(profile: ResultProfile) -> Self {
        EmrSimulator {
            profile,
            ..Default::default()
        }
    }

    pub fn profile(&self) -> &ResultProfile {
        &self.profile
    }

    pub fn set_profile(&mut self, profile: ResultProfile) {
        self.profile = profile;
    }

    /// Raw ORM messages received so far.
    pub fn received(&self) -> &[String] {
        &self.received
    }

    /// Accepts an ORM^O01 and schedules its result.
    pub fn submit(&mut self, raw_orm: &str, sched: &mut Scheduler) -> Result<ScheduledResult, EmrError> {
        let order = decode_order(raw_orm)?;
        self.received.push(raw_orm.to_string());
        self.emr_submit(order, sched)
    }

    pub fn emr_submit(&mut self, order: OrderRequest, sched: &mut Scheduler) -> Result<ScheduledResult, EmrError> {
        let entry = self
            .profile
            .entries
            .get(&order.test_code)
            .cloned()
            .ok_or_else(|| EmrError::NoProfile(order.test_code.clone()))?;
        let due_at = order.requested_at.max(sched.now()) + entry.latency;
        self.next_filler += 1;
        let filler_order_id = format!("F{:05}", self.next_filler);
        let timer_id = sched.schedule(
            order.case_id.clone(),
            TaskId::new(order.test_code.clone()),
            TimerPurpose::EmrDelivery {
                placer_order_id: order.placer_order_id.clone(),
            },
            due_at,
            None,
        )?;
        self.pending.insert(
            timer_id,
            Pending {
                order,
                filler_order_id: filler_order_id.clone(),
                entry,
            },
        );
        Ok(ScheduledResult {
            timer_id,
            due_at,
            filler_order_id,
        })
    }

    /// Builds the ORU^R01 for a fired delivery timer.
    pub fn deliver(&mut self, timer: TimerId, at: Instant) -> Option<String> {
        let p = self.pending.remove(&timer)?;
        let value_type = if p.entry.value.parse::<f64>().is_ok_and(f64::is_finite) {
            "NM"
        } else {
            "ST"
        };
        Some(encode_result(&ResultMessage {
            case_id: p.order.case_id,
            patient_ref: p.order.patient_ref,
            test_code: p.order.test_code,
            placer_order_id: p.order.placer_order_id,
            filler_order_id: p.filler_order_id,
            value_type: value_type.to_string(),
            value: p.entry.value,
            abnormal_flag: p.entry.flag,
            observed_at: at,
        }))
    }

    /// Drops pending deliveries, e.g. for an aborted case.
    pub fn forget(&mut self, timer: TimerId) {
        self.pending.remove(&timer);
    }

    pub fn is_pending(&self, timer: TimerId) -> bool {
        self.pending.contains_key(&timer)
    }
}

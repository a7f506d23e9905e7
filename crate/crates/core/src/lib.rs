//! Clinical guideline enactment: guideline model and document format,
//! interpreter, timers, HL7 v2 exchange and the case event log.

pub mod batch;
pub mod dsl;
pub mod engine;
pub mod eventlog;
pub mod guideline;
pub mod hl7;
pub mod ids;
pub mod runtime;
pub mod scenario;
pub mod scheduler;
pub mod scoring;
pub mod time;

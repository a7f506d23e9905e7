//! Instants and durations used across the engine.
//!
//! Everything is kept in whole milliseconds since the Unix epoch so that
//! virtual time and wall time serialize the same way.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const MINUTE_MS: u64 = 60_000;
const HOUR_MS: u64 = 60 * MINUTE_MS;
const DAY_MS: u64 = 24 * HOUR_MS;

/// A point in time, UTC, millisecond resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Instant(i64);

impl Instant {
    pub const fn from_millis(ms: i64) -> Self {
        Instant(ms)
    }

    pub const fn as_millis(self) -> i64 {
        self.0
    }

    pub fn now() -> Self {
        Instant(Utc::now().timestamp_millis())
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        Utc.timestamp_millis_opt(self.0)
            .single()
            .unwrap_or(DateTime::<Utc>::MIN_UTC)
    }

    /// ISO-8601 / RFC 3339 rendering, always with a `Z` suffix.
    pub fn to_rfc3339(self) -> String {
        self.to_datetime().to_rfc3339_opts(SecondsFormat::Millis, true)
    }

    pub fn parse_rfc3339(text: &str) -> Result<Self, TimeError> {
        DateTime::parse_from_rfc3339(text)
            .map(|dt| Instant(dt.with_timezone(&Utc).timestamp_millis()))
            .map_err(|_| TimeError::BadInstant(text.to_string()))
    }

    /// HL7 `DTM` form: `YYYYMMDDHHMMSS`.
    pub fn to_hl7(self) -> String {
        self.to_datetime().format("%Y%m%d%H%M%S").to_string()
    }

    pub fn parse_hl7(text: &str) -> Result<Self, TimeError> {
        chrono::NaiveDateTime::parse_from_str(text, "%Y%m%d%H%M%S")
            .map(|naive| Instant(naive.and_utc().timestamp_millis()))
            .map_err(|_| TimeError::BadInstant(text.to_string()))
    }

    /// Saturating difference, zero when `earlier` is after `self`.
    pub fn since(self, earlier: Instant) -> Duration {
        Duration::from_millis(self.0.saturating_sub(earlier.0).max(0) as u64)
    }
}

impl Add<Duration> for Instant {
    type Output = Instant;
    fn add(self, rhs: Duration) -> Instant {
        Instant(self.0.saturating_add(rhs.0 as i64))
    }
}

impl Sub<Duration> for Instant {
    type Output = Instant;
    fn sub(self, rhs: Duration) -> Instant {
        Instant(self.0.saturating_sub(rhs.0 as i64))
    }
}

impl fmt::Display for Instant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl Serialize for Instant {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Instant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Instant::parse_rfc3339(&text).map_err(serde::de::Error::custom)
    }
}

/// A non-negative span of time.
///
/// Textual form is `<integer><unit>` with unit one of `s`, `m`, `h`, `d`.
/// Guideline documents only accept `m`, `h` and `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Duration(u64);

impl Duration {
    pub const ZERO: Duration = Duration(0);

    pub const fn from_millis(ms: u64) -> Self {
        Duration(ms)
    }
    pub const fn from_secs(s: u64) -> Self {
        Duration(s * 1000)
    }
    pub const fn from_minutes(m: u64) -> Self {
        Duration(m * MINUTE_MS)
    }
    pub const fn from_hours(h: u64) -> Self {
        Duration(h * HOUR_MS)
    }
    pub const fn from_days(d: u64) -> Self {
        Duration(d * DAY_MS)
    }
    pub const fn as_millis(self) -> u64 {
        self.0
    }
    pub const fn is_whole_minutes(self) -> bool {
        self.0.is_multiple_of(MINUTE_MS)
    }

    /// Canonical text using the largest unit that divides the value.
    pub fn to_text(self) -> String {
        let ms = self.0;
        if ms == 0 {
            "0m".to_string()
        } else if ms.is_multiple_of(DAY_MS) {
            format!("{}d", ms / DAY_MS)
        } else if ms.is_multiple_of(HOUR_MS) {
            format!("{}h", ms / HOUR_MS)
        } else if ms.is_multiple_of(MINUTE_MS) {
            format!("{}m", ms / MINUTE_MS)
        } else if ms.is_multiple_of(1000) {
            format!("{}s", ms / 1000)
        } else {
            format!("{}ms", ms)
        }
    }

    /// Parses `<integer><unit>`; `allowed` restricts the unit letters.
    pub fn parse_with_units(text: &str, allowed: &[char]) -> Result<Self, TimeError> {
        let bad = || TimeError::BadDuration(text.to_string());
        let unit = text.chars().last().ok_or_else(bad)?;
        if !allowed.contains(&unit) {
            return Err(bad());
        }
        let digits = &text[..text.len() - unit.len_utf8()];
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let n: u64 = digits.parse().map_err(|_| bad())?;
        let scale = match unit {
            's' => 1000,
            'm' => MINUTE_MS,
            'h' => HOUR_MS,
            'd' => DAY_MS,
            _ => return Err(bad()),
        };
        n.checked_mul(scale).map(Duration).ok_or_else(bad)
    }

    /// `+HH:MM` (hours may exceed 24), used in traces.
    pub fn to_clock_offset(self) -> String {
        let minutes = self.0 / MINUTE_MS;
        format!("+{:02}:{:02}", minutes / 60, minutes % 60)
    }
}

impl Add for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0.saturating_add(rhs.0))
    }
}

impl FromStr for Duration {
    type Err = TimeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Duration::parse_with_units(s, &['s', 'm', 'h', 'd'])
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl Serialize for Duration {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_text())
    }
}

impl<'de> Deserialize<'de> for Duration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimeError {
    #[error("invalid duration `{0}` (expected <integer><unit>)")]
    BadDuration(String),
    #[error("invalid instant `{0}`")]
    BadInstant(String),
}

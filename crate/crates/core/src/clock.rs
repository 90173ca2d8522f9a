//! Mapping between simulated microseconds and the scenario's wall-clock
//! calendar (the gateway console prints `DD-MM-YYYY` and `HH:MM`).

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use thiserror::Error;

use crate::medium::SimTime;

pub const US_PER_SECOND: SimTime = 1_000_000;
pub const US_PER_MINUTE: SimTime = 60 * US_PER_SECOND;

/// Console date format, e.g. `09-07-2020`.
pub const CONSOLE_DATE_FORMAT: &str = "%d-%m-%Y";
pub const CONSOLE_TIME_FORMAT: &str = "%H:%M";
pub const ISO_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClockError {
    #[error("malformed date {0:?}, expected DD-MM-YYYY")]
    BadDate(String),
    #[error("malformed clock time {0:?}, expected HH:MM")]
    BadTime(String),
    #[error("malformed timestamp {0:?}, expected YYYY-MM-DDTHH:MM[:SS]")]
    BadTimestamp(String),
    #[error("{0} lies before the simulation origin")]
    BeforeOrigin(NaiveDateTime),
}

pub fn parse_console_date(s: &str) -> Result<NaiveDate, ClockError> {
    NaiveDate::parse_from_str(s, CONSOLE_DATE_FORMAT).map_err(|_| ClockError::BadDate(s.into()))
}

pub fn parse_clock_time(s: &str) -> Result<NaiveTime, ClockError> {
    NaiveTime::parse_from_str(s, CONSOLE_TIME_FORMAT).map_err(|_| ClockError::BadTime(s.into()))
}

/// Accepts `YYYY-MM-DDTHH:MM:SS` or `YYYY-MM-DDTHH:MM`.
pub fn parse_iso(s: &str) -> Result<NaiveDateTime, ClockError> {
    NaiveDateTime::parse_from_str(s, ISO_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .map_err(|_| ClockError::BadTimestamp(s.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    origin: NaiveDateTime,
}

impl SimClock {
    pub fn new(origin: NaiveDateTime) -> Self {
        SimClock { origin }
    }

    pub fn origin(&self) -> NaiveDateTime {
        self.origin
    }

    pub fn at(&self, t: SimTime) -> NaiveDateTime {
        self.origin + Duration::microseconds(t as i64)
    }

    pub fn sim_time(&self, at: NaiveDateTime) -> Result<SimTime, ClockError> {
        let delta = at - self.origin;
        delta
            .num_microseconds()
            .filter(|us| *us >= 0)
            .map(|us| us as SimTime)
            .ok_or(ClockError::BeforeOrigin(at))
    }

    /// Simulated time of a clock reading on the origin's date.
    pub fn sim_time_of_clock(&self, time: NaiveTime) -> Result<SimTime, ClockError> {
        self.sim_time(self.origin.date().and_time(time))
    }

    /// Wall-clock stamp truncated to whole seconds.
    pub fn stamp(&self, t: SimTime) -> NaiveDateTime {
        let at = self.at(t);
        at.with_nanosecond(0).unwrap_or(at)
    }

    pub fn console_date(&self, t: SimTime) -> String {
        self.at(t).format(CONSOLE_DATE_FORMAT).to_string()
    }

    pub fn console_time(&self, t: SimTime) -> String {
        self.at(t).format(CONSOLE_TIME_FORMAT).to_string()
    }

    pub fn iso(&self, t: SimTime) -> String {
        self.stamp(t).format(ISO_FORMAT).to_string()
    }
}

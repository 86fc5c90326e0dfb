//! Knowledge-cutoff dates.

use std::fmt;
use std::str::FromStr;

use chrono::{FixedOffset, NaiveDate, NaiveTime, TimeZone};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid cutoff date {input:?}: expected YYYY-MM-DD with optional Z or ±HH:MM offset")]
pub struct CutoffParseError {
    pub input: String,
}

/// A calendar date in a fixed timezone (UTC when none is given). The cutoff
/// covers the whole day: anything up to and including 23:59:59 local time is
/// on the known side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cutoff {
    date: NaiveDate,
    offset: FixedOffset,
}

impl Cutoff {
    pub fn utc(date: NaiveDate) -> Self {
        Self {
            date,
            offset: FixedOffset::east_opt(0).expect("zero offset"),
        }
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    /// Last second (UTC epoch seconds) that still counts as before the cutoff.
    pub fn end_of_day(&self) -> i64 {
        let end = self.date.and_time(NaiveTime::from_hms_opt(23, 59, 59).expect("valid time"));
        self.offset
            .from_local_datetime(&end)
            .single()
            .expect("fixed offsets are unambiguous")
            .timestamp()
    }

    /// True when `timestamp` is on or before the cutoff day.
    pub fn admits(&self, timestamp: i64) -> bool {
        timestamp <= self.end_of_day()
    }
}

impl FromStr for Cutoff {
    type Err = CutoffParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || CutoffParseError { input: s.to_string() };
        let s = s.trim();
        if s.len() < 10 || !s.is_char_boundary(10) {
            return Err(err());
        }
        let (date, zone) = s.split_at(10);
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|_| err())?;
        let offset = match zone {
            "" | "Z" | "z" => FixedOffset::east_opt(0),
            z => {
                let (sign, rest) = match z.as_bytes().first() {
                    Some(b'+') => (1, &z[1..]),
                    Some(b'-') => (-1, &z[1..]),
                    _ => return Err(err()),
                };
                let (h, m) = rest.split_once(':').ok_or_else(err)?;
                let h: i32 = h.parse().map_err(|_| err())?;
                let m: i32 = m.parse().map_err(|_| err())?;
                if h > 23 || m > 59 {
                    return Err(err());
                }
                FixedOffset::east_opt(sign * (h * 3600 + m * 60))
            }
        }
        .ok_or_else(err)?;
        Ok(Self { date, offset })
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.date.format("%Y-%m-%d"))?;
        if self.offset.local_minus_utc() != 0 {
            write!(f, "{}", self.offset)?;
        }
        Ok(())
    }
}

impl Serialize for Cutoff {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cutoff {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn end_of_day_is_inclusive() {
        let c: Cutoff = "2020-12-31".parse().unwrap();
        // 2020-12-31T23:59:59Z
        assert_eq!(c.end_of_day(), 1_609_459_199);
        assert!(c.admits(1_609_459_199));
        assert!(!c.admits(1_609_459_200));
    }

    #[test]
    fn offsets_shift_the_boundary() {
        let c: Cutoff = "2020-12-31+02:00".parse().unwrap();
        assert_eq!(c.end_of_day(), 1_609_459_199 - 7200);
        assert_eq!(c.to_string(), "2020-12-31+02:00");
        let z: Cutoff = "2020-12-31Z".parse().unwrap();
        assert_eq!(z.to_string(), "2020-12-31");
    }

    #[test]
    fn rejects_garbage() {
        assert!("2020-13-01".parse::<Cutoff>().is_err());
        assert!("yesterday".parse::<Cutoff>().is_err());
        assert!("2020-12-31 PST".parse::<Cutoff>().is_err());
    }
}

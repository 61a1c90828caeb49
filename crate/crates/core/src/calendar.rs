//! Integer day numbering anchored at Jan 1 1981 (day 0) and calendar-date matching.
//!
//! Supported span is Jan 1 1977 .. Dec 31 2030, so pre-1981 days carry negative
//! indices. Matching windows wrap across year boundaries and treat Feb 29 as an
//! alias of Feb 28 when used as a target date.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::RangeInclusive;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIRST_YEAR: i32 = 1977;
pub const LAST_YEAR: i32 = 2030;

/// Day 0.
pub fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1981, 1, 1).expect("valid epoch")
}

/// A day number; 0 is Jan 1 1981.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DayIndex(pub i64);

impl DayIndex {
    pub const MIN: DayIndex = DayIndex(-1461);
    pub const MAX: DayIndex = DayIndex(18_261);

    /// Day index of a Gregorian date, range-checked.
    pub fn from_date(date: NaiveDate) -> Result<Self> {
        let t = DayIndex(date.signed_duration_since(epoch()).num_days());
        t.check()?;
        Ok(t)
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Result<Self> {
        let date = NaiveDate::from_ymd_opt(year, month, day)
            .ok_or(Error::InvalidCalDate { month, day })?;
        Self::from_date(date)
    }

    /// Parses an ISO `YYYY-MM-DD` string.
    pub fn parse_iso(s: &str) -> Result<Self> {
        let date = NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .map_err(|e| Error::Domain(format!("bad date {s:?}: {e}")))?;
        Self::from_date(date)
    }

    pub fn check(self) -> Result<Self> {
        if self < Self::MIN || self > Self::MAX {
            Err(Error::OutOfRange(self.0))
        } else {
            Ok(self)
        }
    }

    pub fn to_date(self) -> Result<NaiveDate> {
        self.check()?;
        Ok(epoch() + Duration::days(self.0))
    }

    pub fn offset(self, days: i64) -> DayIndex {
        DayIndex(self.0 + days)
    }

    /// Signed number of days from `other` to `self`.
    pub fn since(self, other: DayIndex) -> i64 {
        self.0 - other.0
    }
}

impl fmt::Display for DayIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_date() {
            Ok(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Err(_) => write!(f, "day{}", self.0),
        }
    }
}

const MONTH_NAMES: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];
const DAYS_IN_MONTH: [u32; 12] = [31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// A month/day pair without a year. Feb 29 is valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CalDate {
    month: u32,
    day: u32,
}

impl CalDate {
    pub const FEB_29: CalDate = CalDate { month: 2, day: 29 };

    pub fn new(month: u32, day: u32) -> Result<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > DAYS_IN_MONTH[month as usize - 1] {
            return Err(Error::InvalidCalDate { month, day });
        }
        Ok(CalDate { month, day })
    }

    pub fn month(self) -> u32 {
        self.month
    }

    pub fn day(self) -> u32 {
        self.day
    }

    pub fn of_date(date: NaiveDate) -> Self {
        CalDate {
            month: date.month(),
            day: date.day(),
        }
    }

    /// Position in a 366-day leap-year layout (Jan 1 = 0, Feb 29 = 59, Dec 31 = 365).
    pub fn ordinal(self) -> usize {
        let before: u32 = DAYS_IN_MONTH[..self.month as usize - 1].iter().sum();
        (before + self.day - 1) as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Result<Self> {
        let mut rest = ordinal as u32;
        for (i, len) in DAYS_IN_MONTH.iter().enumerate() {
            if rest < *len {
                return Ok(CalDate {
                    month: i as u32 + 1,
                    day: rest + 1,
                });
            }
            rest -= len;
        }
        Err(Error::Domain(format!("calendar ordinal {ordinal} out of 0..366")))
    }

    /// All 366 calendar dates in order.
    pub fn all() -> impl Iterator<Item = CalDate> {
        (0..366).map(|o| CalDate::from_ordinal(o).expect("ordinal in range"))
    }

    /// The date used when building match sets: Feb 29 maps to Feb 28.
    pub fn canonical(self) -> Self {
        if self == Self::FEB_29 {
            CalDate { month: 2, day: 28 }
        } else {
            self
        }
    }
}

impl fmt::Display for CalDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", MONTH_NAMES[self.month as usize - 1], self.day)
    }
}

pub fn year_of(t: DayIndex) -> Result<i32> {
    Ok(t.to_date()?.year())
}

pub fn cal_of(t: DayIndex) -> Result<CalDate> {
    Ok(CalDate::of_date(t.to_date()?))
}

pub fn date_of(t: DayIndex) -> Result<(CalDate, i32)> {
    let d = t.to_date()?;
    Ok((CalDate::of_date(d), d.year()))
}

/// Inverse of [`date_of`]. Feb 29 in a non-leap year is an error.
pub fn index_of(cal: CalDate, year: i32) -> Result<DayIndex> {
    DayIndex::from_ymd(year, cal.month, cal.day)
}

pub fn is_leap(year: i32) -> bool {
    NaiveDate::from_ymd_opt(year, 2, 29).is_some()
}

pub fn year_length(year: i32) -> u32 {
    if is_leap(year) {
        366
    } else {
        365
    }
}

pub fn first_day(year: i32) -> Result<DayIndex> {
    DayIndex::from_ymd(year, 1, 1)
}

pub fn last_day(year: i32) -> Result<DayIndex> {
    DayIndex::from_ymd(year, 12, 31)
}

/// Every day `s` of `period` lying within `window` days of an occurrence of `cal`.
///
/// Occurrences are anchored in each year (Feb 29 anchors on Feb 28) and the
/// window is taken around the anchor, so windows wrap into neighbouring years.
/// Result is sorted ascending and has `years * (2 * window + 1)` entries when
/// windows do not overlap.
pub fn days_matching(cal: CalDate, window: u32, period: RangeInclusive<i32>) -> Result<Vec<DayIndex>> {
    let (start, end) = (*period.start(), *period.end());
    if start > end {
        return Err(Error::Domain(format!("empty year range {start}..={end}")));
    }
    let lo = first_day(start)?;
    let hi = last_day(end)?;
    let anchor_cal = cal.canonical();
    let spill = 1 + window as i32 / 365;
    let w = window as i64;
    let mut days = BTreeSet::new();
    for year in (start - spill)..=(end + spill) {
        let Some(anchor) = NaiveDate::from_ymd_opt(year, anchor_cal.month, anchor_cal.day) else {
            continue;
        };
        let a = anchor.signed_duration_since(epoch()).num_days();
        for s in (a - w)..=(a + w) {
            if s >= lo.0 && s <= hi.0 {
                days.insert(DayIndex(s));
            }
        }
    }
    Ok(days.into_iter().collect())
}

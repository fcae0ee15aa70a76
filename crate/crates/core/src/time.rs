//! Fixed-width `yyyy-MM-dd HH:mm:ss` timestamps and weekday helpers.
//!
//! Times are naive local civil time; no offsets or zone arithmetic.

use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

pub const TIMESTAMP_LEN: usize = 19;

/// Parses `yyyy-MM-dd HH:mm:ss` exactly: zero-padded fields, a single
/// space separator, and a valid calendar date and time of day.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let b = s.as_bytes();
    if b.len() != TIMESTAMP_LEN
        || b[4] != b'-'
        || b[7] != b'-'
        || b[10] != b' '
        || b[13] != b':'
        || b[16] != b':'
    {
        return None;
    }
    let num = |range: std::ops::Range<usize>| -> Option<u32> {
        b[range].iter().try_fold(0u32, |acc, &c| {
            c.is_ascii_digit().then(|| acc * 10 + u32::from(c - b'0'))
        })
    };
    let date = NaiveDate::from_ymd_opt(num(0..4)? as i32, num(5..7)?, num(8..10)?)?;
    let time = NaiveTime::from_hms_opt(num(11..13)?, num(14..16)?, num(17..19)?)?;
    Some(date.and_time(time))
}

pub fn write_timestamp(out: &mut String, ts: &NaiveDateTime) {
    let _ = write!(
        out,
        "{:04}-{:02}-{:02} {:02}:{:02}:{:02}",
        ts.year(),
        ts.month(),
        ts.day(),
        ts.hour(),
        ts.minute(),
        ts.second()
    );
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    let mut s = String::with_capacity(TIMESTAMP_LEN);
    write_timestamp(&mut s, ts);
    s
}

pub const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

pub fn weekday_name(day: Weekday) -> &'static str {
    match day {
        Weekday::Mon => "Mon",
        Weekday::Tue => "Tue",
        Weekday::Wed => "Wed",
        Weekday::Thu => "Thu",
        Weekday::Fri => "Fri",
        Weekday::Sat => "Sat",
        Weekday::Sun => "Sun",
    }
}

/// Accepts `Mon`..`Sun` and full English names, case-insensitively.
pub fn parse_weekday(s: &str) -> Option<Weekday> {
    s.parse().ok()
}

/// Inclusive calendar date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateRange {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Option<Self> {
        (from <= to).then_some(Self { from, to })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.from <= date && date <= self.to
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        let to = self.to;
        self.from.iter_days().take_while(move |d| *d <= to)
    }

    pub fn len_days(&self) -> u32 {
        (self.to - self.from).num_days() as u32 + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        let ts = parse_timestamp("2018-09-03 08:05:10").unwrap();
        assert_eq!(ts.to_string(), "2018-09-03 08:05:10");
        assert_eq!(format_timestamp(&ts), "2018-09-03 08:05:10");
    }

    #[test]
    fn rejects_bad_timestamps() {
        for bad in [
            "2018-09-03T08:05:10",
            "2018-9-03 08:05:10",
            "2018-09-31 08:05:10",
            "2018-09-03 24:00:00",
            "2018-09-03 08:05",
            "2018-09-03 08:05:1a",
            "",
        ] {
            assert!(parse_timestamp(bad).is_none(), "{bad}");
        }
    }

    #[test]
    fn weekday_of_known_date() {
        // 2018-09-03: day count from 2018-09-01 (a Saturday) is 2 -> Monday.
        let d = NaiveDate::from_ymd_opt(2018, 9, 3).unwrap();
        assert_eq!(d.weekday(), Weekday::Mon);
        assert_eq!(parse_weekday("Sat"), Some(Weekday::Sat));
        assert_eq!(parse_weekday("sunday"), Some(Weekday::Sun));
        assert_eq!(parse_weekday("Funday"), None);
    }

    #[test]
    fn date_range() {
        let d = |day| NaiveDate::from_ymd_opt(2018, 9, day).unwrap();
        assert!(DateRange::new(d(2), d(1)).is_none());
        let r = DateRange::new(d(1), d(30)).unwrap();
        assert_eq!(r.len_days(), 30);
        assert_eq!(r.days().count(), 30);
        assert!(r.contains(d(30)) && !r.contains(d(30).succ_opt().unwrap()));
    }
}

//! Calendar helpers. Observation timestamps are whole days since 1970-01-01.

use chrono::{Datelike, NaiveDate};

pub type EpochDay = i64;

const UNIX_EPOCH: NaiveDate = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();

pub fn to_epoch_day(d: NaiveDate) -> EpochDay {
    (d - UNIX_EPOCH).num_days()
}

pub fn from_epoch_day(day: EpochDay) -> NaiveDate {
    UNIX_EPOCH + chrono::Duration::days(day)
}

pub fn year_month(day: EpochDay) -> (i32, u32) {
    let d = from_epoch_day(day);
    (d.year(), d.month())
}

/// Parses `YYYY-MM-DD`, an RFC 3339 timestamp (date part kept), `YYYY-MM`
/// or `M/YYYY`. Month-only forms resolve to the first day of the month.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.date_naive());
    }
    if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Some(dt.date());
    }
    let (y, m) = if let Some((y, m)) = s.split_once('-') {
        (y, m)
    } else if let Some((m, y)) = s.split_once('/') {
        (y, m)
    } else {
        return None;
    };
    let y: i32 = y.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    NaiveDate::from_ymd_opt(y, m, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_day_round_trip() {
        let d = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        assert_eq!(to_epoch_day(d), 10957);
        assert_eq!(from_epoch_day(10957), d);
        assert_eq!(from_epoch_day(-1), NaiveDate::from_ymd_opt(1969, 12, 31).unwrap());
    }

    #[test]
    fn date_forms() {
        let july = NaiveDate::from_ymd_opt(2100, 7, 1).unwrap();
        assert_eq!(parse_date("7/2100"), Some(july));
        assert_eq!(parse_date("2100-07"), Some(july));
        assert_eq!(parse_date("2100-07-01"), Some(july));
        assert_eq!(parse_date("2100-07-01T08:30:00Z"), Some(july));
        assert_eq!(parse_date("13/2100"), None);
        assert_eq!(parse_date("tomorrow"), None);
    }
}

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::FhirError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatePrecision {
    Year,
    Month,
    Day,
    Instant,
}

/// A FHIR `date`/`dateTime`/`instant` of any precision.
///
/// Partial values (`2019`, `2019-06`) are placed at the first instant of their
/// period in UTC so that every value has a position in one total order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FhirDateTime {
    instant: DateTime<Utc>,
    date: NaiveDate,
    precision: DatePrecision,
    original: String,
}

impl FhirDateTime {
    pub fn parse(s: &str) -> Result<Self, FhirError> {
        let invalid = || FhirError::InvalidDate(s.to_string());
        let trimmed = s.trim();
        let bytes = trimmed.as_bytes();
        let all_digits = |r: std::ops::Range<usize>| bytes[r].iter().all(u8::is_ascii_digit);

        let (date, precision) = match bytes.len() {
            4 if all_digits(0..4) => {
                let year = trimmed.parse().map_err(|_| invalid())?;
                (NaiveDate::from_ymd_opt(year, 1, 1).ok_or_else(invalid)?, DatePrecision::Year)
            }
            7 if all_digits(0..4) && bytes[4] == b'-' && all_digits(5..7) => {
                let year = trimmed[..4].parse().map_err(|_| invalid())?;
                let month = trimmed[5..].parse().map_err(|_| invalid())?;
                (NaiveDate::from_ymd_opt(year, month, 1).ok_or_else(invalid)?, DatePrecision::Month)
            }
            10 => (
                NaiveDate::parse_from_str(trimmed, "%Y-%m-%d").map_err(|_| invalid())?,
                DatePrecision::Day,
            ),
            _ => {
                if let Ok(dt) = DateTime::parse_from_rfc3339(trimmed) {
                    return Ok(Self {
                        instant: dt.with_timezone(&Utc),
                        date: dt.date_naive(),
                        precision: DatePrecision::Instant,
                        original: trimmed.to_string(),
                    });
                }
                // Offset-less timestamps are not valid FHIR but show up in the wild; read them as UTC.
                let naive = NaiveDateTime::parse_from_str(trimmed, "%Y-%m-%dT%H:%M:%S%.f")
                    .map_err(|_| invalid())?;
                return Ok(Self {
                    instant: naive.and_utc(),
                    date: naive.date(),
                    precision: DatePrecision::Instant,
                    original: trimmed.to_string(),
                });
            }
        };
        Ok(Self {
            instant: date.and_time(NaiveTime::MIN).and_utc(),
            date,
            precision,
            original: trimmed.to_string(),
        })
    }

    pub fn from_date(date: NaiveDate) -> Self {
        Self {
            instant: date.and_time(NaiveTime::MIN).and_utc(),
            date,
            precision: DatePrecision::Day,
            original: date.format("%Y-%m-%d").to_string(),
        }
    }

    /// The point in time used for ordering.
    pub fn instant(&self) -> DateTime<Utc> {
        self.instant
    }

    /// The calendar date as written in the source, ignoring any offset.
    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn precision(&self) -> DatePrecision {
        self.precision
    }

    pub fn original(&self) -> &str {
        &self.original
    }
}

impl Ord for FhirDateTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.instant
            .cmp(&other.instant)
            .then(self.precision.cmp(&other.precision))
            .then_with(|| self.original.cmp(&other.original))
    }
}

impl PartialOrd for FhirDateTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FhirDateTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.precision {
            DatePrecision::Year => write!(f, "{}", self.date.format("%Y")),
            DatePrecision::Month => write!(f, "{}", self.date.format("%Y-%m")),
            DatePrecision::Day | DatePrecision::Instant => write!(f, "{}", self.date.format("%Y-%m-%d")),
        }
    }
}

impl FromStr for FhirDateTime {
    type Err = FhirError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for FhirDateTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.original)
    }
}

impl<'de> Deserialize<'de> for FhirDateTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_dates_start_at_period_beginning() {
        let year = FhirDateTime::parse("2019").unwrap();
        let month = FhirDateTime::parse("2019-06").unwrap();
        let day = FhirDateTime::parse("2019-06-15").unwrap();
        assert_eq!(year.instant().to_rfc3339(), "2019-01-01T00:00:00+00:00");
        assert_eq!(month.instant().to_rfc3339(), "2019-06-01T00:00:00+00:00");
        assert_eq!(year.precision(), DatePrecision::Year);
        assert!(year < month && month < day);
        assert_eq!(year.to_string(), "2019");
        assert_eq!(month.to_string(), "2019-06");
    }

    #[test]
    fn timestamps_order_by_instant_and_display_local_date() {
        let late_evening = FhirDateTime::parse("2020-03-01T23:30:00-05:00").unwrap();
        let next_morning_utc = FhirDateTime::parse("2020-03-02T05:00:00Z").unwrap();
        assert!(late_evening < next_morning_utc);
        assert_eq!(late_evening.to_string(), "2020-03-01");
        assert_eq!(late_evening.precision(), DatePrecision::Instant);
    }

    #[test]
    fn same_day_partial_precedes_timestamp() {
        let day = FhirDateTime::parse("2020-03-01").unwrap();
        let ts = FhirDateTime::parse("2020-03-01T00:00:00Z").unwrap();
        assert!(day < ts);
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "20x9", "2019-13", "2019-02-30", "yesterday", "2019-06-01T10:00"] {
            assert!(FhirDateTime::parse(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn offsetless_timestamp_reads_as_utc() {
        let dt = FhirDateTime::parse("2021-01-02T03:04:05").unwrap();
        assert_eq!(dt.instant().to_rfc3339(), "2021-01-02T03:04:05+00:00");
    }
}

//! Durations with unit suffixes, normalized to years (1y = 365d = 12mo).

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

pub const DAYS_PER_YEAR: f64 = 365.0;
pub const MONTHS_PER_YEAR: f64 = 12.0;

/// A time span stored internally in years.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Duration {
    years: f64,
}

impl Duration {
    pub fn from_years(years: f64) -> Self {
        Duration { years }
    }

    pub fn from_days(days: f64) -> Self {
        Duration {
            years: days / DAYS_PER_YEAR,
        }
    }

    pub fn from_months(months: f64) -> Self {
        Duration {
            years: months / MONTHS_PER_YEAR,
        }
    }

    pub fn years(&self) -> f64 {
        self.years
    }

    pub fn is_positive(&self) -> bool {
        self.years > 0.0 && self.years.is_finite()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("invalid duration {0:?}: expected <number><d|mo|y>, e.g. \"1d\", \"6mo\", \"2y\"")]
pub struct DurationParseError(pub String);

impl FromStr for Duration {
    type Err = DurationParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || DurationParseError(s.to_string());
        let (num, unit) = match s.char_indices().find(|(_, c)| c.is_ascii_alphabetic()) {
            Some((i, _)) => s.split_at(i),
            None => return Err(err()),
        };
        let value: f64 = num.trim().parse().map_err(|_| err())?;
        if !value.is_finite() {
            return Err(err());
        }
        match unit {
            "d" => Ok(Duration::from_days(value)),
            "mo" => Ok(Duration::from_months(value)),
            "y" => Ok(Duration::from_years(value)),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // f64 Display is shortest round-trip, so parse(to_string(d)) == d.
        write!(f, "{}y", self.years)
    }
}

impl Serialize for Duration {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Duration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_unit_suffixes() {
        assert_eq!("2y".parse::<Duration>().unwrap().years(), 2.0);
        assert_eq!("6mo".parse::<Duration>().unwrap().years(), 0.5);
        assert_eq!("1d".parse::<Duration>().unwrap().years(), 1.0 / 365.0);
        assert_eq!("0.5 y".parse::<Duration>().unwrap().years(), 0.5);
    }

    #[test]
    fn rejects_garbage() {
        assert!("".parse::<Duration>().is_err());
        assert!("1w".parse::<Duration>().is_err());
        assert!("y".parse::<Duration>().is_err());
        assert!("1".parse::<Duration>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["1d", "6mo", "2y", "0.123y"] {
            let d: Duration = s.parse().unwrap();
            let back: Duration = d.to_string().parse().unwrap();
            assert_eq!(d, back);
        }
    }
}

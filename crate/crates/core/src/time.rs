//! Fixed-point simulation clock.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

use thiserror::Error;

/// A point on (or span of) the simulation time axis, in integer microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond. Negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime::ZERO;
        }
        SimTime((s * 1e6).round() as u64)
    }

    /// Smallest representable time not earlier than `s` seconds.
    pub fn from_secs_f64_ceil(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime::ZERO;
        }
        SimTime((s * 1e6).ceil() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn checked_sub(self, other: SimTime) -> Option<SimTime> {
        self.0.checked_sub(other.0).map(SimTime)
    }

    pub fn mul(self, k: u64) -> SimTime {
        SimTime(self.0.saturating_mul(k))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("SimTime underflow"))
    }
}

/// Seconds with exactly six decimals, e.g. `12.000250`.
impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid time `{0}`: expected non-negative decimal seconds")]
pub struct ParseTimeError(pub String);

/// Parses decimal seconds exactly (no float round-trip). Digits past the
/// sixth decimal are rounded half-up.
impl FromStr for SimTime {
    type Err = ParseTimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTimeError(s.to_string());
        let t = s.trim();
        let t = t.strip_prefix('+').unwrap_or(t);
        let (int, frac) = match t.split_once('.') {
            Some((i, f)) => (i, f),
            None => (t, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(err());
        }
        if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let whole: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| err())? };
        let mut micros: u64 = 0;
        let digits = frac.as_bytes();
        for i in 0..6 {
            micros = micros * 10 + digits.get(i).map_or(0, |d| u64::from(d - b'0'));
        }
        if digits.get(6).is_some_and(|d| *d >= b'5') {
            micros += 1;
        }
        whole
            .checked_mul(1_000_000)
            .and_then(|w| w.checked_add(micros))
            .map(SimTime)
            .ok_or_else(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_exact_decimal() {
        assert_eq!("0".parse::<SimTime>().unwrap(), SimTime::ZERO);
        assert_eq!("5.0".parse::<SimTime>().unwrap(), SimTime::from_secs(5));
        assert_eq!("0.000013".parse::<SimTime>().unwrap(), SimTime::from_micros(13));
        assert_eq!("1.2345675".parse::<SimTime>().unwrap(), SimTime::from_micros(1_234_568));
        assert_eq!(".5".parse::<SimTime>().unwrap(), SimTime::from_millis(500));
        assert!("-1.0".parse::<SimTime>().is_err());
        assert!("1e3".parse::<SimTime>().is_err());
        assert!("".parse::<SimTime>().is_err());
        assert!(".".parse::<SimTime>().is_err());
    }

    #[test]
    fn display_round_trips() {
        let t = SimTime::from_micros(40_000_013);
        assert_eq!(t.to_string(), "40.000013");
        assert_eq!(t.to_string().parse::<SimTime>().unwrap(), t);
    }

    #[test]
    fn slot_time_is_exact() {
        let slot = SimTime::from_micros(13);
        assert_eq!(slot.mul(1023).as_micros(), 13_299);
    }
}

//! Fixed-resolution time.
//!
//! Every schedule quantity is an integer count of 100 ns ticks, so 0.1 μs is
//! the finest offset or slice boundary anywhere in the toolchain. Values are
//! reported in microseconds.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Rem, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of ticks per microsecond.
pub const TICKS_PER_US: i64 = 10;

/// A point in time or a duration, in 100 ns ticks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Time(i64);

impl Time {
    pub const ZERO: Time = Time(0);
    /// One grid step (0.1 μs).
    pub const TICK: Time = Time(1);

    pub const fn from_ticks(ticks: i64) -> Self {
        Time(ticks)
    }

    pub const fn from_us(us: i64) -> Self {
        Time(us * TICKS_PER_US)
    }

    pub const fn from_ms(ms: i64) -> Self {
        Time(ms * 1000 * TICKS_PER_US)
    }

    /// Rounds up to the next tick.
    pub fn from_us_ceil(us: f64) -> Self {
        // Guard against representation noise such as 1166.7000000000001.
        Time(((us * TICKS_PER_US as f64) - 1e-6).ceil() as i64)
    }

    /// Nearest tick.
    pub fn from_us_round(us: f64) -> Self {
        Time((us * TICKS_PER_US as f64).round() as i64)
    }

    pub const fn ticks(self) -> i64 {
        self.0
    }

    pub fn as_us(self) -> f64 {
        self.0 as f64 / TICKS_PER_US as f64
    }

    pub fn is_whole_us(self) -> bool {
        self.0 % TICKS_PER_US == 0
    }

    pub fn max(self, other: Time) -> Time {
        Time(self.0.max(other.0))
    }

    pub fn min(self, other: Time) -> Time {
        Time(self.0.min(other.0))
    }

    pub fn rem_euclid(self, modulus: Time) -> Time {
        Time(self.0.rem_euclid(modulus.0))
    }

    /// Floor division by another duration.
    pub fn div_floor(self, other: Time) -> i64 {
        self.0.div_euclid(other.0)
    }

    pub fn ratio(self, other: Time) -> f64 {
        self.0 as f64 / other.0 as f64
    }
}

impl fmt::Display for Time {
    /// Compact DSL form: `10ms`, `56us`, `73.6us`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 != 0 && self.0 % (1000 * TICKS_PER_US) == 0 {
            write!(f, "{}ms", self.0 / (1000 * TICKS_PER_US))
        } else if self.is_whole_us() {
            write!(f, "{}us", self.0 / TICKS_PER_US)
        } else {
            write!(f, "{}us", self.as_us())
        }
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl AddAssign for Time {
    fn add_assign(&mut self, rhs: Time) {
        self.0 += rhs.0;
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl SubAssign for Time {
    fn sub_assign(&mut self, rhs: Time) {
        self.0 -= rhs.0;
    }
}

impl Neg for Time {
    type Output = Time;
    fn neg(self) -> Time {
        Time(-self.0)
    }
}

impl Mul<i64> for Time {
    type Output = Time;
    fn mul(self, rhs: i64) -> Time {
        Time(self.0 * rhs)
    }
}

impl Div<i64> for Time {
    type Output = Time;
    fn div(self, rhs: i64) -> Time {
        Time(self.0 / rhs)
    }
}

impl Rem for Time {
    type Output = Time;
    fn rem(self, rhs: Time) -> Time {
        Time(self.0 % rhs.0)
    }
}

impl Sum for Time {
    fn sum<I: Iterator<Item = Time>>(iter: I) -> Time {
        Time(iter.map(|t| t.0).sum())
    }
}

/// Serialized as microseconds; whole values are written as integers so that
/// reports read `60` rather than `60.0`.
impl Serialize for Time {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.is_whole_us() {
            serializer.serialize_i64(self.0 / TICKS_PER_US)
        } else {
            serializer.serialize_f64(self.as_us())
        }
    }
}

impl<'de> Deserialize<'de> for Time {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let us = f64::deserialize(deserializer)?;
        Ok(Time::from_us_round(us))
    }
}

/// Merges possibly overlapping half-open intervals into a sorted, disjoint list.
pub fn merge_intervals(mut intervals: Vec<(Time, Time)>) -> Vec<(Time, Time)> {
    intervals.retain(|(s, e)| s < e);
    intervals.sort();
    let mut out: Vec<(Time, Time)> = Vec::with_capacity(intervals.len());
    for (s, e) in intervals {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

/// Complement of sorted, disjoint `busy` intervals within `[lo, hi)`.
pub fn complement(busy: &[(Time, Time)], lo: Time, hi: Time) -> Vec<(Time, Time)> {
    let mut out = Vec::new();
    let mut cursor = lo;
    for &(s, e) in busy {
        if e <= cursor {
            continue;
        }
        if s >= hi {
            break;
        }
        if s > cursor {
            out.push((cursor, s.min(hi)));
        }
        cursor = cursor.max(e);
    }
    if cursor < hi {
        out.push((cursor, hi));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_picks_unit() {
        assert_eq!(Time::from_ms(10).to_string(), "10ms");
        assert_eq!(Time::from_us(56).to_string(), "56us");
        assert_eq!(Time::from_ticks(736).to_string(), "73.6us");
        assert_eq!(Time::ZERO.to_string(), "0us");
    }

    #[test]
    fn ceil_ignores_float_noise() {
        assert_eq!(Time::from_us_ceil(1_166.7), Time::from_ticks(11667));
        assert_eq!(Time::from_us_ceil(1166.6666666), Time::from_ticks(11667));
        assert_eq!(Time::from_us_ceil(1106.25), Time::from_ticks(11063));
    }

    #[test]
    fn serializes_as_micros() {
        assert_eq!(serde_json::to_string(&Time::from_us(60)).unwrap(), "60");
        assert_eq!(
            serde_json::to_string(&Time::from_ticks(736)).unwrap(),
            "73.6"
        );
        let t: Time = serde_json::from_str("73.6").unwrap();
        assert_eq!(t, Time::from_ticks(736));
    }

    #[test]
    fn complement_of_slices() {
        let us = Time::from_us;
        let busy = vec![(us(0), us(3)), (us(5), us(8))];
        assert_eq!(
            complement(&busy, us(0), us(10)),
            vec![(us(3), us(5)), (us(8), us(10))]
        );
        assert_eq!(complement(&[], us(0), us(10)), vec![(us(0), us(10))]);
        assert!(complement(&[(us(0), us(10))], us(0), us(10)).is_empty());
    }

    #[test]
    fn merge_overlapping() {
        let us = Time::from_us;
        let merged = merge_intervals(vec![
            (us(5), us(7)),
            (us(0), us(2)),
            (us(1), us(3)),
            (us(3), us(4)),
        ]);
        assert_eq!(merged, vec![(us(0), us(4)), (us(5), us(7))]);
    }
}

//! Real intervals with independently open or closed ends.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::taskdl::fmt_num;

/// An interval of the real line. Infinite ends are always stored as open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Interval {
    pub fn new(lo: f64, hi: f64, lo_open: bool, hi_open: bool) -> Self {
        Interval {
            lo,
            hi,
            lo_open: lo_open || lo.is_infinite(),
            hi_open: hi_open || hi.is_infinite(),
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, false, false)
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, true, true)
    }

    pub fn unbounded() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY, true, true)
    }

    /// `x > lo`
    pub fn above(lo: f64) -> Self {
        Self::new(lo, f64::INFINITY, true, true)
    }

    /// `x >= lo`
    pub fn at_least(lo: f64) -> Self {
        Self::new(lo, f64::INFINITY, false, true)
    }

    /// `x < hi`
    pub fn below(hi: f64) -> Self {
        Self::new(f64::NEG_INFINITY, hi, true, true)
    }

    /// `x <= hi`
    pub fn at_most(hi: f64) -> Self {
        Self::new(f64::NEG_INFINITY, hi, true, false)
    }

    /// `x ~ center +- tol`, i.e. `[center - tol, center + tol]`.
    pub fn around(center: f64, tol: f64) -> Self {
        Self::closed(center - tol, center + tol)
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    /// True when the interval has non-zero length (`lo < hi`).
    pub fn is_proper(&self) -> bool {
        self.lo < self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_open { x > self.lo } else { x >= self.lo };
        let below = if self.hi_open { x < self.hi } else { x <= self.hi };
        above && below
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        if self.is_empty() {
            return true;
        }
        let lo_ok = self.lo > other.lo || (self.lo == other.lo && (self.lo_open || !other.lo_open));
        let hi_ok = self.hi < other.hi || (self.hi == other.hi && (self.hi_open || !other.hi_open));
        lo_ok && hi_ok
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_open) = if self.lo > other.lo {
            (self.lo, self.lo_open)
        } else if other.lo > self.lo {
            (other.lo, other.lo_open)
        } else {
            (self.lo, self.lo_open || other.lo_open)
        };
        let (hi, hi_open) = if self.hi < other.hi {
            (self.hi, self.hi_open)
        } else if other.hi < self.hi {
            (other.hi, other.hi_open)
        } else {
            (self.hi, self.hi_open || other.hi_open)
        };
        Interval::new(lo, hi, lo_open, hi_open)
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        !self.intersect(other).is_empty()
    }

    /// Clamps `x` into the closure of the interval.
    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_open { '(' } else { '[' },
            fmt_bound(self.lo),
            fmt_bound(self.hi),
            if self.hi_open { ')' } else { ']' }
        )
    }
}

fn fmt_bound(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        fmt_num(x)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("malformed interval `{0}`")]
pub struct IntervalParseError(String);

impl FromStr for Interval {
    type Err = IntervalParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || IntervalParseError(s.to_string());
        let t = s.trim();
        let lo_open = match t.chars().next() {
            Some('(') => true,
            Some('[') => false,
            _ => return Err(err()),
        };
        let hi_open = match t.chars().last() {
            Some(')') => true,
            Some(']') => false,
            _ => return Err(err()),
        };
        let inner = &t[1..t.len() - 1];
        let (a, b) = inner.split_once(',').ok_or_else(err)?;
        let parse = |p: &str| -> Result<f64, IntervalParseError> {
            match p.trim() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => other
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(err),
            }
        };
        let iv = Interval::new(parse(a)?, parse(b)?, lo_open, hi_open);
        if iv.lo > iv.hi {
            return Err(err());
        }
        Ok(iv)
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_respects_open_ends() {
        let iv = Interval::above(10.0);
        assert!(!iv.contains(10.0));
        assert!(iv.contains(10.2));
        assert!(Interval::closed(0.0, 10.0).contains(10.0));
        assert!(!Interval::closed(0.0, 10.0).contains(11.0));
    }

    #[test]
    fn subset_and_intersection() {
        let d = Interval::at_least(0.0);
        assert!(Interval::above(10.0).is_subset_of(&d));
        assert!(!Interval::below(5.0).is_subset_of(&d));
        assert!(Interval::below(5.0).intersects(&d));
        assert!(!Interval::closed(0.0, 1.0).intersects(&Interval::open(1.0, 2.0)));
        assert!(Interval::closed(0.0, 1.0).intersects(&Interval::closed(1.0, 2.0)));
    }

    #[test]
    fn infinite_ends_are_open() {
        let iv = Interval::new(f64::NEG_INFINITY, 3.0, false, false);
        assert!(iv.lo_open);
        assert_eq!(iv.to_string(), "(-inf, 3]");
    }

    #[test]
    fn text_round_trip() {
        for s in ["(10, inf)", "[0, 10]", "[-2.5, 1e-7)", "(-inf, inf)"] {
            let iv: Interval = s.parse().unwrap();
            assert_eq!(iv.to_string(), s);
        }
        assert!("[3, 1]".parse::<Interval>().is_err());
    }
}

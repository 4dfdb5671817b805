//! Exact half-integers, stored as twice their value.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HalfInt(i64);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);

    pub const fn from_twice(twice: i64) -> Self {
        HalfInt(twice)
    }

    pub const fn from_int(n: i64) -> Self {
        HalfInt(2 * n)
    }

    pub const fn twice(self) -> i64 {
        self.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn to_integer(self) -> Option<i64> {
        self.is_integer().then_some(self.0 / 2)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// Rounds `x` to the nearest half-integer, returning the rounding error too.
    pub fn nearest(x: f64) -> (Self, f64) {
        let t = (2.0 * x).round();
        (HalfInt(t as i64), (x - t / 2.0).abs())
    }
}

impl Add for HalfInt {
    type Output = HalfInt;
    fn add(self, o: HalfInt) -> HalfInt {
        HalfInt(self.0 + o.0)
    }
}

impl Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, o: HalfInt) -> HalfInt {
        HalfInt(self.0 - o.0)
    }
}

impl Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl std::iter::Sum for HalfInt {
    fn sum<I: Iterator<Item = HalfInt>>(iter: I) -> HalfInt {
        iter.fold(HalfInt::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("not a half-integer: {0:?}")]
pub struct ParseHalfIntError(String);

impl FromStr for HalfInt {
    type Err = ParseHalfIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseHalfIntError(s.to_string());
        match s.trim().split_once('/') {
            None => s.trim().parse::<i64>().map(HalfInt::from_int).map_err(|_| err()),
            Some((num, "2")) => {
                let n = num.trim().parse::<i64>().map_err(|_| err())?;
                if n % 2 == 0 {
                    Err(err())
                } else {
                    Ok(HalfInt(n))
                }
            }
            Some(_) => Err(err()),
        }
    }
}

impl Serialize for HalfInt {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        let h = HalfInt::from_twice(7);
        assert_eq!(h.to_string(), "7/2");
        assert_eq!("7/2".parse::<HalfInt>().unwrap(), h);
        assert_eq!(HalfInt::from_int(-3).to_string(), "-3");
        assert_eq!(HalfInt::from_twice(-1).to_string(), "-1/2");
        assert!("4/2".parse::<HalfInt>().is_err());
        assert!("1/3".parse::<HalfInt>().is_err());
    }

    #[test]
    fn json_is_a_string() {
        let v = serde_json::to_string(&HalfInt::from_twice(7)).unwrap();
        assert_eq!(v, "\"7/2\"");
        let back: HalfInt = serde_json::from_str(&v).unwrap();
        assert_eq!(back.twice(), 7);
    }

    #[test]
    fn nearest_rounds() {
        let (h, e) = HalfInt::nearest(3.4999999);
        assert_eq!(h, HalfInt::from_twice(7));
        assert!(e < 1e-6);
    }
}

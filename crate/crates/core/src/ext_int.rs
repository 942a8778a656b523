//! Integers extended with symbolic infinities.
//!
//! Lattice extents and occupancy bounds are "possibly infinite" integers;
//! comparisons between them and finite site indices must be total, so a
//! dedicated enum beats sentinel values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// An integer, or one of the symbolic endpoints -inf / +inf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtInt {
    NegInf,
    Finite(i64),
    PosInf,
}

pub use ExtInt::{Finite, NegInf, PosInf};

impl ExtInt {
    pub fn is_finite(self) -> bool {
        matches!(self, Finite(_))
    }

    /// The finite value, if any.
    pub fn finite(self) -> Option<i64> {
        match self {
            Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Unwraps a value the caller knows to be finite.
    pub fn expect_finite(self, what: &str) -> i64 {
        self.finite().unwrap_or_else(|| panic!("{what} must be finite, got {self}"))
    }

    /// Clamp to a finite range, mapping the infinities to the range ends.
    pub fn clamp_to(self, lo: i64, hi: i64) -> i64 {
        match self {
            NegInf => lo,
            PosInf => hi,
            Finite(v) => v.clamp(lo, hi),
        }
    }
}

impl PartialOrd for ExtInt {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtInt {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Equal,
            (NegInf, _) | (_, PosInf) => Less,
            (_, NegInf) | (PosInf, _) => Greater,
            (Finite(a), Finite(b)) => a.cmp(b),
        }
    }
}

impl PartialEq<i64> for ExtInt {
    fn eq(&self, other: &i64) -> bool {
        self.finite() == Some(*other)
    }
}

impl PartialOrd<i64> for ExtInt {
    fn partial_cmp(&self, other: &i64) -> Option<std::cmp::Ordering> {
        Some(self.cmp(&Finite(*other)))
    }
}

impl From<i64> for ExtInt {
    fn from(v: i64) -> Self {
        Finite(v)
    }
}

impl std::ops::Add<i64> for ExtInt {
    type Output = ExtInt;
    fn add(self, rhs: i64) -> ExtInt {
        match self {
            Finite(v) => Finite(v + rhs),
            inf => inf,
        }
    }
}

impl std::ops::Sub<i64> for ExtInt {
    type Output = ExtInt;
    fn sub(self, rhs: i64) -> ExtInt {
        self + (-rhs)
    }
}

impl fmt::Display for ExtInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NegInf => write!(f, "-inf"),
            PosInf => write!(f, "inf"),
            Finite(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for ExtInt {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "-inf" | "-Inf" | "-INF" => Ok(NegInf),
            "inf" | "Inf" | "INF" | "+inf" => Ok(PosInf),
            other => other.parse::<i64>().map(Finite).map_err(|e| format!("bad extended integer {other:?}: {e}")),
        }
    }
}

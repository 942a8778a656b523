//! Blocking configurations: windowed encodings of states `z ∈ Ω`.
//!
//! A configuration stores explicit occupancies on a contiguous window and
//! fill values outside it. At an infinite lattice end the fill is pinned to
//! the relevant occupancy bound, which makes membership in `Ω` (finite
//! particle count on the left, finite hole count on the right) automatic.

use std::fmt;

use crate::error::{Error, Result};
use crate::ext_int::{ExtInt, Finite, NegInf, PosInf};
use crate::model::{LatticeSpec, OccupancyInterval};

/// Index of an irreducible sector `Ω^n` on the doubly infinite lattice.
pub type SectorIndex = i64;

#[derive(Debug, Clone)]
pub struct Configuration {
    window_lo: i64,
    window_hi: i64,
    values: Vec<i64>,
    left_fill: i64,
    right_fill: i64,
    lattice: LatticeSpec,
    occupancy: OccupancyInterval,
}

impl Configuration {
    /// Builds a configuration from explicit window values. Fills at infinite
    /// ends must equal the matching occupancy bound; at finite ends the
    /// window is required to cover the whole lattice.
    pub fn new(
        lattice: LatticeSpec,
        occupancy: OccupancyInterval,
        window_lo: i64,
        values: Vec<i64>,
        left_fill: i64,
        right_fill: i64,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Structure("configuration window must be non-empty".into()));
        }
        let window_hi = window_lo + values.len() as i64 - 1;
        for (offset, &v) in values.iter().enumerate() {
            if !occupancy.contains(v) {
                return Err(Error::OutOfAlphabet {
                    value: v,
                    alphabet: format!("site {}", window_lo + offset as i64),
                });
            }
        }
        match lattice.ell {
            NegInf => {
                if occupancy.omega_min != left_fill {
                    return Err(Error::Structure(format!(
                        "left fill {left_fill} must equal omega_min at an infinite left end"
                    )));
                }
            }
            Finite(ell) => {
                if window_lo > ell {
                    return Err(Error::Structure(format!(
                        "window starts at {window_lo} but the lattice starts at {ell}"
                    )));
                }
            }
            PosInf => unreachable!("ell <= 0"),
        }
        match lattice.r {
            PosInf => {
                if occupancy.omega_max != right_fill {
                    return Err(Error::Structure(format!(
                        "right fill {right_fill} must equal omega_max at an infinite right end"
                    )));
                }
            }
            Finite(r) => {
                if window_hi < r {
                    return Err(Error::Structure(format!(
                        "window ends at {window_hi} but the lattice ends at {r}"
                    )));
                }
            }
            NegInf => unreachable!("r >= 0"),
        }
        let mut config =
            Self { window_lo, window_hi, values, left_fill, right_fill, lattice, occupancy };
        config.clamp_window_to_lattice();
        Ok(config)
    }

    /// The reference ground state: minimal occupancy left of the origin,
    /// maximal to the right (zero where a bound is infinite; such sites only
    /// exist next to a finite lattice end, where the choice is just a
    /// reference point).
    pub fn ground(lattice: LatticeSpec, occupancy: OccupancyInterval) -> Self {
        let left_fill = occupancy.omega_min.finite().unwrap_or(0);
        let right_fill = occupancy.omega_max.finite().unwrap_or(0);
        let window_lo = match lattice.ell {
            Finite(e) => e,
            _ => 0,
        };
        let window_hi = match lattice.r {
            Finite(r) => r,
            _ => 1,
        }
        .max(window_lo);
        let values = (window_lo..=window_hi)
            .map(|i| if i <= 0 { left_fill } else { right_fill })
            .collect();
        Self { window_lo, window_hi, values, left_fill, right_fill, lattice, occupancy }
    }

    pub fn lattice(&self) -> LatticeSpec {
        self.lattice
    }

    pub fn occupancy(&self) -> OccupancyInterval {
        self.occupancy
    }

    pub fn window(&self) -> (i64, i64) {
        (self.window_lo, self.window_hi)
    }

    pub fn left_fill(&self) -> i64 {
        self.left_fill
    }

    pub fn right_fill(&self) -> i64 {
        self.right_fill
    }

    /// Occupancy at site `i` (fill-aware). The caller is responsible for
    /// `i ∈ Λ`.
    pub fn get(&self, i: i64) -> i64 {
        if i < self.window_lo {
            self.left_fill
        } else if i > self.window_hi {
            self.right_fill
        } else {
            self.values[(i - self.window_lo) as usize]
        }
    }

    /// Grows the window so that `i` is stored explicitly. Windows never
    /// shrink during a trajectory.
    pub fn ensure_window(&mut self, i: i64) {
        if i < self.window_lo {
            let extra = (self.window_lo - i) as usize;
            let mut new_values = vec![self.left_fill; extra];
            new_values.extend_from_slice(&self.values);
            self.values = new_values;
            self.window_lo = i;
        } else if i > self.window_hi {
            self.values.resize(self.values.len() + (i - self.window_hi) as usize, self.right_fill);
            self.window_hi = i;
        }
    }

    pub(crate) fn set(&mut self, i: i64, v: i64) {
        debug_assert!(self.lattice.contains(i));
        self.ensure_window(i);
        self.values[(i - self.window_lo) as usize] = v;
    }

    fn clamp_window_to_lattice(&mut self) {
        if let Finite(ell) = self.lattice.ell {
            if self.window_lo < ell {
                self.values.drain(..(ell - self.window_lo) as usize);
                self.window_lo = ell;
            }
        }
        if let Finite(r) = self.lattice.r {
            if self.window_hi > r {
                self.values.truncate((r - self.window_lo + 1) as usize);
                self.window_hi = r;
            }
        }
    }

    /// Number of particles left of the origin, `Σ_{i=ℓ}^0 (z_i - ω_min)`.
    /// Infinite when `ω_min = -inf` (possible only for finite `ℓ`).
    pub fn count_particles(&self) -> ExtInt {
        let omin = match self.occupancy.omega_min {
            Finite(v) => v,
            _ => return PosInf,
        };
        // Sites below the window equal the left fill (= omega_min at an
        // infinite end) and contribute nothing.
        let lo = match self.lattice.ell {
            Finite(ell) => ell,
            _ => self.window_lo,
        };
        let mut total = 0;
        let mut i = lo;
        while i <= 0 {
            if self.lattice.contains(i) {
                total += self.get(i) - omin;
            }
            i += 1;
        }
        Finite(total)
    }

    /// Number of holes right of the origin, `Σ_{i=1}^r (ω_max - z_i)`.
    pub fn count_holes(&self) -> ExtInt {
        let omax = match self.occupancy.omega_max {
            Finite(v) => v,
            _ => return PosInf,
        };
        let hi = match self.lattice.r {
            Finite(r) => r,
            _ => self.window_hi,
        };
        let mut total = 0;
        let mut i = 1;
        while i <= hi {
            if self.lattice.contains(i) {
                total += omax - self.get(i);
            }
            i += 1;
        }
        Finite(total)
    }

    /// The conserved quantity `N = N_h - N_p` on the doubly infinite lattice.
    pub fn conserved_n(&self) -> Result<i64> {
        if !self.lattice.doubly_infinite() {
            return Err(Error::VolumeMismatch("a doubly infinite lattice for the conserved N".into()));
        }
        let np = self.count_particles().expect_finite("N_p");
        let nh = self.count_holes().expect_finite("N_h");
        Ok(nh - np)
    }

    /// Applies the jump `z -> z^{i,j}` with `|i - j| = 1`. A virtual index
    /// `ℓ-1` or `r+1` models the reservoir: its occupancy change is
    /// discarded, only the real edge site moves.
    pub fn apply_move(&self, i: i64, j: i64) -> Result<Self> {
        if (i - j).abs() != 1 {
            return Err(Error::IllegalMove { i, j });
        }
        let i_real = self.lattice.contains(i);
        let j_real = self.lattice.contains(j);
        if !i_real && !j_real {
            return Err(Error::IllegalMove { i, j });
        }
        let virtual_ok = |k: i64| {
            self.lattice.contains(k) || self.lattice.ell == k + 1 || self.lattice.r == k - 1
        };
        if !virtual_ok(i) || !virtual_ok(j) {
            return Err(Error::IllegalMove { i, j });
        }
        if i_real && self.occupancy.omega_min == self.get(i) {
            return Err(Error::IllegalMove { i, j });
        }
        if j_real && self.occupancy.omega_max == self.get(j) {
            return Err(Error::IllegalMove { i, j });
        }
        let mut next = self.clone();
        if i_real {
            next.set(i, next.get(i) - 1);
        }
        if j_real {
            next.set(j, next.get(j) + 1);
        }
        Ok(next)
    }

    /// The shift `(τ^j z)_i = z_{i+j}` on the doubly infinite lattice.
    pub fn shift(&self, j: i64) -> Result<Self> {
        if !self.lattice.doubly_infinite() {
            return Err(Error::VolumeMismatch("a doubly infinite lattice for shifts".into()));
        }
        let mut shifted = self.clone();
        shifted.window_lo -= j;
        shifted.window_hi -= j;
        Ok(shifted)
    }

    /// Window bounds with fill-equal edges trimmed off; the canonical
    /// extent of the deviation region.
    pub fn deviation_window(&self) -> Option<(i64, i64)> {
        let mut lo = self.window_lo;
        let mut hi = self.window_hi;
        if !self.lattice.ell.is_finite() {
            while lo <= hi && self.values[(lo - self.window_lo) as usize] == self.left_fill {
                lo += 1;
            }
        }
        if !self.lattice.r.is_finite() {
            while hi >= lo && self.values[(hi - self.window_lo) as usize] == self.right_fill {
                hi -= 1;
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Serializes to the golden-test text form:
    /// `ell r window_lo window_hi v_lo .. v_hi | left_fill right_fill`.
    pub fn to_text(&self) -> String {
        let values: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        format!(
            "{} {} {} {} {} | {} {}",
            self.lattice.ell,
            self.lattice.r,
            self.window_lo,
            self.window_hi,
            values.join(" "),
            self.left_fill,
            self.right_fill
        )
    }

    /// Parses the `to_text` form; `occupancy` supplies the alphabet the
    /// format does not carry.
    pub fn from_text(text: &str, occupancy: OccupancyInterval) -> Result<Self> {
        let (head, fills) = text
            .split_once('|')
            .ok_or_else(|| Error::Parse("configuration text must contain '|'".into()))?;
        let head: Vec<&str> = head.split_whitespace().collect();
        let fills: Vec<&str> = fills.split_whitespace().collect();
        if head.len() < 5 || fills.len() != 2 {
            return Err(Error::Parse(format!("malformed configuration text {text:?}")));
        }
        let ell: ExtInt = head[0].parse().map_err(Error::Parse)?;
        let r: ExtInt = head[1].parse().map_err(Error::Parse)?;
        let window_lo: i64 = head[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let window_hi: i64 = head[3].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let values: Vec<i64> = head[4..]
            .iter()
            .map(|v| v.parse().map_err(|e| Error::Parse(format!("{e}"))))
            .collect::<Result<_>>()?;
        if values.len() as i64 != window_hi - window_lo + 1 {
            return Err(Error::Parse(format!(
                "expected {} window values, got {}",
                window_hi - window_lo + 1,
                values.len()
            )));
        }
        let left_fill: i64 = fills[0].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let right_fill: i64 = fills[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let lattice = LatticeSpec::new(ell, r)?;
        Self::new(lattice, occupancy, window_lo, values, left_fill, right_fill)
    }
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        if self.lattice != other.lattice || self.occupancy != other.occupancy {
            return false;
        }
        let lo = self.window_lo.min(other.window_lo);
        let hi = self.window_hi.max(other.window_hi);
        self.left_fill == other.left_fill
            && self.right_fill == other.right_fill
            && (lo..=hi).all(|i| self.get(i) == other.get(i))
    }
}

impl Eq for Configuration {}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

//! The lay-down / stand-up bijection between stack configurations on the
//! half line `(-inf, 0]` and 0-1 exclusion configurations on the full line.
//!
//! Laying down a stack `z` at level `n` places a leftmost particle at
//! `n - N_p(z) + 1` and turns stack heights (read from site 0 leftwards)
//! into inter-particle gaps. The image is exactly the exclusion sector
//! `{a : N(a) = n}`; standing up inverts by reading gaps back off the
//! particle positions. Each stack move corresponds to a single particle
//! hop, so the two dynamics commute with the transformation.

use crate::error::{Error, Result};
use crate::ext_int::{Finite, NegInf, PosInf};
use crate::model::{LatticeSpec, OccupancyInterval};
use crate::state::{Configuration, SectorIndex};

/// Lattice and alphabet of the laid-down process.
pub fn exclusion_shape() -> (LatticeSpec, OccupancyInterval) {
    (
        LatticeSpec::new(NegInf, PosInf).unwrap(),
        OccupancyInterval::new(Finite(0), Finite(1)).unwrap(),
    )
}

/// Lattice and alphabet of the stack process.
pub fn stack_shape() -> (LatticeSpec, OccupancyInterval) {
    (
        LatticeSpec::new(NegInf, Finite(0)).unwrap(),
        OccupancyInterval::new(Finite(0), PosInf).unwrap(),
    )
}

fn check_stack(z: &Configuration) -> Result<()> {
    let (lattice, occupancy) = stack_shape();
    if z.lattice() != lattice || z.occupancy() != occupancy {
        return Err(Error::VolumeMismatch(
            "a stack configuration on (-inf, 0] with occupancies in [0, inf)".into(),
        ));
    }
    Ok(())
}

fn check_exclusion(a: &Configuration) -> Result<()> {
    let (lattice, occupancy) = exclusion_shape();
    if a.lattice() != lattice || a.occupancy() != occupancy {
        return Err(Error::VolumeMismatch(
            "a 0-1 exclusion configuration on the full line".into(),
        ));
    }
    Ok(())
}

/// Particle positions `r_0 < r_1 < ...` of the laid-down configuration:
/// `r_0 = n - N_p(z) + 1`, `r_{i+1} = r_i + z_{-i} + 1`. Only the positions
/// up to the stack's stored window are returned; beyond them the gaps are
/// zero and the occupation is solid.
pub fn particle_positions(z: &Configuration, n: SectorIndex) -> Result<Vec<i64>> {
    check_stack(z)?;
    let np = z.count_particles().expect_finite("left particle count");
    let (wlo, _) = z.window();
    let mut positions = Vec::with_capacity((1 - wlo) as usize);
    let mut pos = n - np + 1;
    for i in 0..=(-wlo) {
        positions.push(pos);
        pos += z.get(-i) + 1;
    }
    // All deeper gaps are zero, so the occupation is solid from here; one
    // more position closes the last stored gap.
    positions.push(pos);
    Ok(positions)
}

/// The lay-down map into the exclusion sector `{a : N(a) = n}`.
pub fn lay_down(z: &Configuration, n: SectorIndex) -> Result<Configuration> {
    let positions = particle_positions(z, n)?;
    let window_lo = positions[0];
    let window_hi = *positions.last().unwrap();
    let mut values = vec![0i64; (window_hi - window_lo + 1) as usize];
    for &r in &positions {
        values[(r - window_lo) as usize] = 1;
    }
    let (lattice, occupancy) = exclusion_shape();
    Configuration::new(lattice, occupancy, window_lo, values, 0, 1)
}

/// The stand-up map: recovers the stack configuration and the sector index
/// `n = N(a)` of the exclusion configuration it was laid down at.
pub fn stand_up(a: &Configuration) -> Result<(Configuration, SectorIndex)> {
    check_exclusion(a)?;
    let n = a.conserved_n()?;
    let (wlo, whi) = a.window();
    let mut positions: Vec<i64> = (wlo..=whi).filter(|&k| a.get(k) == 1).collect();
    // Right of the window the occupation is solid; one sentinel closes the
    // last stored gap, the rest are zero and land in the fill.
    positions.push(whi + 1);
    let gaps = positions.len() - 1;
    let (lattice, occupancy) = stack_shape();
    if gaps == 0 {
        return Ok((Configuration::new(lattice, occupancy, 0, vec![0], 0, 0)?, n));
    }
    let mut values = vec![0i64; gaps];
    for i in 0..gaps {
        // z_{-i} = R_{i+1} - R_i - 1, stored at window offset gaps - 1 - i.
        values[gaps - 1 - i] = positions[i + 1] - positions[i] - 1;
    }
    Ok((Configuration::new(lattice, occupancy, 1 - gaps as i64, values, 0, 0)?, n))
}

/// Translates a stack move into the exclusion hop it induces under
/// lay-down at level `n`: the bulk move `(-i, -i+1)` advances the `i`-th
/// particle (`r_i -> r_i + 1`), its reverse retreats it, and the reservoir
/// exchanges `(0, 1)` / `(1, 0)` drive the leftmost particle `r_0`.
pub fn transfer_move(
    z: &Configuration,
    n: SectorIndex,
    from: i64,
    to: i64,
) -> Result<(i64, i64)> {
    check_stack(z)?;
    if (from - to).abs() != 1 || from.max(to) > 1 {
        return Err(Error::IllegalMove { i: from, j: to });
    }
    let i = -from.min(to);
    let np = z.count_particles().expect_finite("left particle count");
    let mut r_i = n - np + 1;
    for k in 0..i {
        r_i += z.get(-k) + 1;
    }
    Ok(if to > from { (r_i, r_i + 1) } else { (r_i, r_i - 1) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(values_right_to_left: &[i64]) -> Configuration {
        // values given as z_0, z_{-1}, z_{-2}, ...
        let (lattice, occupancy) = stack_shape();
        let mut stored: Vec<i64> = values_right_to_left.to_vec();
        stored.reverse();
        let window_lo = 1 - stored.len() as i64;
        Configuration::new(lattice, occupancy, window_lo, stored, 0, 0).unwrap()
    }

    #[test]
    fn positions_follow_the_gap_recursion() {
        // z_0 = 2, z_{-1} = 0, z_{-2} = 0, z_{-3} = 1, z_{-4} = 0, z_{-5} = 1.
        let z = stack(&[2, 0, 0, 1, 0, 1]);
        let n = 4; // N_p = 4, so r_0 = 1
        let positions = particle_positions(&z, n).unwrap();
        assert_eq!(positions, vec![1, 4, 5, 6, 8, 9, 11]);
        let a = lay_down(&z, n).unwrap();
        assert_eq!(a.conserved_n().unwrap(), n);
        for k in [1, 4, 5, 6, 8, 9, 11, 12, 13, 40] {
            assert_eq!(a.get(k), 1, "site {k}");
        }
        for k in [-5, 0, 2, 3, 7, 10] {
            assert_eq!(a.get(k), 0, "site {k}");
        }
    }

    #[test]
    fn ground_stack_lays_down_to_the_ground_state() {
        let z = stack(&[0]);
        let a = lay_down(&z, 0).unwrap();
        let (lattice, occupancy) = exclusion_shape();
        assert_eq!(a, Configuration::ground(lattice, occupancy));
        assert_eq!(a.conserved_n().unwrap(), 0);
    }

    #[test]
    fn stand_up_inverts_lay_down() {
        for n in [-3i64, 0, 2, 7] {
            for z in [
                stack(&[0]),
                stack(&[2, 0, 0, 1, 0, 1]),
                stack(&[5]),
                stack(&[0, 0, 3, 0, 0, 0, 1]),
            ] {
                let a = lay_down(&z, n).unwrap();
                let (back, m) = stand_up(&a).unwrap();
                assert_eq!(m, n);
                assert_eq!(back, z);
            }
        }
    }

    #[test]
    fn lay_down_inverts_stand_up() {
        let (lattice, occupancy) = exclusion_shape();
        let a = Configuration::new(
            lattice,
            occupancy,
            -3,
            vec![0, 1, 0, 0, 1, 1, 0, 1],
            0,
            1,
        )
        .unwrap();
        let (z, n) = stand_up(&a).unwrap();
        assert_eq!(lay_down(&z, n).unwrap(), a);
    }

    #[test]
    fn bulk_move_commutes_with_lay_down() {
        let z = stack(&[2, 0, 0, 1, 0, 1]);
        let n = 4;
        // the move z -> z^{-3,-2} advances r_3
        let (from, to) = transfer_move(&z, n, -3, -2).unwrap();
        assert_eq!((from, to), (6, 7));
        let moved = lay_down(&z.apply_move(-3, -2).unwrap(), n).unwrap();
        let hopped = lay_down(&z, n).unwrap().apply_move(from, to).unwrap();
        assert_eq!(moved, hopped);
    }

    #[test]
    fn reservoir_moves_drive_the_leftmost_particle() {
        let z = stack(&[2, 0, 0, 1, 0, 1]);
        let n = 4;
        assert_eq!(transfer_move(&z, n, 0, 1).unwrap(), (1, 2));
        assert_eq!(transfer_move(&z, n, 1, 0).unwrap(), (1, 0));
        let out = lay_down(&z.apply_move(0, 1).unwrap(), n).unwrap();
        assert_eq!(out, lay_down(&z, n).unwrap().apply_move(1, 2).unwrap());
        let inn = lay_down(&z.apply_move(1, 0).unwrap(), n).unwrap();
        assert_eq!(inn, lay_down(&z, n).unwrap().apply_move(1, 0).unwrap());
    }

    #[test]
    fn moves_outside_the_half_line_are_rejected() {
        let z = stack(&[1]);
        assert!(transfer_move(&z, 0, 1, 2).is_err());
        assert!(transfer_move(&z, 0, 0, 2).is_err());
    }
}

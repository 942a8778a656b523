//! Event-driven continuous-time simulation (Gillespie direct method).
//!
//! Rates live in a Fenwick tree indexed by bond and direction, so drawing
//! the next event is `O(log B)` and an executed move touches only the
//! three bonds around it. Incremental updates are audited against a full
//! rebuild on roughly one percent of the events.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ext_int::Finite;
use crate::model::ModelSpec;
use crate::scalar::{lit, Scalar};
use crate::state::Configuration;

/// Cumulative-sum tree over non-negative slot values.
pub struct FenwickTree<T: Scalar> {
    tree: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> FenwickTree<T> {
    pub fn new(n: usize) -> Self {
        Self { tree: vec![T::zero(); n + 1], values: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> T {
        self.values[i]
    }

    pub fn set(&mut self, i: usize, v: T) {
        let delta = v - self.values[i];
        self.values[i] = v;
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    pub fn total(&self) -> T {
        self.prefix(self.values.len())
    }

    fn prefix(&self, mut k: usize) -> T {
        let mut sum = T::zero();
        while k > 0 {
            sum += self.tree[k];
            k -= k & k.wrapping_neg();
        }
        sum
    }

    /// Smallest `i` with `prefix(i+1) > u`. The caller guarantees
    /// `0 <= u < total()`.
    pub fn select(&self, mut u: T) -> usize {
        let mut pos = 0usize;
        let mut step = self.tree.len().next_power_of_two() >> 1;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= u {
                u -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos.min(self.values.len() - 1)
    }

    /// Recomputes the cumulative structure from the stored slot values.
    pub fn rebuild(&mut self) {
        for t in &mut self.tree {
            *t = T::zero();
        }
        let values = self.values.clone();
        for (i, v) in values.into_iter().enumerate() {
            self.values[i] = T::zero();
            self.set(i, v);
        }
    }
}

/// One executed transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event<T> {
    pub time: T,
    pub from: i64,
    pub to: i64,
}

/// A running realization of the process. Sites in
/// `[alloc_lo, alloc_hi] ⊆ Λ` are simulated explicitly; an attempted move
/// across an edge adjoining an infinite lattice end is a hard-cap error
/// rather than a silent bias.
pub struct Simulation<T: Scalar> {
    spec: ModelSpec<T>,
    config: Configuration,
    alloc_lo: i64,
    alloc_hi: i64,
    tree: FenwickTree<T>,
    time: T,
    events: u64,
    audit_failures: u64,
    audit_every: u64,
}

impl<T: Scalar> Simulation<T> {
    /// Starts from `initial`, allocating `margin` extra sites beyond its
    /// window on each infinite lattice end.
    pub fn new(spec: &ModelSpec<T>, initial: Configuration, margin: i64) -> Result<Self> {
        if initial.lattice() != spec.lattice || initial.occupancy() != spec.occupancy {
            return Err(Error::VolumeMismatch("a configuration of the model's volume".into()));
        }
        let (wlo, whi) = initial.window();
        let alloc_lo = match spec.lattice.ell {
            Finite(ell) => ell,
            _ => wlo - margin,
        };
        let alloc_hi = match spec.lattice.r {
            Finite(r) => r,
            _ => whi + margin,
        };
        let bonds = (alloc_hi - alloc_lo + 2) as usize;
        let mut sim = Self {
            spec: spec.clone(),
            config: initial,
            alloc_lo,
            alloc_hi,
            tree: FenwickTree::new(2 * bonds),
            time: T::zero(),
            events: 0,
            audit_failures: 0,
            audit_every: 128,
        };
        for b in sim.bond_range() {
            sim.refresh_bond(b);
        }
        Ok(sim)
    }

    fn bond_range(&self) -> std::ops::RangeInclusive<i64> {
        (self.alloc_lo - 1)..=self.alloc_hi
    }

    /// Rates `(right hop, left hop)` across the bond `(b, b+1)`.
    fn bond_rates(&self, b: i64) -> (T, T) {
        if let Finite(ell) = self.spec.lattice.ell {
            if b == ell - 1 {
                let bnd = self.spec.left.as_ref().unwrap();
                let z = self.config.get(ell);
                return ((bnd.p_ell)(z), (bnd.q_ell)(z));
            }
        }
        if let Finite(r) = self.spec.lattice.r {
            if b == r {
                let bnd = self.spec.right.as_ref().unwrap();
                let z = self.config.get(r);
                // p_r ejects from site r (a right hop), q_r injects.
                return ((bnd.p_r)(z), (bnd.q_r)(z));
            }
        }
        let (y, z) = (self.config.get(b), self.config.get(b + 1));
        (self.spec.bulk_p(y, z), self.spec.bulk_q(y, z))
    }

    fn slot(&self, b: i64) -> usize {
        2 * (b - (self.alloc_lo - 1)) as usize
    }

    fn refresh_bond(&mut self, b: i64) {
        if !self.bond_range().contains(&b) {
            return;
        }
        let (p, q) = self.bond_rates(b);
        let s = self.slot(b);
        self.tree.set(s, p);
        self.tree.set(s + 1, q);
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Audits that failed the incremental-vs-rebuilt comparison; stays 0
    /// in a healthy run.
    pub fn audit_failures(&self) -> u64 {
        self.audit_failures
    }

    pub fn total_rate(&self) -> T {
        self.tree.total()
    }

    /// Executes one event: exponential waiting time at the total rate,
    /// then an inverse-transform draw on the rate tree.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Event<T>> {
        let total = self.tree.total();
        if !(total > T::zero()) {
            return Err(Error::Structure("no active transitions; the state is absorbing".into()));
        }
        let u1: T = lit(rng.gen::<f64>());
        let dt = -(T::one() - u1).ln() / total;
        let u2 = lit::<T>(rng.gen::<f64>()) * total;
        let slot = self.tree.select(u2);
        let b = self.alloc_lo - 1 + (slot / 2) as i64;
        let (from, to) = if slot % 2 == 0 { (b, b + 1) } else { (b + 1, b) };

        // A hop across the allocation edge at an infinite lattice end
        // cannot be represented.
        for site in [from, to] {
            if self.spec.lattice.contains(site) && (site < self.alloc_lo || site > self.alloc_hi) {
                return Err(Error::WindowCapExceeded {
                    cap: (self.alloc_hi - self.alloc_lo + 1) as usize,
                });
            }
        }
        for (site, delta) in [(from, -1), (to, 1)] {
            if self.spec.lattice.contains(site) {
                let v = self.config.get(site) + delta;
                debug_assert!(self.spec.occupancy.contains(v), "rate was positive for an illegal move");
                self.config.set(site, v);
            }
        }
        for bb in (b - 1)..=(b + 1) {
            self.refresh_bond(bb);
        }
        self.time += dt;
        self.events += 1;
        if self.events % self.audit_every == 0 {
            self.audit();
        }
        Ok(Event { time: self.time, from, to })
    }

    /// Runs `count` events, invoking the observer after each.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        count: u64,
        rng: &mut R,
        mut observer: impl FnMut(&Configuration, Event<T>),
    ) -> Result<()> {
        for _ in 0..count {
            let event = self.step(rng)?;
            observer(&self.config, event);
        }
        Ok(())
    }

    /// Recomputes every bond rate from the configuration and compares with
    /// the incrementally maintained tree; repairs and counts mismatches.
    pub fn audit(&mut self) {
        let tol = lit::<T>(1e-9) * (T::one() + self.tree.total().abs());
        let mut dirty = false;
        for b in self.bond_range() {
            let (p, q) = self.bond_rates(b);
            let s = self.slot(b);
            if (self.tree.get(s) - p).abs() > tol || (self.tree.get(s + 1) - q).abs() > tol {
                dirty = true;
            }
            self.tree.set(s, p);
            self.tree.set(s + 1, q);
        }
        self.tree.rebuild();
        if dirty {
            self.audit_failures += 1;
        }
    }
}

/// Per-site comparison of time-averaged occupations against the exact
/// marginal means, across independent replicas.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DriftReport {
    pub sites: Vec<i64>,
    pub observed: Vec<f64>,
    pub exact: Vec<f64>,
    /// Three standard errors of the replica mean, per site.
    pub band: Vec<f64>,
    pub pass: bool,
}

/// Starts `n_samples` replicas from exact blocking samples, discards
/// `t_burn` of simulated time, then time-averages the occupation of every
/// site in `sites` over `t_measure`. The exact marginal means must sit
/// within three standard errors of the replica average.
pub fn stationarity_drift<T: Scalar>(
    spec: &ModelSpec<T>,
    c: T,
    n_samples: u64,
    t_burn: f64,
    t_measure: f64,
    seed: u64,
    sites: (i64, i64),
) -> Result<DriftReport> {
    use crate::measures::{sample_blocking, theta_sequence, MarginalLaw};
    use rand::SeedableRng;

    let (site_lo, site_hi) = sites;
    let width = (site_hi - site_lo + 1) as usize;
    let mut replica_means: Vec<Vec<f64>> = Vec::with_capacity(n_samples as usize);
    for k in 0..n_samples {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(k);
        let initial = sample_blocking(spec, c, lit(1e-12), &mut rng)?;
        let mut sim = Simulation::new(spec, initial, 40)?;
        let mut acc = vec![0.0f64; width];
        let t_end = t_burn + t_measure;
        loop {
            let t0 = sim.time().to_f64().unwrap();
            if t0 >= t_end {
                break;
            }
            let snapshot: Vec<i64> = (site_lo..=site_hi).map(|i| sim.config().get(i)).collect();
            let t1 = match sim.step(&mut rng) {
                Ok(event) => event.time.to_f64().unwrap().min(t_end),
                Err(Error::Structure(_)) => t_end, // absorbing: occupation frozen
                Err(e) => return Err(e),
            };
            let weight = (t1 - t0.max(t_burn)).max(0.0);
            if weight > 0.0 {
                for (a, &v) in acc.iter_mut().zip(&snapshot) {
                    *a += weight * v as f64;
                }
            }
            if t1 >= t_end {
                break;
            }
        }
        for a in &mut acc {
            *a /= t_measure;
        }
        replica_means.push(acc);
    }

    let mut observed = vec![0.0f64; width];
    for replica in &replica_means {
        for (o, v) in observed.iter_mut().zip(replica) {
            *o += v;
        }
    }
    for o in &mut observed {
        *o /= n_samples as f64;
    }
    let mut band = vec![0.0f64; width];
    for (j, b) in band.iter_mut().enumerate() {
        let var: f64 = replica_means
            .iter()
            .map(|r| (r[j] - observed[j]).powi(2))
            .sum::<f64>()
            / (n_samples.saturating_sub(1).max(1) as f64);
        // floor guards against degenerate zero-variance sites
        *b = 3.0 * (var / n_samples as f64).sqrt() + 1e-9;
    }

    let mut exact = Vec::with_capacity(width);
    for i in site_lo..=site_hi {
        let law = MarginalLaw::new(spec, theta_sequence(spec, c, i)?)?;
        exact.push(law.mean().to_f64().unwrap());
    }
    let pass = (0..width).all(|j| (observed[j] - exact[j]).abs() <= band[j]);
    Ok(DriftReport {
        sites: (site_lo..=site_hi).collect(),
        observed,
        exact,
        band,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext_int::{NegInf, PosInf};
    use crate::model::{builtin, BuiltinModel, BuiltinParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn asep_line(p: f64) -> ModelSpec<f64> {
        builtin(BuiltinModel::Asep, BuiltinParams::new(p).with_lattice(NegInf, PosInf)).unwrap()
    }

    #[test]
    fn fenwick_select_matches_linear_scan() {
        let mut t = FenwickTree::<f64>::new(7);
        let vals = [0.0, 2.0, 0.5, 0.0, 1.25, 3.0, 0.25];
        for (i, &v) in vals.iter().enumerate() {
            t.set(i, v);
        }
        assert!((t.total() - 7.0).abs() < 1e-15);
        for u in [0.0, 1.9, 2.0, 2.4, 2.6, 6.9] {
            let mut acc = 0.0;
            let mut expect = 0;
            for (i, &v) in vals.iter().enumerate() {
                acc += v;
                if acc > u {
                    expect = i;
                    break;
                }
            }
            assert_eq!(t.select(u), expect, "u = {u}");
        }
    }

    #[test]
    fn trajectories_are_deterministic() {
        let spec = asep_line(0.7);
        let ground = Configuration::ground(spec.lattice, spec.occupancy);
        let mut a = Simulation::new(&spec, ground.clone(), 24).unwrap();
        let mut b = Simulation::new(&spec, ground, 24).unwrap();
        let mut rng_a = ChaCha12Rng::seed_from_u64(3);
        let mut rng_b = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let ea = a.step(&mut rng_a).unwrap();
            let eb = b.step(&mut rng_b).unwrap();
            assert_eq!(ea, eb);
        }
        assert_eq!(a.config(), b.config());
        assert_eq!(a.audit_failures(), 0);
    }

    #[test]
    fn full_line_dynamics_conserves_n() {
        let spec = asep_line(0.8);
        let ground = Configuration::ground(spec.lattice, spec.occupancy);
        let mut sim = Simulation::new(&spec, ground, 24).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n0 = sim.config().conserved_n().unwrap();
        for _ in 0..20_000 {
            sim.step(&mut rng).unwrap();
        }
        assert_eq!(sim.config().conserved_n().unwrap(), n0);
        assert_eq!(sim.audit_failures(), 0);
    }

    #[test]
    fn boundary_dynamics_moves_mass_through_reservoirs() {
        let spec = builtin(
            BuiltinModel::ZrpRate1,
            BuiltinParams::<f64>::new(0.7).with_lattice(NegInf, Finite(0)),
        )
        .unwrap();
        let ground = Configuration::ground(spec.lattice, spec.occupancy);
        let mut sim = Simulation::new(&spec, ground, 30).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut boundary_events = 0u64;
        for _ in 0..10_000 {
            let e = sim.step(&mut rng).unwrap();
            if e.from == 1 || e.to == 1 {
                boundary_events += 1;
            }
            let z0 = sim.config().get(0);
            assert!(z0 >= 0);
        }
        assert!(boundary_events > 100, "reservoir stayed silent");
        assert_eq!(sim.audit_failures(), 0);
    }

    #[test]
    fn tight_allocation_trips_the_cap() {
        let spec = asep_line(0.51);
        let ground = Configuration::ground(spec.lattice, spec.occupancy);
        let mut sim = Simulation::new(&spec, ground, 1).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut tripped = false;
        for _ in 0..5000 {
            match sim.step(&mut rng) {
                Ok(_) => {}
                Err(Error::WindowCapExceeded { .. }) => {
                    tripped = true;
                    break;
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(tripped, "near-symmetric walk never hit a 3-site window");
    }

    #[test]
    fn finite_zrp_time_averages_track_the_marginals() {
        let spec = builtin(
            BuiltinModel::ZrpRate1,
            BuiltinParams::<f64>::new(0.7).with_lattice(Finite(-4), Finite(0)),
        )
        .unwrap();
        let c = spec.c_anchor.unwrap();
        let report = stationarity_drift(&spec, c, 24, 20.0, 200.0, 17, (-4, 0)).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn bricklayers_runs_on_its_finite_volume() {
        let spec = builtin(
            BuiltinModel::Bricklayers,
            BuiltinParams::<f64>::new(0.7).with_beta(0.8),
        )
        .unwrap();
        let ground = Configuration::ground(spec.lattice, spec.occupancy);
        let mut sim = Simulation::new(&spec, ground, 0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..5000 {
            sim.step(&mut rng).unwrap();
        }
        assert_eq!(sim.audit_failures(), 0);
    }
}

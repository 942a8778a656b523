//! Numerical verification: exhaustive finite-chain oracles, stationarity
//! and balance checks, the sector decomposition, the transported measure
//! identities, and the Jacobi triple product.
//!
//! Every check returns an [`IdentityReport`] carrying the observed residual
//! and a certified truncation budget; a check passes when the residual is
//! explained by floating-point error plus that budget.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::measures::{
    blocking_log_density_ratio, deviation_tail_bound, effective_c, log_f_factorial,
    shift_identity_rhs, SectorWeight,
};
use crate::model::{builtin, BuiltinModel, BuiltinParams, ModelSpec};
use crate::scalar::{lit, log_sum_exp, CompensatedSum, Scalar};
use crate::standup::{lay_down, particle_positions};
use crate::state::Configuration;

/// Hard cap on exhaustive enumeration.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

/// Outcome of one identity check.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub identity: String,
    pub params: serde_json::Value,
    pub residual: f64,
    pub tail_budget: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    pub fn new(
        identity: &str,
        params: serde_json::Value,
        residual: f64,
        tail_budget: f64,
        tolerance: f64,
    ) -> Self {
        let pass = residual.is_finite() && residual <= tolerance + tail_budget;
        Self { identity: identity.into(), params, residual, tail_budget, tolerance, pass }
    }
}

/// An exhaustively enumerated finite chain: finite lattice, occupancies
/// truncated to `[-cap, cap] ∩ I`. States are mixed-radix indices over the
/// sites. When the alphabet had to be truncated the chain is `capped` and
/// only its interior states (no occupancy at a truncation edge) see their
/// complete flux.
pub struct FiniteChain<T: Scalar> {
    pub spec: ModelSpec<T>,
    ell: i64,
    r: i64,
    lo: i64,
    hi: i64,
    radix: u64,
    sites: u32,
    capped_lo: bool,
    capped_hi: bool,
}

impl<T: Scalar> FiniteChain<T> {
    pub fn new(spec: &ModelSpec<T>, cap: i64) -> Result<Self> {
        Self::with_caps(spec, -cap, cap)
    }

    /// Like [`FiniteChain::new`] with an asymmetric truncation interval.
    pub fn with_caps(spec: &ModelSpec<T>, cap_lo: i64, cap_hi: i64) -> Result<Self> {
        let ell = spec
            .lattice
            .ell
            .finite()
            .ok_or_else(|| Error::VolumeMismatch("a finite lattice for enumeration".into()))?;
        let r = spec.lattice.r.expect_finite("r");
        let range = spec.occupancy.clamped_range(cap_lo, cap_hi);
        let (lo, hi) = (*range.start(), *range.end());
        let radix = (hi - lo + 1) as u64;
        let sites = (r - ell + 1) as u32;
        let count = radix
            .checked_pow(sites)
            .filter(|&c| c <= ENUMERATION_LIMIT)
            .ok_or(Error::TooManyStates { count: u64::MAX, limit: ENUMERATION_LIMIT })?;
        let _ = count;
        Ok(Self {
            spec: spec.clone(),
            ell,
            r,
            lo,
            hi,
            radix,
            sites,
            capped_lo: !spec.occupancy.omega_min.is_finite(),
            capped_hi: !spec.occupancy.omega_max.is_finite(),
        })
    }

    pub fn state_count(&self) -> u64 {
        self.radix.pow(self.sites)
    }

    pub fn capped(&self) -> bool {
        self.capped_lo || self.capped_hi
    }

    /// Per-site occupancies of a state index, ordered `ell..=r`.
    pub fn values(&self, mut idx: u64) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.sites as usize);
        for _ in 0..self.sites {
            out.push(self.lo + (idx % self.radix) as i64);
            idx /= self.radix;
        }
        out
    }

    pub fn index_of(&self, values: &[i64]) -> Option<u64> {
        let mut idx = 0u64;
        for &v in values.iter().rev() {
            if v < self.lo || v > self.hi {
                return None;
            }
            idx = idx * self.radix + (v - self.lo) as u64;
        }
        Some(idx)
    }

    pub fn config(&self, idx: u64) -> Configuration {
        Configuration::new(
            self.spec.lattice,
            self.spec.occupancy,
            self.ell,
            self.values(idx),
            self.lo,
            self.lo,
        )
        .expect("enumerated values are in the alphabet")
    }

    /// True when every occupancy sits strictly inside a truncated edge, so
    /// the state's complete in- and out-flux is representable.
    pub fn is_interior(&self, values: &[i64]) -> bool {
        values.iter().all(|&v| {
            (!self.capped_lo || v > self.lo) && (!self.capped_hi || v < self.hi)
        })
    }

    /// All moves `(from, to)` of the chain, including the reservoir
    /// exchanges through the virtual sites `ell - 1` and `r + 1`.
    pub fn moves(&self) -> Vec<(i64, i64)> {
        let mut moves = vec![(self.ell - 1, self.ell), (self.ell, self.ell - 1)];
        for i in self.ell..self.r {
            moves.push((i, i + 1));
            moves.push((i + 1, i));
        }
        moves.push((self.r, self.r + 1));
        moves.push((self.r + 1, self.r));
        moves
    }

    pub fn rate(&self, values: &[i64], from: i64, to: i64) -> T {
        let v = |site: i64| values[(site - self.ell) as usize];
        if from == self.ell - 1 && to == self.ell {
            (self.spec.left.as_ref().unwrap().p_ell)(v(self.ell))
        } else if from == self.ell && to == self.ell - 1 {
            (self.spec.left.as_ref().unwrap().q_ell)(v(self.ell))
        } else if from == self.r && to == self.r + 1 {
            (self.spec.right.as_ref().unwrap().p_r)(v(self.r))
        } else if from == self.r + 1 && to == self.r {
            (self.spec.right.as_ref().unwrap().q_r)(v(self.r))
        } else if to == from + 1 {
            self.spec.bulk_p(v(from), v(to))
        } else {
            self.spec.bulk_q(v(to), v(from))
        }
    }

    /// Applies a move; `None` when the result leaves the enumeration.
    pub fn apply(&self, values: &[i64], from: i64, to: i64) -> Option<Vec<i64>> {
        let mut out = values.to_vec();
        for (site, delta) in [(from, -1), (to, 1)] {
            if site >= self.ell && site <= self.r {
                let k = (site - self.ell) as usize;
                out[k] += delta;
                if out[k] < self.lo || out[k] > self.hi {
                    return None;
                }
            }
        }
        Some(out)
    }

    /// Unnormalized log blocking weight `Σ_i θ_i v_i - ln f(v_i)!`.
    pub fn log_weight(&self, values: &[i64], c: T) -> Result<T> {
        let mut acc = CompensatedSum::new();
        for (k, &v) in values.iter().enumerate() {
            let theta = self.spec.theta_at(c, self.ell + k as i64);
            acc.add(theta * T::from_i64(v).unwrap());
            acc.add(-log_f_factorial(&self.spec, v)?);
        }
        Ok(acc.value())
    }
}

/// Checks reversibility move by move: for every enumerated transition
/// `z -> z'` with rate `r`, the reverse rate `r'` must satisfy
/// `μ(z) r = μ(z') r'`. A one-sided zero rate is structural and reported
/// as an infinite residual.
pub fn check_detailed_balance<T: Scalar>(chain: &FiniteChain<T>, tol: f64) -> Result<IdentityReport> {
    let c = effective_c(&chain.spec, None)?;
    let moves = chain.moves();
    let (worst, pairs) = (0..chain.state_count())
        .into_par_iter()
        .map(|idx| -> Result<(f64, u64)> {
            let values = chain.values(idx);
            let lw = chain.log_weight(&values, c)?;
            let mut worst = 0.0f64;
            let mut pairs = 0u64;
            for &(from, to) in &moves {
                let fwd = chain.rate(&values, from, to);
                if fwd <= T::zero() {
                    continue;
                }
                let Some(next) = chain.apply(&values, from, to) else { continue };
                let bwd = chain.rate(&next, to, from);
                if bwd <= T::zero() {
                    worst = f64::INFINITY;
                    continue;
                }
                let lw_next = chain.log_weight(&next, c)?;
                let residual = (lw + fwd.ln() - lw_next - bwd.ln()).abs();
                worst = worst.max(residual.to_f64().unwrap_or(f64::INFINITY));
                pairs += 1;
            }
            Ok((worst, pairs))
        })
        .try_reduce(|| (0.0, 0), |a, b| Ok((a.0.max(b.0), a.1 + b.1)))?;
    Ok(IdentityReport::new(
        "detailed-balance",
        serde_json::json!({
            "model": chain.spec.name,
            "states": chain.state_count(),
            "pairs": pairs,
            "c": c.to_f64(),
        }),
        worst,
        0.0,
        tol,
    ))
}

/// Flux balance at interior states: total probability in-flow equals
/// out-flow under the blocking weights. Works on capped chains, where the
/// linear solve does not.
pub fn check_stationarity_flux<T: Scalar>(chain: &FiniteChain<T>, tol: f64) -> Result<IdentityReport> {
    let c = effective_c(&chain.spec, None)?;
    let count = chain.state_count() as usize;
    let mut log_w = Vec::with_capacity(count);
    for idx in 0..chain.state_count() {
        log_w.push(chain.log_weight(&chain.values(idx), c)?);
    }
    let max_lw = log_w.iter().cloned().fold(T::neg_infinity(), T::max);
    let w: Vec<T> = log_w.iter().map(|&l| (l - max_lw).exp()).collect();

    let moves = chain.moves();
    let mut inflow = vec![CompensatedSum::<T>::new(); count];
    let mut outflow = vec![CompensatedSum::<T>::new(); count];
    for idx in 0..chain.state_count() {
        let values = chain.values(idx);
        for &(from, to) in &moves {
            let rate = chain.rate(&values, from, to);
            if rate <= T::zero() {
                continue;
            }
            let Some(next) = chain.apply(&values, from, to) else { continue };
            let flow = w[idx as usize] * rate;
            outflow[idx as usize].add(flow);
            inflow[chain.index_of(&next).unwrap() as usize].add(flow);
        }
    }

    let mut worst = 0.0f64;
    let mut interior = 0u64;
    for idx in 0..count {
        if !chain.is_interior(&chain.values(idx as u64)) {
            continue;
        }
        interior += 1;
        let (inn, out) = (inflow[idx].value(), outflow[idx].value());
        let scale = inn.max(out).max(w[idx]);
        if scale > T::zero() {
            let res = ((inn - out).abs() / scale).to_f64().unwrap_or(f64::INFINITY);
            worst = worst.max(res);
        }
    }
    Ok(IdentityReport::new(
        "stationarity-flux",
        serde_json::json!({
            "model": chain.spec.name,
            "states": chain.state_count(),
            "interior_states": interior,
            "c": c.to_f64(),
        }),
        worst,
        0.0,
        tol,
    ))
}

/// Solves `π Q = 0`, `Σ π = 1` by dense LU over the full generator. The
/// chain must be closed: a capped chain whose dynamics escapes the
/// enumeration has no meaningful finite stationary law.
pub fn stationary_distribution<T: Scalar>(chain: &FiniteChain<T>) -> Result<DVector<f64>> {
    let n = chain.state_count() as usize;
    let moves = chain.moves();
    // A = Q^T with the last balance equation replaced by normalization.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for idx in 0..chain.state_count() {
        let values = chain.values(idx);
        for &(from, to) in &moves {
            let rate = chain.rate(&values, from, to).to_f64().unwrap();
            if rate <= 0.0 {
                continue;
            }
            let Some(next) = chain.apply(&values, from, to) else {
                return Err(Error::Incompatible(format!(
                    "chain for '{}' is not closed under its dynamics; the stationary solve needs an uncapped alphabet",
                    chain.spec.name
                )));
            };
            let j = chain.index_of(&next).unwrap() as usize;
            let i = idx as usize;
            a[(j, i)] += rate;
            a[(i, i)] -= rate;
        }
    }
    for col in 0..n {
        a[(n - 1, col)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Structure("singular generator in stationary solve".into()))?;
    Ok(pi)
}

/// Compares the LU stationary distribution against the normalized blocking
/// weights, state by state.
pub fn check_stationary_solve<T: Scalar>(chain: &FiniteChain<T>, tol: f64) -> Result<IdentityReport> {
    let c = effective_c(&chain.spec, None)?;
    let pi = stationary_distribution(chain)?;
    let count = chain.state_count() as usize;
    let mut log_w = Vec::with_capacity(count);
    for idx in 0..chain.state_count() {
        log_w.push(chain.log_weight(&chain.values(idx), c)?.to_f64().unwrap());
    }
    let max_lw = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max_lw).exp()).collect();
    let total: f64 = w.iter().sum();
    // state-by-state relative deviation; every product weight is positive
    let worst = (0..count)
        .map(|i| {
            let mu = w[i] / total;
            (pi[i] - mu).abs() / mu
        })
        .fold(0.0, f64::max);
    Ok(IdentityReport::new(
        "stationary-solve",
        serde_json::json!({
            "model": chain.spec.name,
            "states": count,
            "c": c.to_f64(),
        }),
        worst,
        0.0,
        tol,
    ))
}

/// Verifies the ergodic decomposition of the full-line exclusion blocking
/// measure: restricted to deviation windows inside `[-radius, radius]`,
/// the relative weight of each conserved-quantity level must match the
/// discrete Gaussian law, up to the certified outside-window mass.
pub fn check_sector_decomposition<T: Scalar>(
    p: T,
    c: T,
    radius: i64,
    tol: f64,
) -> Result<IdentityReport> {
    let spec = builtin(
        BuiltinModel::Asep,
        BuiltinParams::new(p).with_lattice(crate::ext_int::NegInf, crate::ext_int::PosInf),
    )?;
    let sites = (2 * radius + 1) as u32;
    if sites >= 63 || (1u64 << sites) > ENUMERATION_LIMIT {
        return Err(Error::TooManyStates { count: u64::MAX, limit: ENUMERATION_LIMIT });
    }
    let ground = Configuration::ground(spec.lattice, spec.occupancy);
    let mut by_sector: BTreeMap<i64, T> = BTreeMap::new();
    let mut total = T::neg_infinity();
    for mask in 0u64..(1u64 << sites) {
        let values: Vec<i64> = (0..sites).map(|b| ((mask >> b) & 1) as i64).collect();
        let z = Configuration::new(spec.lattice, spec.occupancy, -radius, values, 0, 1)?;
        let lw = blocking_log_density_ratio(&spec, c, &z, &ground)?;
        let n = z.conserved_n()?;
        let slot = by_sector.entry(n).or_insert(T::neg_infinity());
        *slot = log_sum_exp(*slot, lw);
        total = log_sum_exp(total, lw);
    }
    let sector = SectorWeight::new(p, c)?;
    let mut worst = 0.0f64;
    for (&n, &lse) in &by_sector {
        let observed = (lse - total).exp();
        let res = (observed - sector.weight(n)).abs().to_f64().unwrap_or(f64::INFINITY);
        worst = worst.max(res);
    }
    let tail = deviation_tail_bound(&spec, c, -radius, radius)?.to_f64().unwrap();
    let tail_budget = 2.0 * tail + sector.tail_rel().to_f64().unwrap();
    Ok(IdentityReport::new(
        "sector-decomposition",
        serde_json::json!({
            "p": p.to_f64(),
            "c": c.to_f64(),
            "radius": radius,
            "sectors": by_sector.len(),
        }),
        worst,
        tail_budget,
        tol,
    ))
}

/// Checks the lattice shift covariance of the blocking density on random
/// finite perturbations of the ground state: the log density ratio of
/// `τ^j z` to `z` must equal `[span (j²-j)/2 - N(z) j] ln(q/p) + c span j`.
pub fn check_shift_identity<T: Scalar>(
    spec: &ModelSpec<T>,
    c: Option<T>,
    trials: u64,
    seed: u64,
    tol: f64,
) -> Result<IdentityReport> {
    let c = effective_c(spec, c)?;
    if !spec.lattice.doubly_infinite() {
        return Err(Error::VolumeMismatch("a full-line model for the shift identity".into()));
    }
    let lo = spec.occupancy.omega_min.expect_finite("omega_min");
    let hi = spec.occupancy.omega_max.expect_finite("omega_max");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let width = rng.gen_range(1..=13usize);
        let window_lo = rng.gen_range(-8..=2i64);
        let values: Vec<i64> = (0..width).map(|_| rng.gen_range(lo..=hi)).collect();
        let z = Configuration::new(spec.lattice, spec.occupancy, window_lo, values, lo, hi)?;
        let j = rng.gen_range(-5..=5i64);
        let lhs = blocking_log_density_ratio(spec, c, &z.shift(j)?, &z)?;
        let rhs = shift_identity_rhs(spec, c, &z, j)?;
        worst = worst.max((lhs - rhs).abs().to_f64().unwrap_or(f64::INFINITY));
    }
    Ok(IdentityReport::new(
        "shift-identity",
        serde_json::json!({
            "model": spec.name,
            "c": c.to_f64(),
            "trials": trials,
            "seed": seed,
        }),
        worst,
        0.0,
        tol,
    ))
}

/// Both sides of the triple product
/// `∏_{i>=1} (1 - x^{2i})(1 + x^{2i-1} y^2)(1 + x^{2i-1} y^{-2})
///  = Σ_j x^{j^2} y^{2j}`
/// as log values with certified truncation tails.
pub fn jacobi_sides<T: Scalar>(x: T, y: T) -> Result<(T, T, T)> {
    if !(x > T::zero() && x < T::one()) {
        return Err(Error::Parameter(format!("jacobi requires x in (0, 1), got {x}")));
    }
    if !(y > T::zero()) {
        return Err(Error::Parameter(format!("jacobi requires y > 0, got {y}")));
    }
    let x2 = x * x;
    let (y2, y2i) = (y * y, (y * y).recip());

    // Product side: factors tend to 1 geometrically with ratio x^2.
    let mut lhs = CompensatedSum::new();
    let mut a = x2; // x^{2i}
    let mut b = x * y2; // x^{2i-1} y^2
    let mut d = x * y2i; // x^{2i-1} / y^2
    let mut steps = 0u64;
    let lhs_tail;
    loop {
        lhs.add((-a).ln_1p());
        lhs.add(b.ln_1p());
        lhs.add(d.ln_1p());
        a = a * x2;
        b = b * x2;
        d = d * x2;
        if a + b + d < lit(1e-18) {
            // |ln(1-u)| <= u/(1-u), ln(1+u) <= u; geometric closure in x^2.
            lhs_tail = (a / (T::one() - a) + b + d) / (T::one() - x2);
            break;
        }
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::TailUnachievable {
                requested: 1e-18,
                reason: format!("triple product converges too slowly at x = {x}"),
            });
        }
    }

    // Sum side: log-domain theta series, expanded from the peak.
    let (log_x, log_y2) = (x.ln(), y2.ln());
    let term = |j: i64| {
        let jf = T::from_i64(j).unwrap();
        jf * jf * log_x + jf * log_y2
    };
    let center = (-log_y2 / (lit::<T>(2.0) * log_x)).round().to_i64().unwrap_or(0);
    let mut rhs = term(center);
    let (mut lo, mut hi) = (center, center);
    let target = lit::<T>(1e-18f64.ln());
    loop {
        let mut grew = false;
        for (edge, next) in [(&mut lo, -1i64), (&mut hi, 1)] {
            let j = *edge + next;
            let t = term(j);
            if t - rhs > target || (j - center).abs() < 4 {
                rhs = log_sum_exp(rhs, t);
                *edge = j;
                grew = true;
            }
        }
        if !grew {
            break;
        }
        if hi - lo > 1_000_000 {
            return Err(Error::TailUnachievable {
                requested: 1e-18,
                reason: format!("theta series converges too slowly at x = {x}"),
            });
        }
    }
    let ratio_lo = (term(lo - 1) - term(lo)).exp();
    let ratio_hi = (term(hi + 1) - term(hi)).exp();
    let rhs_tail = ((term(lo - 1) - rhs).exp() / (T::one() - ratio_lo)
        + (term(hi + 1) - rhs).exp() / (T::one() - ratio_hi))
        * rhs.exp();

    Ok((lhs.value(), rhs, lhs_tail + rhs_tail / rhs.exp()))
}

/// One-point check of the triple product; the residual compares log values.
pub fn check_jacobi<T: Scalar>(x: T, y: T, tol: f64) -> Result<IdentityReport> {
    let (lhs, rhs, tail) = jacobi_sides(x, y)?;
    Ok(IdentityReport::new(
        "jacobi-triple-product",
        serde_json::json!({ "x": x.to_f64(), "y": y.to_f64() }),
        (lhs - rhs).abs().to_f64().unwrap_or(f64::INFINITY),
        tail.to_f64().unwrap_or(f64::INFINITY),
        tol,
    ))
}

/// Number of extension sites after which a geometric series with log-ratio
/// `-log_pq` has dropped below 1e-18 of its edge term.
fn geo_extension<T: Scalar>(log_pq: T) -> i64 {
    (lit::<T>(42.0) / log_pq).ceil().to_i64().unwrap_or(1_000_000).max(4)
}

/// `ln μ(z)` of the rate-1 zero range blocking measure with geometric
/// marginals of parameter `(p/q)^{i-1}` at site `i <= 0`, plus a certified
/// truncation tail.
fn log_mu_stack<T: Scalar>(log_pq: T, z: &Configuration) -> (T, T) {
    let (wlo, _) = z.window();
    let ext_lo = wlo - geo_extension(log_pq);
    let mut acc = CompensatedSum::new();
    for i in ext_lo..=0 {
        let rho = T::from_i64(i - 1).unwrap() * log_pq; // ln of the geometric ratio
        acc.add(T::from_i64(z.get(i) * (i - 1)).unwrap() * log_pq);
        acc.add((-rho.exp()).ln_1p());
    }
    let u = (T::from_i64(ext_lo - 2).unwrap() * log_pq).exp();
    let tail = u / ((T::one() - u) * (T::one() - (-log_pq).exp()));
    (acc.value(), tail)
}

/// `ln π^c(a)` of the full-line exclusion blocking measure with Bernoulli
/// marginals of parameter `e^{θ_k}/(1 + e^{θ_k})`, `θ_k = c + k ln(p/q)`,
/// plus a certified truncation tail.
fn log_pi_exclusion<T: Scalar>(log_pq: T, c: T, a: &Configuration) -> (T, T) {
    let (wlo, whi) = a.window();
    let ext = geo_extension(log_pq);
    let mut acc = CompensatedSum::new();
    for k in (wlo - ext)..=(whi + ext) {
        let theta = c + T::from_i64(k).unwrap() * log_pq;
        if a.get(k) == 1 {
            acc.add(-(-theta).exp().ln_1p());
        } else {
            acc.add(-theta.exp().ln_1p());
        }
    }
    let geo = T::one() - (-log_pq).exp();
    let tail = (c + T::from_i64(wlo - ext - 1).unwrap() * log_pq).exp() / geo
        + (-(c + T::from_i64(whi + ext + 1).unwrap() * log_pq)).exp() / geo;
    (acc.value(), tail)
}

/// The transported-measure identity for the rate-1 zero range process and
/// its laid-down exclusion image:
/// `ln μ(z) = ln K^c + (n^2+n)/2 ln(p/q) + c n + ln π^c(lay_down(z, n))`.
pub fn check_sector_transport<T: Scalar>(
    p: T,
    c: T,
    z: &Configuration,
    n: i64,
    tol: f64,
) -> Result<IdentityReport> {
    let log_pq = (p / (T::one() - p)).ln();
    let a = lay_down(z, n)?;
    let (lhs, lhs_tail) = log_mu_stack(log_pq, z);
    let sector = SectorWeight::new(p, c)?;
    let (log_pi, pi_tail) = log_pi_exclusion(log_pq, c, &a);
    let nf = T::from_i64(n).unwrap();
    let rhs = sector.log_normalization()
        + T::from_i64(n * (n + 1) / 2).unwrap() * log_pq
        + c * nf
        + log_pi;
    let tail = (lhs_tail + pi_tail + sector.tail_rel()).to_f64().unwrap_or(f64::INFINITY);
    Ok(IdentityReport::new(
        "sector-transport",
        serde_json::json!({ "p": p.to_f64(), "c": c.to_f64(), "n": n }),
        (lhs - rhs).abs().to_f64().unwrap_or(f64::INFINITY),
        tail,
        tol,
    ))
}

/// The fully expanded form of the transported-measure identity at
/// `n = N_p(z)` (leftmost laid-down particle at 1): the exclusion side is
/// written out as products over particle positions and gaps.
pub fn check_gap_expansion<T: Scalar>(p: T, c: T, z: &Configuration, tol: f64) -> Result<IdentityReport> {
    let log_pq = (p / (T::one() - p)).ln();
    let n = z.count_particles().expect_finite("particle count");
    let positions = particle_positions(z, n)?;
    debug_assert_eq!(positions[0], 1);

    let (lhs, lhs_tail) = log_mu_stack(log_pq, z);

    let sector = SectorWeight::new(p, c)?;
    let mut rhs = CompensatedSum::new();
    rhs.add(sector.log_normalization());
    rhs.add(T::from_i64(n * (n + 1) / 2).unwrap() * log_pq);
    rhs.add(c * T::from_i64(n).unwrap());

    // Hole factors left of the origin: ∏_{k<=0} 1/(1 + e^c (p/q)^k).
    let ext = geo_extension(log_pq);
    for k in -ext..=0 {
        rhs.add(-(c + T::from_i64(k).unwrap() * log_pq).exp().ln_1p());
    }
    let geo = T::one() - (-log_pq).exp();
    let mut tail = (c + T::from_i64(-ext - 1).unwrap() * log_pq).exp() / geo;

    // Particle factor at each r_j and hole factors on the gap to r_{j+1}.
    let particle = |r: i64| -(-(c + T::from_i64(r).unwrap() * log_pq)).exp().ln_1p();
    let hole = |k: i64| -(c + T::from_i64(k).unwrap() * log_pq).exp().ln_1p();
    for j in 0..positions.len() - 1 {
        rhs.add(particle(positions[j]));
        for k in (positions[j] + 1)..positions[j + 1] {
            rhs.add(hole(k));
        }
    }
    // Beyond the stored gaps the positions advance by one; the remaining
    // particle factors close geometrically.
    let mut r = *positions.last().unwrap();
    for _ in 0..ext {
        rhs.add(particle(r));
        r += 1;
    }
    tail += (-(c + T::from_i64(r).unwrap() * log_pq)).exp() / geo;
    tail += sector.tail_rel();

    Ok(IdentityReport::new(
        "gap-expansion",
        serde_json::json!({ "p": p.to_f64(), "c": c.to_f64(), "n": n }),
        (lhs - rhs.value()).abs().to_f64().unwrap_or(f64::INFINITY),
        (tail + lhs_tail).to_f64().unwrap_or(f64::INFINITY),
        tol,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext_int::Finite;
    use crate::model::right_boundary_from_theta;
    use crate::standup::stack_shape;

    fn finite_asep(p: f64, ell: i64, r: i64) -> FiniteChain<f64> {
        let spec = builtin(
            BuiltinModel::Asep,
            BuiltinParams::new(p).with_lattice(Finite(ell), Finite(r)),
        )
        .unwrap();
        FiniteChain::new(&spec, 10).unwrap()
    }

    fn stack(values_right_to_left: &[i64]) -> Configuration {
        let (lattice, occupancy) = stack_shape();
        let mut stored: Vec<i64> = values_right_to_left.to_vec();
        stored.reverse();
        let window_lo = 1 - stored.len() as i64;
        Configuration::new(lattice, occupancy, window_lo, stored, 0, 0).unwrap()
    }

    #[test]
    fn index_round_trip() {
        let chain = finite_asep(0.7, -2, 2);
        assert_eq!(chain.state_count(), 32);
        for idx in 0..32 {
            let values = chain.values(idx);
            assert_eq!(chain.index_of(&values), Some(idx));
        }
    }

    #[test]
    fn asep_chain_is_reversible() {
        let report = check_detailed_balance(&finite_asep(0.7, -2, 2), 1e-12).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn broken_boundary_fails_detailed_balance() {
        let good = builtin(
            BuiltinModel::Asep,
            BuiltinParams::<f64>::new(0.7).with_lattice(Finite(-1), Finite(1)),
        )
        .unwrap();
        let mut bad = good.clone();
        // boundary built for the wrong theta
        bad.right = Some(right_boundary_from_theta(
            bad.kernel.f.clone(),
            bad.theta_at(0.0, 1) + 0.5,
            bad.occupancy.omega_max,
        ));
        let chain = FiniteChain::new(&bad, 10).unwrap();
        let report = check_detailed_balance(&chain, 1e-12).unwrap();
        assert!(!report.pass);
        assert!(report.residual > 0.4);
    }

    #[test]
    fn stationary_solve_matches_weights() {
        let report = check_stationary_solve(&finite_asep(0.75, -2, 2), 1e-11).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn capped_chain_refuses_the_solve() {
        let spec = builtin(
            BuiltinModel::ZrpRate1,
            BuiltinParams::<f64>::new(0.7).with_lattice(Finite(-2), Finite(0)),
        )
        .unwrap();
        let chain = FiniteChain::new(&spec, 4).unwrap();
        assert!(chain.capped());
        assert!(stationary_distribution(&chain).is_err());
        let flux = check_stationarity_flux(&chain, 1e-12).unwrap();
        assert!(flux.pass, "{flux:?}");
    }

    #[test]
    fn sector_decomposition_matches_discrete_gaussian() {
        let report = check_sector_decomposition(0.9, 0.2, 7, 1e-10).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.tail_budget < 1e-5);
    }

    #[test]
    fn jacobi_matches_direct_theta_series() {
        let (lhs, rhs, tail) = jacobi_sides(0.5f64, 1.0).unwrap();
        // direct f64 oracle for the series at x = 1/2, y = 1
        let direct: f64 = (-10..=10i32).map(|j| 0.5f64.powi(j * j)).sum();
        assert!((rhs.exp() - direct).abs() < 1e-14);
        assert!((lhs - rhs).abs() < 1e-13 + tail);
    }

    #[test]
    fn jacobi_over_a_grid() {
        for x in [0.1f64, 0.3, 0.5, 0.7, 0.9] {
            for y in [0.25f64, 0.5, 1.0, 2.0, 4.0] {
                let report = check_jacobi(x, y, 1e-12).unwrap();
                assert!(report.pass, "x={x} y={y}: {report:?}");
            }
        }
    }

    #[test]
    fn transport_and_expansion_agree_with_the_measure() {
        for z in [stack(&[0]), stack(&[2, 0, 1]), stack(&[1, 1, 0, 3])] {
            let n = z.count_particles().expect_finite("np");
            let t = check_sector_transport(0.7, 0.3, &z, n, 1e-10).unwrap();
            assert!(t.pass, "{t:?}");
            let g = check_gap_expansion(0.7, 0.3, &z, 1e-10).unwrap();
            assert!(g.pass, "{g:?}");
        }
    }

    #[test]
    fn transport_holds_for_any_anchor_and_level() {
        let z = stack(&[2, 0, 1]);
        for c in [-0.5f64, 0.0, 0.8] {
            for n in [-2i64, 0, 3, 5] {
                let t = check_sector_transport(0.8, c, &z, n, 1e-10).unwrap();
                assert!(t.pass, "c={c} n={n}: {t:?}");
            }
        }
    }

    #[test]
    fn enumeration_limit_is_enforced() {
        let spec = builtin(
            BuiltinModel::Asep,
            BuiltinParams::<f64>::new(0.7).with_lattice(Finite(-10), Finite(10)),
        )
        .unwrap();
        assert!(matches!(FiniteChain::new(&spec, 10), Err(Error::TooManyStates { .. })));
    }
}

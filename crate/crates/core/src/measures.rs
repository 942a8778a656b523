//! Product blocking measures: single-site marginals, the arithmetic theta
//! sequence, shift identities, the discrete Gaussian sector law, and exact
//! samplers.
//!
//! Everything runs in the log domain; probabilities are exponentiated only
//! at the API boundary. Every truncated infinite sum carries a certified
//! tail bound derived from monotonicity of `f` (term ratios are eventually
//! dominated by a geometric ratio strictly below one).

use rand::Rng;

use crate::error::{Error, Result};
use crate::ext_int::Finite;
use crate::model::ModelSpec;
use crate::scalar::{lit, log_sum_exp, CompensatedSum, Scalar};
use crate::state::Configuration;

/// Relative truncation target for partition sums.
const PARTITION_TAIL_REL: f64 = 1e-16;
/// Tail mass beyond the cached support window of a marginal law.
const SUPPORT_TAIL: f64 = 1e-15;
/// Iteration guard for runaway scans.
const MAX_SCAN_STEPS: u64 = 10_000_000;

/// Log of the generalized factorial `f(z)!`, defined by `f(0)! = 1` and the
/// recurrence `f(z)! = f(z) f(z-1)!` in both directions.
pub fn log_f_factorial<T: Scalar>(spec: &ModelSpec<T>, z: i64) -> Result<T> {
    if !spec.occupancy.contains(z) {
        return Err(Error::OutOfAlphabet { value: z, alphabet: "I".into() });
    }
    let f = &spec.kernel.f;
    let mut acc = CompensatedSum::new();
    if z > 0 {
        for y in 1..=z {
            acc.add(f(y).ln());
        }
    } else {
        for y in (z + 1)..=0 {
            let fy = f(y);
            if fy <= T::zero() {
                return Err(Error::Parameter(format!(
                    "f({y}) = 0 makes f({z})! undefined (negative branch)"
                )));
            }
            acc.add(-fy.ln());
        }
    }
    Ok(acc.value())
}

/// Result of a certified partition scan: log of the truncated sum, the
/// relative tail bound, and the occupancy window the scan visited.
#[derive(Debug, Clone, Copy)]
pub struct PartitionScan<T: Scalar> {
    pub log_z: T,
    pub tail_rel: T,
    pub z_lo: i64,
    pub z_hi: i64,
}

/// Computes `ln Z(theta)`, `Z(theta) = Σ_{y∈I} e^{theta y}/f(y)!`.
///
/// Finite alphabets are summed exactly; infinite ones are truncated once
/// the geometric tail bound drops below `PARTITION_TAIL_REL` relative.
pub fn partition<T: Scalar>(spec: &ModelSpec<T>, theta: T) -> Result<PartitionScan<T>> {
    let (tmin, tmax) = spec.theta_bounds();
    if !(theta > tmin && theta < tmax) {
        return Err(Error::ThetaOutOfBounds {
            theta: theta.to_f64().unwrap_or(f64::NAN),
            lo: format!("{tmin}"),
            hi: format!("{tmax}"),
        });
    }
    let f = &spec.kernel.f;
    let target = lit::<T>(PARTITION_TAIL_REL.ln());

    // Scan outward from z = 0 (always in I). Running log f! avoids
    // re-walking the factorial.
    let mut log_sum = T::zero(); // term at z = 0: e^0 / f(0)! = 1
    let mut tail_log = T::neg_infinity();

    // Upward.
    let mut z_hi = 0;
    let mut log_fact = T::zero();
    let mut steps = 0u64;
    loop {
        let next = z_hi + 1;
        if !spec.occupancy.contains(next) {
            break;
        }
        let fy = f(next);
        log_fact += fy.ln();
        let term = theta * T::from_i64(next).unwrap() - log_fact;
        log_sum = log_sum_exp(log_sum, term);
        z_hi = next;
        if !spec.occupancy.omega_max.is_finite() {
            // Ratio of consecutive terms from here on is at most
            // exp(theta - ln f(z_hi + 1)); monotone f certifies it.
            let log_ratio = theta - f(z_hi + 1).ln();
            if log_ratio < T::zero() {
                let log_tail = term + log_ratio - (T::one() - log_ratio.exp()).ln();
                if log_tail - log_sum < target {
                    tail_log = log_sum_exp(tail_log, log_tail);
                    break;
                }
            }
        }
        steps += 1;
        if steps > MAX_SCAN_STEPS {
            return Err(Error::TailUnachievable {
                requested: PARTITION_TAIL_REL,
                reason: format!("partition sum at theta = {theta} converges too slowly"),
            });
        }
    }

    // Downward.
    let mut z_lo = 0;
    log_fact = T::zero();
    steps = 0;
    loop {
        let next = z_lo - 1;
        if !spec.occupancy.contains(next) {
            break;
        }
        let fz = f(z_lo);
        if fz <= T::zero() {
            break; // f vanishes at omega_min; the term below is zero mass
        }
        log_fact -= fz.ln(); // ln f(next)! = ln f(z_lo)! - ln f(z_lo)
        let term = theta * T::from_i64(next).unwrap() - log_fact;
        log_sum = log_sum_exp(log_sum, term);
        z_lo = next;
        if !spec.occupancy.omega_min.is_finite() {
            let log_ratio = f(z_lo).ln() - theta;
            if log_ratio < T::zero() {
                let log_tail = term + log_ratio - (T::one() - log_ratio.exp()).ln();
                if log_tail - log_sum < target {
                    tail_log = log_sum_exp(tail_log, log_tail);
                    break;
                }
            }
        }
        steps += 1;
        if steps > MAX_SCAN_STEPS {
            return Err(Error::TailUnachievable {
                requested: PARTITION_TAIL_REL,
                reason: format!("partition sum at theta = {theta} converges too slowly"),
            });
        }
    }

    Ok(PartitionScan {
        log_z: log_sum,
        tail_rel: (tail_log - log_sum).exp(),
        z_lo,
        z_hi,
    })
}

/// The single-site law `μ^θ(z) = e^{θz} / (Z(θ) f(z)!)`.
#[derive(Debug, Clone)]
pub struct MarginalLaw<T: Scalar> {
    spec: ModelSpec<T>,
    theta: T,
    log_z: T,
    /// Support window `[z_lo, z_hi]` carrying all but `SUPPORT_TAIL` mass;
    /// log-pmf per entry, and the cumulative distribution for sampling.
    z_lo: i64,
    log_pmf: Vec<T>,
    cdf: Vec<T>,
}

impl<T: Scalar> MarginalLaw<T> {
    pub fn new(spec: &ModelSpec<T>, theta: T) -> Result<Self> {
        let scan = partition(spec, theta)?;
        // Extend the scan window until the enclosed mass reaches
        // 1 - SUPPORT_TAIL, so the sampler's cap error is certified.
        let (mut z_lo, mut z_hi) = (scan.z_lo, scan.z_hi);
        let mut law = Self { spec: spec.clone(), theta, log_z: scan.log_z, z_lo, log_pmf: vec![], cdf: vec![] };
        loop {
            let log_pmf: Vec<T> = (z_lo..=z_hi)
                .map(|z| law.log_pmf_raw(z))
                .collect::<Result<_>>()?;
            let mut cdf = Vec::with_capacity(log_pmf.len());
            let mut acc = CompensatedSum::new();
            for lp in &log_pmf {
                acc.add(lp.exp());
                cdf.push(acc.value());
            }
            let mass = acc.value();
            let can_grow =
                spec.occupancy.contains(z_lo - 1) || spec.occupancy.contains(z_hi + 1);
            if mass >= T::one() - lit(SUPPORT_TAIL) || !can_grow {
                law.z_lo = z_lo;
                law.log_pmf = log_pmf;
                law.cdf = cdf;
                return Ok(law);
            }
            if spec.occupancy.contains(z_lo - 1) {
                z_lo -= 1;
            }
            if spec.occupancy.contains(z_hi + 1) {
                z_hi += 1;
            }
        }
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn log_partition(&self) -> T {
        self.log_z
    }

    /// Certified support window of the cached table.
    pub fn support(&self) -> (i64, i64) {
        (self.z_lo, self.z_lo + self.log_pmf.len() as i64 - 1)
    }

    fn log_pmf_raw(&self, z: i64) -> Result<T> {
        Ok(self.theta * T::from_i64(z).unwrap() - log_f_factorial(&self.spec, z)? - self.log_z)
    }

    /// `ln μ^θ(z)`.
    pub fn log_pmf(&self, z: i64) -> Result<T> {
        self.log_pmf_raw(z)
    }

    /// `μ^θ(z)`.
    pub fn pmf(&self, z: i64) -> Result<T> {
        Ok(self.log_pmf(z)?.exp())
    }

    /// Exact inverse-CDF sample. For infinite alphabets the walk caps at
    /// the support window, whose missing mass is below `SUPPORT_TAIL`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: T = lit(rng.gen::<f64>());
        let idx = self.cdf.partition_point(|&c| c < u);
        self.z_lo + idx.min(self.cdf.len() - 1) as i64
    }

    /// Expectation of the cached table (used in test diagnostics).
    pub fn mean(&self) -> T {
        let mut acc = CompensatedSum::new();
        for (k, lp) in self.log_pmf.iter().enumerate() {
            acc.add(T::from_i64(self.z_lo + k as i64).unwrap() * lp.exp());
        }
        acc.value()
    }
}

/// `theta_i = c + i (ln p - ln q)`, with the site-membership and bound
/// checks of the stationarity theorem.
pub fn theta_sequence<T: Scalar>(spec: &ModelSpec<T>, c: T, i: i64) -> Result<T> {
    if !spec.lattice.contains(i) {
        return Err(Error::Incompatible(format!(
            "site {i} is outside the lattice [{}, {}]",
            spec.lattice.ell, spec.lattice.r
        )));
    }
    let theta = spec.theta_at(c, i);
    let (tmin, tmax) = spec.theta_bounds();
    if !(theta > tmin && theta < tmax) {
        return Err(Error::Incompatible(format!(
            "theta_{i} = {theta} escapes ({tmin}, {tmax}); the blocking measure does not extend there"
        )));
    }
    Ok(theta)
}

/// `ln μ^c(z) - ln μ^c(w)` via the finite-product expansion: per-site
/// normalizations cancel, leaving a finite sum over sites where the two
/// configurations differ.
pub fn blocking_log_density_ratio<T: Scalar>(
    spec: &ModelSpec<T>,
    c: T,
    z: &Configuration,
    w: &Configuration,
) -> Result<T> {
    if z.lattice() != spec.lattice || w.lattice() != spec.lattice {
        return Err(Error::VolumeMismatch("configurations from the model's lattice".into()));
    }
    let (z_lo, z_hi) = z.window();
    let (w_lo, w_hi) = w.window();
    let lo = z_lo.min(w_lo);
    let hi = z_hi.max(w_hi);
    let mut acc = CompensatedSum::new();
    for i in lo..=hi {
        if !spec.lattice.contains(i) {
            continue;
        }
        let (zi, wi) = (z.get(i), w.get(i));
        if zi == wi {
            continue;
        }
        let theta = theta_sequence(spec, c, i)?;
        acc.add(theta * T::from_i64(zi - wi).unwrap());
        acc.add(log_f_factorial(spec, wi)? - log_f_factorial(spec, zi)?);
    }
    Ok(acc.value())
}

/// Predicted `ln μ^c(τ^j z) - ln μ^c(z)`:
/// `[(ω_max-ω_min)(j²-j)/2 - N(z) j] ln(q/p) + c (ω_max-ω_min) j`.
pub fn shift_identity_rhs<T: Scalar>(
    spec: &ModelSpec<T>,
    c: T,
    z: &Configuration,
    j: i64,
) -> Result<T> {
    let span = spec
        .occupancy
        .span()
        .ok_or_else(|| Error::VolumeMismatch("finite occupancy bounds for the shift identity".into()))?;
    let n = z.conserved_n()?;
    let log_qp = -spec.kernel.log_pq();
    let exponent = T::from_i64(span * (j * j - j) / 2 - n * j).unwrap();
    Ok(exponent * log_qp + c * T::from_i64(span * j).unwrap())
}

/// The discrete Gaussian law of the conserved quantity `N` under the
/// blocking measure of an exclusion-type model (`ω_max - ω_min = 1`):
/// `π^c{N = n} = (q/p)^{(n²+n)/2} e^{-cn} / K^c`.
#[derive(Debug, Clone)]
pub struct SectorWeight<T: Scalar> {
    pub p: T,
    pub c: T,
    log_k: T,
    tail_rel: T,
}

impl<T: Scalar> SectorWeight<T> {
    pub fn new(p: T, c: T) -> Result<Self> {
        if !(p > lit(0.5) && p <= T::one()) {
            return Err(Error::Parameter(format!("p = {p} must lie in (1/2, 1]")));
        }
        let log_qp = ((T::one() - p) / p).ln();
        let log_term = |n: i64| {
            T::from_i64(n * (n + 1) / 2).unwrap() * log_qp - c * T::from_i64(n).unwrap()
        };
        // The exponent is a downward parabola in n; expand symmetrically
        // until both edge terms are negligible. Super-geometric decay makes
        // the edge-term geometric bound valid.
        let mut log_sum = log_term(0);
        let mut lo = 0i64;
        let mut hi = 0i64;
        let target = lit::<T>(1e-18f64.ln());
        loop {
            let mut grew = false;
            let t_lo = log_term(lo - 1);
            if t_lo - log_sum > target || lo > -4 {
                log_sum = log_sum_exp(log_sum, t_lo);
                lo -= 1;
                grew = true;
            }
            let t_hi = log_term(hi + 1);
            if t_hi - log_sum > target || hi < 4 {
                log_sum = log_sum_exp(log_sum, t_hi);
                hi += 1;
                grew = true;
            }
            if !grew {
                break;
            }
            if hi - lo > 1_000_000 {
                return Err(Error::TailUnachievable {
                    requested: 1e-18,
                    reason: "sector weight normalization does not converge".into(),
                });
            }
        }
        // Both edge ratios are below the ratio one step out; bound the two
        // tails geometrically.
        let ratio_lo = (log_term(lo - 1) - log_term(lo)).exp();
        let ratio_hi = (log_term(hi + 1) - log_term(hi)).exp();
        let tail = (log_term(lo - 1).exp() / (T::one() - ratio_lo)
            + log_term(hi + 1).exp() / (T::one() - ratio_hi))
            / log_sum.exp();
        Ok(Self { p, c, log_k: log_sum, tail_rel: tail })
    }

    /// `ln K^c`.
    pub fn log_normalization(&self) -> T {
        self.log_k
    }

    /// Certified relative truncation error of `K^c`.
    pub fn tail_rel(&self) -> T {
        self.tail_rel
    }

    pub fn log_weight(&self, n: i64) -> T {
        let log_qp = ((T::one() - self.p) / self.p).ln();
        T::from_i64(n * (n + 1) / 2).unwrap() * log_qp - self.c * T::from_i64(n).unwrap() - self.log_k
    }

    /// `π^c{N = n}`.
    pub fn weight(&self, n: i64) -> T {
        self.log_weight(n).exp()
    }
}

/// Draws an exact sample of the product blocking measure on a window whose
/// certified outside-deviation probability is below `tail_eps`; sites
/// outside are set to the fills.
pub fn sample_blocking<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<T>,
    c: T,
    tail_eps: T,
    rng: &mut R,
) -> Result<Configuration> {
    let (lo, hi) = blocking_window(spec, c, tail_eps)?;
    let mut config = Configuration::ground(spec.lattice, spec.occupancy);
    for i in lo..=hi {
        let theta = theta_sequence(spec, c, i)?;
        let law = MarginalLaw::new(spec, theta)?;
        config.ensure_window(i);
        config.set(i, law.sample(rng));
    }
    Ok(config)
}

/// The certified sampling window `[lo, hi] ⊆ Λ`: outside it, the summed
/// per-site deviation bounds (`e^{θ_i}/f(ω_min+1)` on the left,
/// `e^{-θ_i} f(ω_max)` on the right) stay below `tail_eps`.
pub fn blocking_window<T: Scalar>(spec: &ModelSpec<T>, c: T, tail_eps: T) -> Result<(i64, i64)> {
    let log_pq = spec.kernel.log_pq(); // > 0
    let budget = tail_eps / lit(2.0);
    let geo = -(T::one() - (-log_pq).exp()).ln(); // -ln(1 - q/p)

    let lo = match spec.lattice.ell {
        Finite(ell) => ell,
        _ => {
            // omega_min finite here (countability); tail bound
            // sum_{i <= -L} e^{theta_i} / f(omega_min+1) = e^{theta_{-L}} / ((1-q/p) f(omega_min+1)).
            let omin = spec.occupancy.omega_min.expect_finite("omega_min");
            let f1 = (spec.kernel.f)(omin + 1);
            if f1 <= T::zero() {
                return Err(Error::TailUnachievable {
                    requested: tail_eps.to_f64().unwrap_or(f64::NAN),
                    reason: "f(omega_min + 1) = 0 defeats the left tail bound".into(),
                });
            }
            let mut l = 0i64;
            loop {
                let log_bound = spec.theta_at(c, -l) + geo - f1.ln();
                if log_bound < budget.ln() {
                    break -l;
                }
                l += 1;
                if l > 10_000_000 {
                    return Err(Error::TailUnachievable {
                        requested: tail_eps.to_f64().unwrap_or(f64::NAN),
                        reason: "left deviation window does not close".into(),
                    });
                }
            }
        }
    };
    let hi = match spec.lattice.r {
        Finite(r) => r,
        _ => {
            let omax = spec.occupancy.omega_max.expect_finite("omega_max");
            let fmax = (spec.kernel.f)(omax);
            let mut rr = 1i64;
            loop {
                let log_bound = -spec.theta_at(c, rr) + geo + fmax.ln();
                if log_bound < budget.ln() {
                    break rr;
                }
                rr += 1;
                if rr > 10_000_000 {
                    return Err(Error::TailUnachievable {
                        requested: tail_eps.to_f64().unwrap_or(f64::NAN),
                        reason: "right deviation window does not close".into(),
                    });
                }
            }
        }
    };
    Ok((lo, hi))
}

/// Certified bound on `μ^c{some site outside [lo, hi] deviates from its
/// fill}`: per-site deviation probabilities are at most
/// `e^{θ_i}/f(ω_min+1)` on the left and `e^{-θ_i} f(ω_max)` on the right,
/// and both sums close geometrically with ratio `q/p`.
pub fn deviation_tail_bound<T: Scalar>(
    spec: &ModelSpec<T>,
    c: T,
    lo: i64,
    hi: i64,
) -> Result<T> {
    let geo = T::one() - (-spec.kernel.log_pq()).exp(); // 1 - q/p
    let mut bound = T::zero();
    if !spec.lattice.ell.is_finite() {
        let omin = spec.occupancy.omega_min.expect_finite("omega_min");
        let f1 = (spec.kernel.f)(omin + 1);
        if f1 <= T::zero() {
            return Err(Error::TailUnachievable {
                requested: 0.0,
                reason: "f(omega_min + 1) = 0 defeats the left tail bound".into(),
            });
        }
        bound += spec.theta_at(c, lo - 1).exp() / (geo * f1);
    }
    if !spec.lattice.r.is_finite() {
        let omax = spec.occupancy.omega_max.expect_finite("omega_max");
        bound += (-spec.theta_at(c, hi + 1)).exp() * (spec.kernel.f)(omax) / geo;
    }
    Ok(bound)
}

/// Resolves the measure parameter: an anchored model fixes `c`, a free one
/// takes the requested value (default 0). A conflicting request is an
/// error rather than a silent override.
pub fn effective_c<T: Scalar>(spec: &ModelSpec<T>, requested: Option<T>) -> Result<T> {
    match (spec.c_anchor, requested) {
        (Some(a), Some(c)) if (a - c).abs() > lit(1e-12) => Err(Error::Incompatible(format!(
            "model '{}' anchors c = {a}, got c = {c}",
            spec.name
        ))),
        (Some(a), _) => Ok(a),
        (None, c) => Ok(c.unwrap_or_else(T::zero)),
    }
}

/// Rejection sampler for the conditional law `ν^n = μ^c(· | N = n)` on the
/// doubly infinite lattice.
pub fn sample_sector<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec<T>,
    c: T,
    n: i64,
    rng: &mut R,
    max_tries: u64,
) -> Result<Configuration> {
    if !spec.lattice.doubly_infinite() {
        return Err(Error::VolumeMismatch("a doubly infinite lattice for sector sampling".into()));
    }
    let tail_eps = lit(1e-12);
    for _ in 0..max_tries {
        let z = sample_blocking(spec, c, tail_eps, rng)?;
        if z.conserved_n()? == n {
            return Ok(z);
        }
    }
    Err(Error::MaxTriesExhausted { tries: max_tries, acceptance_rate: 0.0 })
}

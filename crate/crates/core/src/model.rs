//! Misanthrope-type model family: lattice, occupancy alphabet, factorized
//! bulk rates and boundary reservoirs, with structural validation and the
//! builtin model catalog.
//!
//! A model lives on the lattice `Λ = {i : ℓ-1 < i < r+1}` with single-site
//! alphabet `I = {z : ω_min-1 < z < ω_max+1}`. Bulk jump rates factorize as
//!
//! ```text
//!   p(y, z) = p · s(y, z+1) · f(y)       (right hop, departure y, arrival z)
//!   q(y, z) = q · s(y+1, z) · f(z)       (left hop)
//! ```
//!
//! with `p + q = 1`, `p > 1/2`, `f` non-decreasing, `s` non-increasing in
//! each argument, `f(ω_min) = 0` for finite `ω_min`, and `s` extended by
//! zero at `ω_max + 1` for finite `ω_max`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ext_int::{ExtInt, Finite, NegInf, PosInf};
use crate::scalar::{lit, Scalar};

/// Single-site rate function, `I -> R+`.
pub type RateFn<T> = Arc<dyn Fn(i64) -> T + Send + Sync>;
/// Pair rate function, `I x I -> R+` (never called outside the alphabet).
pub type PairRateFn<T> = Arc<dyn Fn(i64, i64) -> T + Send + Sync>;

/// Horizon at which limits of monotone rate functions are approximated when
/// the model does not declare them in closed form.
pub const DEFAULT_LIMIT_HORIZON: i64 = 1_000_000;

/// Default per-argument width of the eager validation range.
pub const DEFAULT_CHECK_WIDTH: i64 = 64;

/// Occupancy bounds `-inf <= ω_min <= 0 < ω_max <= inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OccupancyInterval {
    pub omega_min: ExtInt,
    pub omega_max: ExtInt,
}

impl OccupancyInterval {
    pub fn new(omega_min: ExtInt, omega_max: ExtInt) -> Result<Self> {
        if omega_min > 0 {
            return Err(Error::Structure(format!("omega_min = {omega_min} must be <= 0")));
        }
        if omega_max < 1 {
            return Err(Error::Structure(format!("omega_max = {omega_max} must be > 0")));
        }
        Ok(Self { omega_min, omega_max })
    }

    pub fn contains(&self, z: i64) -> bool {
        Finite(z) >= self.omega_min && Finite(z) <= self.omega_max
    }

    /// Number of letters in `I`, or `None` when infinite.
    pub fn len(&self) -> Option<i64> {
        match (self.omega_min, self.omega_max) {
            (Finite(a), Finite(b)) => Some(b - a + 1),
            _ => None,
        }
    }

    /// `I` intersected with `[lo_cap, hi_cap]`.
    pub fn clamped_range(&self, lo_cap: i64, hi_cap: i64) -> std::ops::RangeInclusive<i64> {
        self.omega_min.clamp_to(lo_cap, hi_cap)..=self.omega_max.clamp_to(lo_cap, hi_cap)
    }

    /// Default validation range: the full alphabet when finite, otherwise a
    /// window of `DEFAULT_CHECK_WIDTH` values around the origin.
    pub fn default_check_range(&self) -> std::ops::RangeInclusive<i64> {
        self.clamped_range(-DEFAULT_CHECK_WIDTH / 2, DEFAULT_CHECK_WIDTH)
    }

    /// The difference `ω_max - ω_min`; finite only when both bounds are.
    pub fn span(&self) -> Option<i64> {
        match (self.omega_min, self.omega_max) {
            (Finite(a), Finite(b)) => Some(b - a),
            _ => None,
        }
    }
}

/// Lattice extents `-inf <= ℓ <= 0 <= r <= inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSpec {
    pub ell: ExtInt,
    pub r: ExtInt,
}

impl LatticeSpec {
    pub fn new(ell: ExtInt, r: ExtInt) -> Result<Self> {
        if ell > 0 {
            return Err(Error::Structure(format!("ell = {ell} must be <= 0")));
        }
        if r < 0 {
            return Err(Error::Structure(format!("r = {r} must be >= 0")));
        }
        Ok(Self { ell, r })
    }

    pub const WHOLE_LINE: LatticeSpec = LatticeSpec { ell: NegInf, r: PosInf };

    pub fn contains(&self, i: i64) -> bool {
        Finite(i) >= self.ell && Finite(i) <= self.r
    }

    pub fn doubly_infinite(&self) -> bool {
        self.ell == NegInf && self.r == PosInf
    }

    pub fn site_count(&self) -> Option<i64> {
        match (self.ell, self.r) {
            (Finite(a), Finite(b)) => Some(b - a + 1),
            _ => None,
        }
    }
}

/// The factorized bulk rate kernel `(p, f, s)`.
///
/// `theta_min_decl` / `theta_max_decl` are closed-form limits of `ln f` at
/// the infinite alphabet ends, declared by the builtin constructors; when
/// absent the limit is approximated by evaluating `f` at
/// `DEFAULT_LIMIT_HORIZON` (monotonicity of `f` brackets the true limit
/// from the correct side).
#[derive(Clone)]
pub struct RateKernel<T: Scalar> {
    pub p: T,
    pub f: RateFn<T>,
    pub s: PairRateFn<T>,
    pub theta_min_decl: Option<T>,
    pub theta_max_decl: Option<T>,
}

impl<T: Scalar> RateKernel<T> {
    pub fn new(p: T, f: RateFn<T>, s: PairRateFn<T>) -> Result<Self> {
        if !(p > lit(0.5) && p <= T::one()) {
            return Err(Error::Parameter(format!("asymmetry p = {p} must lie in (1/2, 1]")));
        }
        Ok(Self { p, f, s, theta_min_decl: None, theta_max_decl: None })
    }

    pub fn q(&self) -> T {
        T::one() - self.p
    }

    /// `ln p - ln q`, the increment of the arithmetic theta sequence.
    pub fn log_pq(&self) -> T {
        self.p.ln() - self.q().ln()
    }
}

/// Left reservoir rates: `p_ell` injects into site ℓ, `q_ell` ejects.
#[derive(Clone)]
pub struct LeftBoundary<T: Scalar> {
    pub p_ell: RateFn<T>,
    pub q_ell: RateFn<T>,
}

/// Right reservoir rates: `p_r` ejects from site r, `q_r` injects.
#[derive(Clone)]
pub struct RightBoundary<T: Scalar> {
    pub p_r: RateFn<T>,
    pub q_r: RateFn<T>,
}

/// A single violated constraint found during validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub y: i64,
    pub z: i64,
    pub inequality: &'static str,
}

/// Outcome of a structural validation pass. A report is a value, not an
/// exception: negative tests construct violating specs on purpose.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A fully specified model instance.
#[derive(Clone)]
pub struct ModelSpec<T: Scalar> {
    pub name: String,
    pub lattice: LatticeSpec,
    pub occupancy: OccupancyInterval,
    pub kernel: RateKernel<T>,
    pub left: Option<LeftBoundary<T>>,
    pub right: Option<RightBoundary<T>>,
    /// The theta anchor the boundary rates were built against, when any
    /// finite end carries a reservoir. Doubly infinite models leave this
    /// `None`; the measure parameter `c` is then free.
    pub c_anchor: Option<T>,
}

impl<T: Scalar> std::fmt::Debug for ModelSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("lattice", &self.lattice)
            .field("occupancy", &self.occupancy)
            .field("p", &self.kernel.p)
            .field("c_anchor", &self.c_anchor)
            .finish()
    }
}

impl<T: Scalar> ModelSpec<T> {
    /// Builds and validates a spec: structural invariants are errors,
    /// attractivity/vanishing violations over the default check range are
    /// reported as a `Structure` error listing the first few offenders.
    pub fn new(
        name: impl Into<String>,
        lattice: LatticeSpec,
        occupancy: OccupancyInterval,
        kernel: RateKernel<T>,
        left: Option<LeftBoundary<T>>,
        right: Option<RightBoundary<T>>,
        c_anchor: Option<T>,
    ) -> Result<Self> {
        let spec = Self::new_unchecked(name, lattice, occupancy, kernel, left, right, c_anchor);
        spec.validate_structure()?;
        let range = spec.occupancy.default_check_range();
        let report = spec.validate_attractivity(*range.start(), *range.end());
        if !report.passed() {
            let sample: Vec<_> = report.violations.iter().take(4).collect();
            return Err(Error::Structure(format!(
                "{} constraint violation(s), e.g. {:?}",
                report.violations.len(),
                sample
            )));
        }
        Ok(spec)
    }

    /// Assembles a spec without any validation. Used by negative tests.
    pub fn new_unchecked(
        name: impl Into<String>,
        lattice: LatticeSpec,
        occupancy: OccupancyInterval,
        kernel: RateKernel<T>,
        left: Option<LeftBoundary<T>>,
        right: Option<RightBoundary<T>>,
        c_anchor: Option<T>,
    ) -> Self {
        Self { name: name.into(), lattice, occupancy, kernel, left, right, c_anchor }
    }

    fn validate_structure(&self) -> Result<()> {
        // Countability of the state space: an infinite lattice end requires
        // the matching occupancy bound to be finite.
        if self.lattice.ell == NegInf && !self.occupancy.omega_min.is_finite() {
            return Err(Error::Structure(
                "ell = -inf requires finite omega_min for a countable state space".into(),
            ));
        }
        if self.lattice.r == PosInf && !self.occupancy.omega_max.is_finite() {
            return Err(Error::Structure(
                "r = inf requires finite omega_max for a countable state space".into(),
            ));
        }
        // Finite theta bounds force the corresponding lattice end finite for
        // the blocking measure to exist.
        let (tmin, tmax) = self.theta_bounds();
        if tmax.is_finite() && self.lattice.r == PosInf {
            return Err(Error::Incompatible(format!(
                "theta_max = {tmax} is finite, which forces r < inf"
            )));
        }
        if tmin.is_finite() && self.lattice.ell == NegInf {
            return Err(Error::Incompatible(format!(
                "theta_min = {tmin} is finite, which forces ell > -inf"
            )));
        }
        if !(tmin < tmax) {
            return Err(Error::Structure(format!(
                "empty theta interval ({tmin}, {tmax}); f is too close to constant"
            )));
        }
        // Reservoirs exist exactly at finite ends.
        if self.lattice.ell.is_finite() != self.left.is_some() {
            return Err(Error::Structure("left boundary rates must be present iff ell is finite".into()));
        }
        if self.lattice.r.is_finite() != self.right.is_some() {
            return Err(Error::Structure("right boundary rates must be present iff r is finite".into()));
        }
        if let Some(omin) = self.occupancy.omega_min.finite() {
            if (self.kernel.f)(omin) != T::zero() {
                return Err(Error::Structure(format!("f(omega_min) = f({omin}) must vanish")));
            }
        }
        Ok(())
    }

    /// Bulk right-hop rate `p(y, z) = p s(y, z+1) f(y)` for a particle moving
    /// from a site with occupancy `y` onto a neighbor with occupancy `z`.
    pub fn bulk_rate_p(&self, y: i64, z: i64) -> Result<T> {
        self.check_alphabet(y)?;
        self.check_alphabet(z)?;
        Ok(self.bulk_p(y, z))
    }

    /// Bulk left-hop rate `q(y, z) = q s(y+1, z) f(z)`.
    pub fn bulk_rate_q(&self, y: i64, z: i64) -> Result<T> {
        self.check_alphabet(y)?;
        self.check_alphabet(z)?;
        Ok(self.bulk_q(y, z))
    }

    /// Unchecked fast path for the simulator.
    pub(crate) fn bulk_p(&self, y: i64, z: i64) -> T {
        if self.occupancy.omega_min == y || self.occupancy.omega_max == z {
            return T::zero();
        }
        self.kernel.p * (self.kernel.s)(y, z + 1) * (self.kernel.f)(y)
    }

    pub(crate) fn bulk_q(&self, y: i64, z: i64) -> T {
        if self.occupancy.omega_max == y || self.occupancy.omega_min == z {
            return T::zero();
        }
        self.kernel.q() * (self.kernel.s)(y + 1, z) * (self.kernel.f)(z)
    }

    fn check_alphabet(&self, z: i64) -> Result<()> {
        if self.occupancy.contains(z) {
            Ok(())
        } else {
            Err(Error::OutOfAlphabet {
                value: z,
                alphabet: format!("[{}, {}]", self.occupancy.omega_min, self.occupancy.omega_max),
            })
        }
    }

    /// `(theta_min, theta_max)` per the Cocozza-Thivent convention: infinite
    /// on any side with a finite occupancy bound, otherwise the limit of
    /// `ln f`.
    pub fn theta_bounds(&self) -> (T, T) {
        let tmin = if self.occupancy.omega_min.is_finite() {
            T::neg_infinity()
        } else {
            self.kernel
                .theta_min_decl
                .unwrap_or_else(|| (self.kernel.f)(-DEFAULT_LIMIT_HORIZON).ln())
        };
        let tmax = if self.occupancy.omega_max.is_finite() {
            T::infinity()
        } else {
            self.kernel
                .theta_max_decl
                .unwrap_or_else(|| (self.kernel.f)(DEFAULT_LIMIT_HORIZON).ln())
        };
        (tmin, tmax)
    }

    /// `theta_i = c + i (ln p - ln q)` without the bounds check.
    pub fn theta_at(&self, c: T, i: i64) -> T {
        c + T::from_i64(i).unwrap() * self.kernel.log_pq()
    }

    /// Checks the eight attractivity inequalities and the structural
    /// vanishing constraints over `y, z` in `[lo, hi] ∩ I`, reporting every
    /// violated triple.
    pub fn validate_attractivity(&self, lo: i64, hi: i64) -> ValidationReport {
        let mut violations = Vec::new();
        let range: Vec<i64> = self.occupancy.clamped_range(lo, hi).collect();
        let ge = |a: T, b: T| a >= b - (a.abs() + b.abs() + T::one()) * lit(1e-12);

        for &y in &range {
            for &z in &range {
                if !self.occupancy.contains(z + 1) {
                    continue;
                }
                if !ge(self.bulk_p(z + 1, y), self.bulk_p(z, y)) {
                    violations.push(Violation { y, z, inequality: "bulk-p-departure-monotone" });
                }
                if !ge(self.bulk_p(y, z), self.bulk_p(y, z + 1)) {
                    violations.push(Violation { y, z, inequality: "bulk-p-arrival-monotone" });
                }
                if !ge(self.bulk_q(y, z + 1), self.bulk_q(y, z)) {
                    violations.push(Violation { y, z, inequality: "bulk-q-departure-monotone" });
                }
                if !ge(self.bulk_q(z, y), self.bulk_q(z + 1, y)) {
                    violations.push(Violation { y, z, inequality: "bulk-q-arrival-monotone" });
                }
            }
        }

        for w in range.windows(2) {
            let (z, z1) = (w[0], w[1]);
            if !ge((self.kernel.f)(z1), (self.kernel.f)(z)) {
                violations.push(Violation { y: z, z: z1, inequality: "monotone-f" });
            }
            if let Some(b) = &self.left {
                if !ge((b.p_ell)(z), (b.p_ell)(z1)) {
                    violations.push(Violation { y: z, z: z1, inequality: "left-p-non-increasing" });
                }
                if !ge((b.q_ell)(z1), (b.q_ell)(z)) {
                    violations.push(Violation { y: z, z: z1, inequality: "left-q-non-decreasing" });
                }
            }
            if let Some(b) = &self.right {
                if !ge((b.p_r)(z1), (b.p_r)(z)) {
                    violations.push(Violation { y: z, z: z1, inequality: "right-p-non-decreasing" });
                }
                if !ge((b.q_r)(z), (b.q_r)(z1)) {
                    violations.push(Violation { y: z, z: z1, inequality: "right-q-non-increasing" });
                }
            }
        }

        for &z in &range {
            if let Some(omin) = self.occupancy.omega_min.finite() {
                if self.bulk_p(omin, z) != T::zero() {
                    violations.push(Violation { y: omin, z, inequality: "bulkb-p-empty-departure" });
                }
                if self.bulk_q(z, omin) != T::zero() {
                    violations.push(Violation { y: z, z: omin, inequality: "bulkb-q-full-arrival" });
                }
            }
            if let Some(omax) = self.occupancy.omega_max.finite() {
                if self.bulk_p(z, omax) != T::zero() {
                    violations.push(Violation { y: z, z: omax, inequality: "bulkb-p-full-arrival" });
                }
                if self.bulk_q(omax, z) != T::zero() {
                    violations.push(Violation { y: omax, z, inequality: "bulkb-q-empty-departure" });
                }
            }
        }
        if let Some(b) = &self.left {
            if let Some(omin) = self.occupancy.omega_min.finite() {
                if (b.q_ell)(omin) != T::zero() {
                    violations.push(Violation { y: omin, z: omin, inequality: "leftb-q-vanishing" });
                }
            }
            if let Some(omax) = self.occupancy.omega_max.finite() {
                if (b.p_ell)(omax) != T::zero() {
                    violations.push(Violation { y: omax, z: omax, inequality: "leftb-p-vanishing" });
                }
            }
        }
        if let Some(b) = &self.right {
            if let Some(omax) = self.occupancy.omega_max.finite() {
                if (b.q_r)(omax) != T::zero() {
                    violations.push(Violation { y: omax, z: omax, inequality: "rightb-q-vanishing" });
                }
            }
            if let Some(omin) = self.occupancy.omega_min.finite() {
                if (b.p_r)(omin) != T::zero() {
                    violations.push(Violation { y: omin, z: omin, inequality: "rightb-p-vanishing" });
                }
            }
        }

        ValidationReport { violations }
    }
}

/// Compliant reservoir pair for a finite left end with boundary parameter
/// `theta_ell`: `p_ell(z) = e^{theta_ell} 1{z != ω_max}`, `q_ell = f`. These
/// satisfy the left balance condition `q_ell(z+1)/p_ell(z) = f(z+1)/e^{theta_ell}`
/// together with the vanishing and monotonicity constraints.
pub fn left_boundary_from_theta<T: Scalar>(
    f: RateFn<T>,
    theta_ell: T,
    omega_max: ExtInt,
) -> LeftBoundary<T> {
    let inject = theta_ell.exp();
    LeftBoundary {
        p_ell: Arc::new(move |z| if omega_max == z { T::zero() } else { inject }),
        q_ell: f,
    }
}

/// Mirror image for a finite right end: `p_r = f`,
/// `q_r(z) = e^{theta_r} 1{z != ω_max}`.
pub fn right_boundary_from_theta<T: Scalar>(
    f: RateFn<T>,
    theta_r: T,
    omega_max: ExtInt,
) -> RightBoundary<T> {
    let inject = theta_r.exp();
    RightBoundary {
        p_r: f,
        q_r: Arc::new(move |z| if omega_max == z { T::zero() } else { inject }),
    }
}

/// The builtin model catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinModel {
    Asep,
    KExclusion,
    ZrpRate1,
    IndependentWalkers,
    QZrp,
    AreYouAlone,
    Bricklayers,
}

impl BuiltinModel {
    pub const ALL: [BuiltinModel; 7] = [
        BuiltinModel::Asep,
        BuiltinModel::KExclusion,
        BuiltinModel::ZrpRate1,
        BuiltinModel::IndependentWalkers,
        BuiltinModel::QZrp,
        BuiltinModel::AreYouAlone,
        BuiltinModel::Bricklayers,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            BuiltinModel::Asep => "asep",
            BuiltinModel::KExclusion => "k_exclusion",
            BuiltinModel::ZrpRate1 => "zrp_rate1",
            BuiltinModel::IndependentWalkers => "independent_walkers",
            BuiltinModel::QZrp => "q_zrp",
            BuiltinModel::AreYouAlone => "are_you_alone",
            BuiltinModel::Bricklayers => "bricklayers",
        }
    }
}

impl std::str::FromStr for BuiltinModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BuiltinModel::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::UnknownModel(s.into()))
    }
}

/// Parameters for the builtin constructors. Unused fields are ignored by
/// models that do not need them; missing required fields are errors.
#[derive(Debug, Clone)]
pub struct BuiltinParams<T: Scalar> {
    pub p: T,
    pub k: Option<i64>,
    pub q_hat: Option<T>,
    pub epsilon: Option<T>,
    pub delta: Option<T>,
    pub beta: Option<T>,
    pub ell: Option<ExtInt>,
    pub r: Option<ExtInt>,
    pub c: Option<T>,
}

impl<T: Scalar> BuiltinParams<T> {
    pub fn new(p: T) -> Self {
        Self { p, k: None, q_hat: None, epsilon: None, delta: None, beta: None, ell: None, r: None, c: None }
    }

    pub fn with_lattice(mut self, ell: ExtInt, r: ExtInt) -> Self {
        self.ell = Some(ell);
        self.r = Some(r);
        self
    }

    pub fn with_c(mut self, c: T) -> Self {
        self.c = Some(c);
        self
    }

    pub fn with_k(mut self, k: i64) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_q_hat(mut self, q_hat: T) -> Self {
        self.q_hat = Some(q_hat);
        self
    }

    pub fn with_epsilon_delta(mut self, epsilon: T, delta: T) -> Self {
        self.epsilon = Some(epsilon);
        self.delta = Some(delta);
        self
    }

    pub fn with_beta(mut self, beta: T) -> Self {
        self.beta = Some(beta);
        self
    }
}

/// Constructs a validated builtin model.
///
/// For models whose `theta_max` is finite, the right end must be finite and
/// the reservoir takes the natural limit rates `p_r(y) = lim_z p(y, z)`,
/// `q_r(y) = lim_z q(y, z)`; these pin the anchor to
/// `c = theta_max - (r+1)(ln p - ln q)` and an explicit conflicting `c` is
/// rejected. Models with free boundaries build compliant reservoirs from
/// the supplied `c` (default 0).
pub fn builtin<T: Scalar>(model: BuiltinModel, params: BuiltinParams<T>) -> Result<ModelSpec<T>> {
    match model {
        BuiltinModel::Asep => builtin_exclusion(params, 1, "asep"),
        BuiltinModel::KExclusion => {
            let k = params.k.ok_or_else(|| Error::Parameter("k_exclusion requires K".into()))?;
            if k < 2 {
                return Err(Error::Parameter(format!("k_exclusion requires K >= 2, got {k}")));
            }
            builtin_exclusion(params, k, "k_exclusion")
        }
        BuiltinModel::ZrpRate1 => {
            let f: RateFn<T> = Arc::new(|y| if y > 0 { T::one() } else { T::zero() });
            builtin_zrp_family(params, "zrp_rate1", f, T::zero(), |p, _q, y| {
                // lim_z p(y, z) = p 1{y > 0},  lim_z q(y, z) = q.
                if y > 0 { p } else { T::zero() }
            }, |_p, q, _y| q)
        }
        BuiltinModel::QZrp => {
            let q_hat = params.q_hat.ok_or_else(|| Error::Parameter("q_zrp requires q_hat".into()))?;
            if !(q_hat >= T::zero() && q_hat < T::one()) {
                return Err(Error::Parameter(format!("q_zrp requires q_hat in [0, 1), got {q_hat}")));
            }
            let f: RateFn<T> = Arc::new(move |y| {
                if y > 0 { T::one() - q_hat.powi(y as i32) } else { T::zero() }
            });
            builtin_zrp_family(params, "q_zrp", f.clone(), T::zero(), move |p, _q, y| p * f(y), |_p, q, _y| q)
        }
        BuiltinModel::IndependentWalkers => builtin_independent_walkers(params),
        BuiltinModel::AreYouAlone => builtin_are_you_alone(params),
        BuiltinModel::Bricklayers => builtin_bricklayers(params),
    }
}

/// ASEP (`K = 1`) and K-exclusion share everything but `f` and `ω_max`.
fn builtin_exclusion<T: Scalar>(params: BuiltinParams<T>, k: i64, name: &str) -> Result<ModelSpec<T>> {
    let occupancy = OccupancyInterval::new(Finite(0), Finite(k))?;
    let lattice = LatticeSpec::new(params.ell.unwrap_or(NegInf), params.r.unwrap_or(PosInf))?;
    let f: RateFn<T> = if k == 1 {
        Arc::new(|y| T::from_i64(y).unwrap())
    } else {
        Arc::new(|y| if y >= 1 { T::one() } else { T::zero() })
    };
    let s: PairRateFn<T> = Arc::new(move |y, z| if y <= k && z <= k { T::one() } else { T::zero() });
    let kernel = RateKernel::new(params.p, f.clone(), s)?;
    let c = params.c.unwrap_or_else(T::zero);
    let anchored = lattice.ell.is_finite() || lattice.r.is_finite();
    let left = lattice.ell.finite().map(|ell| {
        let theta = c + T::from_i64(ell).unwrap() * kernel.log_pq();
        left_boundary_from_theta(f.clone(), theta, occupancy.omega_max)
    });
    let right = lattice.r.finite().map(|r| {
        let theta = c + T::from_i64(r).unwrap() * kernel.log_pq();
        right_boundary_from_theta(f.clone(), theta, occupancy.omega_max)
    });
    ModelSpec::new(name, lattice, occupancy, kernel, left, right, anchored.then_some(c))
}

/// Common construction for zero-range models with finite `theta_max`:
/// half-infinite (or finite) volume with the natural-limit right reservoir.
fn builtin_zrp_family<T: Scalar>(
    params: BuiltinParams<T>,
    name: &str,
    f: RateFn<T>,
    theta_max: T,
    p_r_limit: impl Fn(T, T, i64) -> T + Send + Sync + 'static,
    q_r_limit: impl Fn(T, T, i64) -> T + Send + Sync + 'static,
) -> Result<ModelSpec<T>> {
    let occupancy = OccupancyInterval::new(Finite(0), PosInf)?;
    let r = params.r.unwrap_or(Finite(0));
    let r_val = match r {
        Finite(v) => v,
        _ => {
            return Err(Error::Incompatible(format!(
                "{name}: finite theta_max = {theta_max} forces r < inf"
            )))
        }
    };
    let lattice = LatticeSpec::new(params.ell.unwrap_or(NegInf), r)?;
    let s: PairRateFn<T> = Arc::new(|_, _| T::one());
    let mut kernel = RateKernel::new(params.p, f.clone(), s)?;
    kernel.theta_min_decl = Some(T::neg_infinity());
    kernel.theta_max_decl = Some(theta_max);

    // The natural reservoir realizes theta_{r+1} = theta_max.
    let c_forced = theta_max - T::from_i64(r_val + 1).unwrap() * kernel.log_pq();
    if let Some(c) = params.c {
        if (c - c_forced).abs() > lit(1e-12) {
            return Err(Error::Parameter(format!(
                "{name}: the natural right reservoir fixes c = {c_forced}, got c = {c}"
            )));
        }
    }
    let (p, q) = (kernel.p, kernel.q());
    let right = Some(RightBoundary {
        p_r: Arc::new(move |y| p_r_limit(p, q, y)),
        q_r: Arc::new(move |y| q_r_limit(p, q, y)),
    });
    let left = lattice.ell.finite().map(|ell| {
        let theta = c_forced + T::from_i64(ell).unwrap() * kernel.log_pq();
        left_boundary_from_theta(f.clone(), theta, occupancy.omega_max)
    });
    ModelSpec::new(name, lattice, occupancy, kernel, left, right, Some(c_forced))
}

fn builtin_independent_walkers<T: Scalar>(params: BuiltinParams<T>) -> Result<ModelSpec<T>> {
    let occupancy = OccupancyInterval::new(Finite(0), PosInf)?;
    // omega_max = inf forces r < inf for countability even though
    // theta_max = inf; the natural-limit reservoir rates diverge, so a
    // compliant reservoir is built from c instead.
    let r = params.r.unwrap_or(Finite(0));
    if !r.is_finite() {
        return Err(Error::Incompatible("independent_walkers: omega_max = inf forces r < inf".into()));
    }
    let lattice = LatticeSpec::new(params.ell.unwrap_or(NegInf), r)?;
    let f: RateFn<T> = Arc::new(|y| T::from_i64(y.max(0)).unwrap());
    let s: PairRateFn<T> = Arc::new(|_, _| T::one());
    let mut kernel = RateKernel::new(params.p, f.clone(), s)?;
    kernel.theta_min_decl = Some(T::neg_infinity());
    kernel.theta_max_decl = Some(T::infinity());
    let c = params.c.unwrap_or_else(T::zero);
    let left = lattice.ell.finite().map(|ell| {
        let theta = c + T::from_i64(ell).unwrap() * kernel.log_pq();
        left_boundary_from_theta(f.clone(), theta, occupancy.omega_max)
    });
    let right = lattice.r.finite().map(|rv| {
        let theta = c + T::from_i64(rv).unwrap() * kernel.log_pq();
        right_boundary_from_theta(f.clone(), theta, occupancy.omega_max)
    });
    ModelSpec::new("independent_walkers", lattice, occupancy, kernel, left, right, Some(c))
}

fn builtin_are_you_alone<T: Scalar>(params: BuiltinParams<T>) -> Result<ModelSpec<T>> {
    let eps = params.epsilon.ok_or_else(|| Error::Parameter("are_you_alone requires epsilon".into()))?;
    let delta = params.delta.ok_or_else(|| Error::Parameter("are_you_alone requires delta".into()))?;
    if !(eps >= T::zero() && eps < T::one()) {
        return Err(Error::Parameter(format!("are_you_alone requires 0 <= epsilon < 1, got {eps}")));
    }
    if delta.abs() > eps {
        return Err(Error::Parameter(format!(
            "are_you_alone requires |delta| <= epsilon, got delta = {delta}, epsilon = {eps}"
        )));
    }
    let occupancy = OccupancyInterval::new(Finite(0), PosInf)?;
    let r = params.r.unwrap_or(Finite(0));
    let r_val = r.finite().ok_or_else(|| {
        Error::Incompatible("are_you_alone: finite theta_max forces r < inf".into())
    })?;
    let lattice = LatticeSpec::new(params.ell.unwrap_or(NegInf), r)?;
    let one = T::one();
    let f: RateFn<T> = Arc::new(move |y| match y {
        i64::MIN..=0 => T::zero(),
        1 => one - eps,
        _ => one + eps,
    });
    // s is only evaluated at arguments >= 1 (a zero f factor masks the rest).
    let s: PairRateFn<T> = Arc::new(move |y, z| match (y >= 2, z >= 2) {
        (false, false) => (one - delta) / (one - eps),
        (true, true) => (one + delta) / (one + eps),
        _ => one,
    });
    let mut kernel = RateKernel::new(params.p, f, s)?;
    kernel.theta_min_decl = Some(T::neg_infinity());
    let theta_max = (one + eps).ln();
    kernel.theta_max_decl = Some(theta_max);

    let c_forced = theta_max - T::from_i64(r_val + 1).unwrap() * kernel.log_pq();
    if let Some(c) = params.c {
        if (c - c_forced).abs() > lit(1e-12) {
            return Err(Error::Parameter(format!(
                "are_you_alone: the natural right reservoir fixes c = {c_forced}, got c = {c}"
            )));
        }
    }
    let (p, q) = (kernel.p, kernel.q());
    let right = Some(RightBoundary {
        // lim_z p(y, z) and lim_z q(y, z) of the rate table.
        p_r: Arc::new(move |y| match y {
            i64::MIN..=0 => T::zero(),
            1 => p * (one - eps),
            _ => p * (one + delta),
        }),
        q_r: Arc::new(move |y| if y <= 0 { q * (one + eps) } else { q * (one + delta) }),
    });
    let f_for_left: RateFn<T> = Arc::new(move |y| match y {
        i64::MIN..=0 => T::zero(),
        1 => one - eps,
        _ => one + eps,
    });
    let left = lattice.ell.finite().map(|ell| {
        let theta = c_forced + T::from_i64(ell).unwrap() * kernel.log_pq();
        left_boundary_from_theta(f_for_left.clone(), theta, occupancy.omega_max)
    });
    ModelSpec::new("are_you_alone", lattice, occupancy, kernel, left, right, Some(c_forced))
}

fn builtin_bricklayers<T: Scalar>(params: BuiltinParams<T>) -> Result<ModelSpec<T>> {
    let beta = params.beta.ok_or_else(|| Error::Parameter("bricklayers requires beta".into()))?;
    if beta <= T::zero() {
        return Err(Error::Parameter(format!("bricklayers requires beta > 0, got {beta}")));
    }
    let occupancy = OccupancyInterval::new(NegInf, PosInf)?;
    // Both occupancy bounds infinite: countability forces both lattice ends
    // finite.
    let ell = params.ell.unwrap_or(Finite(-2));
    let r = params.r.unwrap_or(Finite(2));
    if !ell.is_finite() || !r.is_finite() {
        return Err(Error::Incompatible("bricklayers: unbounded occupancies force finite ell and r".into()));
    }
    let lattice = LatticeSpec::new(ell, r)?;
    let half = lit::<T>(0.5);
    let f: RateFn<T> = Arc::new(move |z| (beta * (T::from_i64(z).unwrap() - half)).exp());
    let f_s = f.clone();
    let s: PairRateFn<T> = Arc::new(move |y, z| T::one() + (f_s(y) * f_s(z)).recip());
    let mut kernel = RateKernel::new(params.p, f.clone(), s)?;
    kernel.theta_min_decl = Some(T::neg_infinity());
    kernel.theta_max_decl = Some(T::infinity());
    let c = params.c.unwrap_or_else(T::zero);
    let theta_ell = c + T::from_i64(ell.expect_finite("ell")).unwrap() * kernel.log_pq();
    let theta_r = c + T::from_i64(r.expect_finite("r")).unwrap() * kernel.log_pq();
    let left = Some(left_boundary_from_theta(f.clone(), theta_ell, occupancy.omega_max));
    let right = Some(right_boundary_from_theta(f, theta_r, occupancy.omega_max));
    ModelSpec::new("bricklayers", lattice, occupancy, kernel, left, right, Some(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asep(p: f64) -> ModelSpec<f64> {
        builtin(BuiltinModel::Asep, BuiltinParams::new(p)).unwrap()
    }

    #[test]
    fn asep_bulk_rates() {
        let spec = asep(0.7);
        assert_eq!(spec.bulk_rate_p(1, 0).unwrap(), 0.7);
        assert_eq!(spec.bulk_rate_p(0, 0).unwrap(), 0.0);
        assert_eq!(spec.bulk_rate_p(1, 1).unwrap(), 0.0);
        assert!((spec.bulk_rate_q(0, 1).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(spec.bulk_rate_q(1, 1).unwrap(), 0.0);
    }

    #[test]
    fn out_of_alphabet_is_a_domain_error() {
        let spec = asep(0.7);
        assert!(matches!(spec.bulk_rate_p(2, 0), Err(Error::OutOfAlphabet { .. })));
    }

    #[test]
    fn are_you_alone_rate_table() {
        let mut params = BuiltinParams::<f64>::new(0.7);
        params.epsilon = Some(0.2);
        params.delta = Some(0.1);
        let spec = builtin(BuiltinModel::AreYouAlone, params).unwrap();
        assert!((spec.bulk_rate_p(1, 0).unwrap() - 0.7 * 0.9).abs() < 1e-15);
        assert!((spec.bulk_rate_q(3, 1).unwrap() - 0.3 * 0.8).abs() < 1e-15);
        assert!((spec.bulk_rate_p(2, 0).unwrap() - 0.7 * 1.2).abs() < 1e-15);
        assert!((spec.bulk_rate_p(2, 1).unwrap() - 0.7 * 1.1).abs() < 1e-15);
        assert!((spec.bulk_rate_q(0, 2).unwrap() - 0.3 * 1.2).abs() < 1e-15);
    }

    #[test]
    fn epsilon_equal_to_abs_delta_is_allowed() {
        let mut params = BuiltinParams::<f64>::new(0.7);
        params.epsilon = Some(0.2);
        params.delta = Some(-0.2);
        assert!(builtin(BuiltinModel::AreYouAlone, params).is_ok());
    }

    #[test]
    fn theta_bounds_per_model() {
        let spec = asep(0.7);
        assert_eq!(spec.theta_bounds(), (f64::NEG_INFINITY, f64::INFINITY));

        let zrp = builtin(BuiltinModel::ZrpRate1, BuiltinParams::<f64>::new(0.7)).unwrap();
        assert_eq!(zrp.theta_bounds(), (f64::NEG_INFINITY, 0.0));

        let mut params = BuiltinParams::<f64>::new(0.7);
        params.q_hat = Some(0.5);
        let qzrp = builtin(BuiltinModel::QZrp, params).unwrap();
        assert_eq!(qzrp.theta_bounds(), (f64::NEG_INFINITY, 0.0));
    }

    #[test]
    fn builtin_attractivity_passes_on_wide_range() {
        for (model, mut params) in [
            (BuiltinModel::Asep, BuiltinParams::<f64>::new(0.7)),
            (BuiltinModel::KExclusion, BuiltinParams::<f64>::new(0.7)),
            (BuiltinModel::ZrpRate1, BuiltinParams::<f64>::new(0.7)),
            (BuiltinModel::IndependentWalkers, BuiltinParams::<f64>::new(0.7)),
            (BuiltinModel::QZrp, BuiltinParams::<f64>::new(0.7)),
            (BuiltinModel::AreYouAlone, BuiltinParams::<f64>::new(0.7)),
            (BuiltinModel::Bricklayers, BuiltinParams::<f64>::new(0.7)),
        ] {
            params.k = Some(3);
            params.q_hat = Some(0.5);
            params.epsilon = Some(0.3);
            params.delta = Some(0.1);
            params.beta = Some(2f64.ln());
            let spec = builtin(model, params).unwrap();
            let report = spec.validate_attractivity(-20, 20);
            assert!(report.passed(), "{}: {:?}", spec.name, report.violations);
        }
    }

    #[test]
    fn decreasing_f_reports_monotone_violation() {
        // Modified ASEP with f(0) = 1, f(1) = 0 contradicts attractivity.
        let f: RateFn<f64> = Arc::new(|y| if y == 0 { 1.0 } else { 0.0 });
        let s: PairRateFn<f64> = Arc::new(|y, z| if y <= 1 && z <= 1 { 1.0 } else { 0.0 });
        let spec = ModelSpec::new_unchecked(
            "bad_asep",
            LatticeSpec::WHOLE_LINE,
            OccupancyInterval::new(Finite(0), Finite(1)).unwrap(),
            RateKernel::new(0.7, f, s).unwrap(),
            None,
            None,
            None,
        );
        let report = spec.validate_attractivity(0, 1);
        assert!(report.violations.iter().any(|v| v.inequality == "monotone-f"));
    }

    #[test]
    fn zrp_natural_reservoir() {
        let mut params = BuiltinParams::<f64>::new(0.7);
        params.ell = Some(NegInf);
        params.r = Some(Finite(0));
        let spec = builtin(BuiltinModel::ZrpRate1, params).unwrap();
        let right = spec.right.as_ref().unwrap();
        assert_eq!((right.p_r)(0), 0.0);
        assert!(((right.p_r)(3) - 0.7).abs() < 1e-15);
        assert!(((right.q_r)(0) - 0.3).abs() < 1e-15);
        // Natural reservoir pins c = theta_max - (r+1) ln(p/q).
        let expected_c = -(0.7f64 / 0.3).ln();
        assert!((spec.c_anchor.unwrap() - expected_c).abs() < 1e-12);
    }

    #[test]
    fn conflicting_c_with_natural_reservoir_is_rejected() {
        let mut params = BuiltinParams::<f64>::new(0.7);
        params.c = Some(1.0);
        assert!(matches!(builtin(BuiltinModel::ZrpRate1, params), Err(Error::Parameter(_))));
    }

    #[test]
    fn k_exclusion_requires_k_at_least_two() {
        let mut params = BuiltinParams::<f64>::new(0.7);
        params.k = Some(1);
        assert!(matches!(builtin(BuiltinModel::KExclusion, params), Err(Error::Parameter(_))));
    }

    #[test]
    fn zrp_on_doubly_infinite_volume_is_incompatible() {
        let mut params = BuiltinParams::<f64>::new(0.7);
        params.r = Some(PosInf);
        assert!(builtin(BuiltinModel::ZrpRate1, params).is_err());
    }

    #[test]
    fn bricklayers_rate_identity() {
        // p(y, z) = p (f(y) + f(-z)) and q(y, z) = q (f(-y) + f(z)).
        let mut params = BuiltinParams::<f64>::new(0.7);
        params.beta = Some(2f64.ln());
        let spec = builtin(BuiltinModel::Bricklayers, params).unwrap();
        let f = |z: i64| 2f64.powf(z as f64 - 0.5);
        for y in -5..=5 {
            for z in -5..=5 {
                let p_direct = 0.7 * (f(y) + f(-z));
                let q_direct = 0.3 * (f(-y) + f(z));
                assert!((spec.bulk_rate_p(y, z).unwrap() - p_direct).abs() < 1e-12 * p_direct.abs());
                assert!((spec.bulk_rate_q(y, z).unwrap() - q_direct).abs() < 1e-12 * q_direct.abs());
            }
        }
    }

    #[test]
    fn bricklayers_f_involution() {
        // f(z) f(1-z) = 1 is the defining property of the bricklayers f.
        let f = |z: i64| 2f64.powf(z as f64 - 0.5);
        for z in -10..=10 {
            assert!((f(z) * f(1 - z) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn detailed_balance_ratio_matches_factorization() {
        // p(y, z) / q(y-1, z+1) = f(y) / f(z+1) wherever defined; this is
        // the ratio the reversibility proof runs on.
        let spec = asep(0.7);
        let num = spec.bulk_rate_p(1, 0).unwrap();
        let den = spec.bulk_rate_q(0, 1).unwrap();
        assert!((num / den - 0.7 / 0.3).abs() < 1e-12);
    }
}

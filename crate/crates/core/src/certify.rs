//! Exact feasibility accounting for the exponents that steer an arc
//! dissection: how many variables are needed, which saving rates `kappa`
//! are admissible, and how the arc heights `theta` and `eta` are derived
//! from them.
//!
//! For a pair of degrees `(k, d)` with `d = k - 1` in `n` variables, four
//! strict inequalities decide whether a choice of `(n, kappa)` carries the
//! whole argument:
//!
//! * **entry slope** — `n > 2^d (k + d)`, so the dissection's opening stage
//!   at height `theta = 1` already beats the target count;
//! * **ladder room** — `d/kappa + 2^d (d+2)/n < 1`, which is exactly the
//!   condition that a descending ladder of heights can reach the derived
//!   ceiling `theta_max`;
//! * **refined remainder** — `2(d-1)/kappa + 3 * 2^d / n < 1`, which makes
//!   the leftover mass on the refined two-dimensional arcs summable;
//! * **split exclusion** — `kappa < n / 2^{d-1}`, ruling out the degenerate
//!   branch of the two-dimensional splitting step.
//!
//! The first constraint pins the variable threshold `2^{k-1} (2k - 1)`:
//! the smallest `n` admitting any `kappa` is always one more than it, and
//! [`min_feasible_n`] re-derives that frontier by exhaustive scan instead
//! of trusting the closed form.
//!
//! Everything here is exact rational arithmetic. Each verified inequality
//! is stored together with its margin, so a serialized
//! [`ExponentCertificate`] can be re-checked from scratch and must
//! reproduce the identical margins.

use num_bigint::BigInt;
use num_integer::Roots;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{rat_from_str, rat_int, rat_to_string, rat_u, Rat};

fn pow2(e: u32) -> Rat {
    Rat::from_integer(BigInt::one() << e as usize)
}

fn guard_k(k: u32) -> Result<u32> {
    if k < 3 {
        return Err(Error::invalid("k", "needs k >= 3"));
    }
    if k > 60 {
        return Err(Error::invalid("k", "exponent bookkeeping capped at k <= 60"));
    }
    Ok(k - 1)
}

/// Variable threshold `2^{k-1} (2k - 1)`: the argument closes for every
/// `n` strictly above it.
pub fn threshold_n0(k: u32) -> Result<u64> {
    guard_k(k)?;
    Ok((1u64 << (k - 1)) * (2 * k as u64 - 1))
}

/// Previously available thresholds for the same counting problem, evaluated
/// exactly so the comparison table is reproducible.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorBounds {
    /// Bound for fully general pairs; grows exponentially in both degrees.
    pub bhb: u64,
    /// Bound exploiting a diagonal top form, from the general `(k, d)`
    /// case table evaluated at `d = k - 1`.
    pub bp_general: u64,
    /// The same table's closed form for consecutive degrees: `2^k k`.
    pub bp_consecutive: u64,
    /// Sharper special-case bound available only at `(k, d) = (3, 2)`.
    pub bdhb: Option<u64>,
}

/// Diagonal-top-form bound for general degree pairs `k > d >= 1`. Three
/// regimes: for `k <= d + 4` it is `2^k (d + 1)`, at `k = d + 5` a fixed
/// multiple of `2^d`, and beyond that quadratic in `k` with floor-square-root
/// correction terms.
pub fn prior_bound_diagonal(k: u32, d: u32) -> Result<u64> {
    if d < 1 {
        return Err(Error::invalid("d", "needs d >= 1"));
    }
    if k <= d {
        return Err(Error::invalid("k", "needs k > d"));
    }
    if k > 60 {
        return Err(Error::invalid("k", "prior-bound table capped at k <= 60"));
    }
    let (ku, du) = (k as u128, d as u128);
    let value: u128 = if k <= d + 4 {
        (1u128 << k) * (du + 1)
    } else if k == d + 5 {
        (1u128 << d) * (26 + 32 * du)
    } else {
        let (ki, di) = (k as i128, d as i128);
        let s1 = (2 * ki - 2 * di).sqrt();
        let s2 = (2 * ki - 2 * di + 2).sqrt();
        let correction = (4 * di * di + 8 * di + 1) * ki
            - 2 * di * di * di
            - 7 * di * di
            - 5 * di
            - 4 * di * s1
            - 2 * s2;
        let inner = (2 * di + 1) * ki * ki - correction;
        if inner <= 0 {
            return Err(Error::Inconsistent(format!(
                "diagonal prior bound collapsed to {inner} at (k, d) = ({k}, {d})"
            )));
        }
        (1u128 << d) * inner as u128
    };
    let _ = ku;
    u64::try_from(value).map_err(|_| Error::invalid("k", "prior bound exceeds u64"))
}

pub fn prior_bounds(k: u32) -> Result<PriorBounds> {
    let d = guard_k(k)?;
    let (ku, du) = (k as u128, d as u128);
    let bhb = (2 + du) * (ku - 1) * (1u128 << (k - 1)) + du * (1u128 << (d - 1));
    Ok(PriorBounds {
        bhb: u64::try_from(bhb).map_err(|_| Error::invalid("k", "prior bound exceeds u64"))?,
        bp_general: prior_bound_diagonal(k, d)?,
        bp_consecutive: (1u64 << k) * k as u64,
        bdhb: (k == 3).then_some(28),
    })
}

/// The exact open window of admissible saving rates `kappa` at a given
/// `(k, n)`, with each bounding constraint kept by name so an empty window
/// can report precisely which requirements collide.
#[derive(Clone, Debug)]
pub struct KappaWindow {
    pub k: u32,
    pub d: u32,
    pub n: u64,
    /// `n - 2^d (k + d)`; the entry-slope constraint demands this be positive.
    pub entry_margin: Rat,
    /// Constraints of the shape `kappa > bound`. A `None` bound means no
    /// positive `kappa` satisfies the constraint at this `n`.
    pub lower_bounds: Vec<(&'static str, Option<Rat>)>,
    /// The single constraint of the shape `kappa < bound`.
    pub upper_bound: (&'static str, Rat),
    /// Nonempty exactly when all four constraints are simultaneously
    /// satisfiable; open at both ends.
    pub interval: Option<(Rat, Rat)>,
}

impl KappaWindow {
    pub fn feasible(&self) -> bool {
        self.interval.is_some()
    }

    pub fn contains(&self, kappa: &Rat) -> bool {
        match &self.interval {
            Some((lo, hi)) => lo < kappa && kappa < hi,
            None => false,
        }
    }

    /// Exact midpoint of the window, if there is one.
    pub fn midpoint(&self) -> Option<Rat> {
        self.interval
            .as_ref()
            .map(|(lo, hi)| (lo + hi) / rat_int(2))
    }

    /// Human-readable account of why the window is empty, naming the exact
    /// colliding bounds. `None` while the window is nonempty.
    pub fn conflict_report(&self) -> Option<String> {
        if self.feasible() {
            return None;
        }
        let mut parts = Vec::new();
        if !self.entry_margin.is_positive() {
            let floor = rat_u(self.n) - &self.entry_margin;
            parts.push(format!(
                "entry-slope requires n > {} (n = {})",
                floor.to_integer(),
                self.n
            ));
        }
        let mut strongest: Option<(&str, &Rat)> = None;
        for (label, bound) in &self.lower_bounds {
            match bound {
                None => parts.push(format!(
                    "{label} cannot hold for any kappa at n = {}",
                    self.n
                )),
                Some(b) => {
                    if strongest.as_ref().is_none_or(|(_, s)| b > s) {
                        strongest = Some((label, b));
                    }
                }
            }
        }
        if let Some((label, lo)) = strongest {
            let (up_label, hi) = &self.upper_bound;
            if lo >= hi {
                parts.push(format!(
                    "{label} requires kappa > {} while {up_label} requires kappa < {}",
                    rat_to_string(lo),
                    rat_to_string(hi)
                ));
            }
        }
        Some(parts.join("; "))
    }
}

/// Solve all four constraints for `kappa` exactly at the given `(k, n)`.
pub fn feasible_kappa(k: u32, n: u64) -> Result<KappaWindow> {
    let d = guard_k(k)?;
    if n == 0 {
        return Err(Error::invalid("n", "needs n >= 1"));
    }
    let nr = rat_u(n);
    let entry_margin = &nr - pow2(d) * rat_u(k as u64 + d as u64);

    // d/kappa + 2^d(d+2)/n < 1 rearranges to kappa > d*n / (n - 2^d(d+2)),
    // possible only once the divisor is positive; same shape for the other
    // lower constraint.
    let lower_from = |num: Rat, subtracted: Rat| -> Option<Rat> {
        let divisor = &nr - subtracted;
        divisor.is_positive().then(|| num * &nr / divisor)
    };
    let ladder = lower_from(rat_u(d as u64), pow2(d) * rat_u(d as u64 + 2));
    let refined = lower_from(rat_u(2 * (d as u64 - 1)), rat_int(3) * pow2(d));
    let upper = &nr / pow2(d - 1);

    let mut interval = None;
    if entry_margin.is_positive() {
        if let (Some(a), Some(b)) = (&ladder, &refined) {
            let lo = a.max(b).clone();
            if lo < upper {
                interval = Some((lo, upper.clone()));
            }
        }
    }
    Ok(KappaWindow {
        k,
        d,
        n,
        entry_margin,
        lower_bounds: vec![("ladder-room", ladder), ("refined-remainder", refined)],
        upper_bound: ("split-exclusion", upper),
        interval,
    })
}

/// Smallest `n` with a nonempty `kappa` window, found by scanning rather
/// than trusting the closed form; the scan must land on `threshold + 1`
/// or the mismatch is escalated as an error.
pub fn min_feasible_n(k: u32) -> Result<u64> {
    let threshold = threshold_n0(k)?;
    let cap = 2 * threshold + 2;
    for n in 1..=cap {
        if feasible_kappa(k, n)?.feasible() {
            if n != threshold + 1 {
                return Err(Error::Inconsistent(format!(
                    "feasibility frontier scan found n = {n}, threshold formula says {}",
                    threshold + 1
                )));
            }
            return Ok(n);
        }
    }
    Err(Error::Inconsistent(format!(
        "no feasible n up to {cap} for k = {k}"
    )))
}

/// Arc heights derived from an admissible `kappa` by coupling the two
/// savings: `theta_max = 2^d kappa / (n + 2^d kappa)` and
/// `eta_max = n / (n + 2^d kappa)`, which sum to exactly one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivedParams {
    pub theta_max: Rat,
    pub eta_max: Rat,
    /// `(d - 1) eta_max + theta_max`, the enlarged-arc exponent.
    pub omega: Rat,
}

pub fn derive_params(k: u32, n: u64, kappa: &Rat) -> Result<DerivedParams> {
    let window = feasible_kappa(k, n)?;
    if !window.contains(kappa) {
        return Err(Error::Infeasible(window_rejection(&window, kappa)));
    }
    let d = window.d;
    let scaled = pow2(d) * kappa;
    let total = rat_u(n) + &scaled;
    let theta_max = &scaled / &total;
    let eta_max = rat_u(n) / &total;
    // kappa * eta_max = n * theta_max / 2^d and theta_max + eta_max = 1 are
    // identities of the construction; check them anyway, exactly.
    if kappa * &eta_max != rat_u(n) * &theta_max / pow2(d) {
        return Err(Error::Inconsistent("height coupling identity failed".into()));
    }
    if &theta_max + &eta_max != Rat::one() {
        return Err(Error::Inconsistent("heights do not sum to one".into()));
    }
    let omega = rat_u(d as u64 - 1) * &eta_max + &theta_max;
    Ok(DerivedParams {
        theta_max,
        eta_max,
        omega,
    })
}

fn window_rejection(window: &KappaWindow, kappa: &Rat) -> String {
    match (&window.interval, window.conflict_report()) {
        (Some((lo, hi)), _) => format!(
            "kappa = {} outside the admissible window ({}, {})",
            rat_to_string(kappa),
            rat_to_string(lo),
            rat_to_string(hi)
        ),
        (None, Some(report)) => report,
        (None, None) => unreachable!("empty window must explain itself"),
    }
}

/// A uniformly spaced descending ladder of heights from `1` down to
/// `theta_star`, with the step chosen strictly inside the allowed budget
/// and the count `N` minimal for that.
#[derive(Clone, Debug)]
pub struct ThetaLadder {
    pub thetas: Vec<Rat>,
    pub step: Rat,
    /// Open bound the step must stay strictly below:
    /// `((n - 2^{d+1}) theta_star - 2^d d) / 2^{d+1}`.
    pub step_cap: Rat,
    /// `(n - 2^{d+1}) theta_star - 2^d d`, the total budget the steps draw on.
    pub slack: Rat,
    /// `2^d d / (n - 2^{d+1})`; `theta_star` must sit strictly above it.
    pub floor: Rat,
}

/// Build the ladder for a `theta_star` in `(floor, 1)`. `kappa` enters only
/// through its admissibility: the ladder itself depends on `(k, n,
/// theta_star)`, but a rate outside the window has no business owning one.
pub fn build_theta_ladder(k: u32, n: u64, kappa: &Rat, theta_star: &Rat) -> Result<ThetaLadder> {
    let window = feasible_kappa(k, n)?;
    if !window.contains(kappa) {
        return Err(Error::Infeasible(window_rejection(&window, kappa)));
    }
    let d = window.d;
    let body = rat_u(n) - pow2(d + 1);
    if !body.is_positive() {
        return Err(Error::Inconsistent(format!(
            "n = {n} admits kappa yet n <= 2^{}",
            d + 1
        )));
    }
    let floor = pow2(d) * rat_u(d as u64) / &body;
    if theta_star <= &floor {
        return Err(Error::Infeasible(format!(
            "theta_star = {} must exceed {}",
            rat_to_string(theta_star),
            rat_to_string(&floor)
        )));
    }
    if theta_star >= &Rat::one() {
        return Err(Error::invalid("theta_star", "must be strictly below 1"));
    }
    let slack = &body * theta_star - pow2(d) * rat_u(d as u64);
    let step_cap = &slack / pow2(d + 1);
    let gap = Rat::one() - theta_star;
    // Smallest integer N with gap / N strictly below the cap.
    let rungs = (&gap / &step_cap).floor().to_integer() + BigInt::one();
    let rungs = u64::try_from(rungs)
        .ok()
        .filter(|&r| r <= 100_000)
        .ok_or_else(|| {
            Error::invalid("theta_star", "too close to its floor; ladder would be enormous")
        })?;
    let step = &gap / rat_u(rungs);
    let thetas: Vec<Rat> = (0..=rungs)
        .map(|i| Rat::one() - rat_u(i) * &step)
        .collect();
    if thetas.last() != Some(theta_star) {
        return Err(Error::Inconsistent("ladder missed theta_star".into()));
    }
    for pair in thetas.windows(2) {
        let drop = &pair[0] - &pair[1];
        if !drop.is_positive() || pow2(d + 1) * &drop >= slack {
            return Err(Error::Inconsistent("ladder step out of budget".into()));
        }
    }
    Ok(ThetaLadder {
        thetas,
        step,
        step_cap,
        slack,
        floor,
    })
}

/// How a certificate's `(theta, eta)` pair was produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamChoice {
    /// Couple the heights through `kappa * eta = n * theta / 2^d` and take
    /// both at their ceiling. `kappa` defaults to the window midpoint.
    Linked { kappa: Option<Rat> },
    /// Record a freely chosen pair instead. Only the basic range
    /// constraints are checked; no ladder is built and no claim is made
    /// that free pairs enlarge feasibility.
    Free { kappa: Rat, theta: Rat, eta: Rat },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Margin must be strictly positive.
    Strict,
    /// Margin must be non-negative.
    NonStrict,
    /// Margin must be exactly zero.
    Equality,
}

/// One verified statement with its exact margin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    #[serde(with = "rat_str")]
    pub margin: Rat,
}

fn check(name: &str, kind: CheckKind, margin: Rat) -> Result<Check> {
    let ok = match kind {
        CheckKind::Strict => margin.is_positive(),
        CheckKind::NonStrict => !margin.is_negative(),
        CheckKind::Equality => margin.is_zero(),
    };
    if !ok {
        return Err(Error::Inconsistent(format!(
            "check `{name}` failed with margin {}",
            rat_to_string(&margin)
        )));
    }
    Ok(Check {
        name: name.to_string(),
        kind,
        margin,
    })
}

/// Complete record of one verified parameter choice. Serializes with every
/// rational as a `"p/q"` string; [`reverify`] recomputes all checks from
/// the stored inputs and demands identical margins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentCertificate {
    pub k: u32,
    pub d: u32,
    pub n: u64,
    pub linked: bool,
    #[serde(with = "rat_str")]
    pub kappa: Rat,
    #[serde(with = "rat_window")]
    pub kappa_interval: Option<(Rat, Rat)>,
    #[serde(with = "rat_str")]
    pub theta_star: Rat,
    #[serde(with = "rat_str")]
    pub theta_max: Rat,
    #[serde(with = "rat_str")]
    pub eta_max: Rat,
    #[serde(with = "rat_str")]
    pub eta: Rat,
    #[serde(with = "rat_str")]
    pub omega: Rat,
    #[serde(with = "rat_seq")]
    pub theta_ladder: Vec<Rat>,
    pub checks: Vec<Check>,
}

/// Build and self-verify a certificate for `(k, n)` under the given choice.
pub fn certificate(k: u32, n: u64, choice: ParamChoice) -> Result<ExponentCertificate> {
    let window = feasible_kappa(k, n)?;
    let d = window.d;
    let (linked, kappa, theta_star, eta) = match choice {
        ParamChoice::Linked { kappa } => {
            let kappa = match kappa {
                Some(kp) => kp,
                None => window.midpoint().ok_or_else(|| {
                    Error::Infeasible(window.conflict_report().expect("empty window explains"))
                })?,
            };
            let derived = derive_params(k, n, &kappa)?;
            (true, kappa, derived.theta_max, derived.eta_max)
        }
        ParamChoice::Free { kappa, theta, eta } => (false, kappa, theta, eta),
    };
    let derived = derive_params(k, n, &kappa)?;
    let theta_ladder = if linked {
        build_theta_ladder(k, n, &kappa, &theta_star)?.thetas
    } else {
        Vec::new()
    };
    let omega = rat_u(d as u64 - 1) * &eta + &theta_star;
    let cert = ExponentCertificate {
        k,
        d,
        n,
        linked,
        kappa,
        kappa_interval: window.interval.clone(),
        theta_star,
        theta_max: derived.theta_max,
        eta_max: derived.eta_max,
        eta,
        omega,
        theta_ladder,
        checks: Vec::new(),
    };
    let checks = recompute_checks(&cert)?;
    Ok(ExponentCertificate { checks, ..cert })
}

/// Recompute every check from the certificate's stored inputs.
fn recompute_checks(cert: &ExponentCertificate) -> Result<Vec<Check>> {
    let window = feasible_kappa(cert.k, cert.n)?;
    let d = cert.d;
    if d != window.d {
        return Err(Error::Inconsistent(format!(
            "certificate says d = {d}, degrees say {}",
            window.d
        )));
    }
    if cert.kappa_interval != window.interval {
        return Err(Error::Inconsistent(
            "stored kappa interval disagrees with a fresh solve".into(),
        ));
    }
    let derived = derive_params(cert.k, cert.n, &cert.kappa)?;
    if derived.theta_max != cert.theta_max || derived.eta_max != cert.eta_max {
        return Err(Error::Inconsistent(
            "stored height ceilings disagree with a fresh derivation".into(),
        ));
    }
    let (nr, kp) = (rat_u(cert.n), &cert.kappa);
    let mut checks = vec![
        check("entry-slope", CheckKind::Strict, window.entry_margin.clone())?,
        check(
            "ladder-room",
            CheckKind::Strict,
            Rat::one() - rat_u(d as u64) / kp - pow2(d) * rat_u(d as u64 + 2) / &nr,
        )?,
        check(
            "refined-remainder",
            CheckKind::Strict,
            Rat::one() - rat_u(2 * (d as u64 - 1)) / kp - rat_int(3) * pow2(d) / &nr,
        )?,
        check(
            "split-exclusion",
            CheckKind::Strict,
            &nr / pow2(d - 1) - kp,
        )?,
        check("theta-positive", CheckKind::Strict, cert.theta_star.clone())?,
        check(
            "theta-cap",
            CheckKind::NonStrict,
            Rat::one() - &cert.theta_star,
        )?,
        check("eta-positive", CheckKind::Strict, cert.eta.clone())?,
        check(
            "eta-range",
            CheckKind::NonStrict,
            Rat::one() - &cert.theta_star - &cert.eta,
        )?,
        check(
            "omega-assembly",
            CheckKind::Equality,
            &cert.omega - (rat_u(d as u64 - 1) * &cert.eta + &cert.theta_star),
        )?,
        check(
            "ceiling-sum",
            CheckKind::Equality,
            &cert.theta_max + &cert.eta_max - Rat::one(),
        )?,
    ];
    // The ladder-room inequality is equivalent to theta_max clearing the
    // ladder floor; the two margins are positive multiples of each other,
    // and the exact proportionality is itself worth pinning.
    let body = nr.clone() - pow2(d + 1);
    if body.is_positive() {
        let floor = pow2(d) * rat_u(d as u64) / &body;
        let room = &cert.theta_max - &floor;
        checks.push(check("ceiling-over-floor", CheckKind::Strict, room.clone())?);
        let ladder_room = &checks[1].margin;
        let lhs = room * (&nr + pow2(d) * kp) * &body;
        let rhs = pow2(d) * kp * &nr * ladder_room;
        checks.push(check("room-equivalence", CheckKind::Equality, lhs - rhs)?);
    }
    if cert.linked {
        checks.push(check(
            "height-coupling",
            CheckKind::Equality,
            kp * &cert.eta - &nr * &cert.theta_star / pow2(d),
        )?);
    }
    if !cert.theta_ladder.is_empty() {
        let ladder = build_theta_ladder(cert.k, cert.n, &cert.kappa, &cert.theta_star)?;
        if ladder.thetas != cert.theta_ladder {
            return Err(Error::Inconsistent(
                "stored ladder disagrees with a fresh build".into(),
            ));
        }
        checks.push(check(
            "ladder-floor",
            CheckKind::Strict,
            &cert.theta_star - &ladder.floor,
        )?);
        checks.push(check(
            "ladder-step",
            CheckKind::Strict,
            &ladder.step_cap - &ladder.step,
        )?);
        checks.push(check(
            "ladder-start",
            CheckKind::Equality,
            cert.theta_ladder[0].clone() - Rat::one(),
        )?);
        checks.push(check(
            "ladder-end",
            CheckKind::Equality,
            cert.theta_ladder.last().unwrap() - &cert.theta_star,
        )?);
    } else if cert.linked {
        return Err(Error::Inconsistent("linked certificate without a ladder".into()));
    }
    Ok(checks)
}

/// Re-run every check from the stored inputs and demand margins identical
/// to the ones recorded at build time.
pub fn reverify(cert: &ExponentCertificate) -> Result<()> {
    let fresh = recompute_checks(cert)?;
    if fresh != cert.checks {
        return Err(Error::Inconsistent(
            "re-verification produced different margins".into(),
        ));
    }
    Ok(())
}

mod rat_str {
    use super::{rat_from_str, rat_to_string, Rat};
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rat, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&rat_to_string(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        rat_from_str(&String::deserialize(d)?).map_err(D::Error::custom)
    }
}

mod rat_seq {
    use super::{rat_from_str, rat_to_string, Rat};
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rat], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(rat_to_string))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rat>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| rat_from_str(s).map_err(D::Error::custom))
            .collect()
    }
}

mod rat_window {
    use super::{rat_from_str, rat_to_string, Rat};
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<(Rat, Rat)>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref()
            .map(|(lo, hi)| (rat_to_string(lo), rat_to_string(hi)))
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<(Rat, Rat)>, D::Error> {
        match Option::<(String, String)>::deserialize(d)? {
            None => Ok(None),
            Some((lo, hi)) => Ok(Some((
                rat_from_str(&lo).map_err(D::Error::custom)?,
                rat_from_str(&hi).map_err(D::Error::custom)?,
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;

    #[test]
    fn threshold_closed_form() {
        assert_eq!(threshold_n0(3).unwrap(), 20);
        assert_eq!(threshold_n0(4).unwrap(), 56);
        assert_eq!(threshold_n0(5).unwrap(), 144);
        assert!(threshold_n0(2).is_err());
    }

    #[test]
    fn threshold_beats_consecutive_prior() {
        for k in 3..=10 {
            let ours = threshold_n0(k).unwrap();
            let prior = prior_bounds(k).unwrap().bp_consecutive;
            assert!(ours < prior, "k = {k}: {ours} !< {prior}");
        }
    }

    #[test]
    fn prior_bound_table() {
        let p3 = prior_bounds(3).unwrap();
        assert_eq!(
            p3,
            PriorBounds {
                bhb: 36,
                bp_general: 24,
                bp_consecutive: 24,
                bdhb: Some(28),
            }
        );
        let p4 = prior_bounds(4).unwrap();
        assert_eq!(p4.bhb, 132);
        assert_eq!(p4.bp_consecutive, 64);
        assert_eq!(p4.bp_general, 64);
        assert_eq!(p4.bdhb, None);
    }

    #[test]
    fn diagonal_prior_case_split() {
        // k - d = 1..4 share the closed form, then the two other regimes.
        assert_eq!(prior_bound_diagonal(4, 3).unwrap(), 64);
        assert_eq!(prior_bound_diagonal(7, 3).unwrap(), 128 * 4);
        assert_eq!(prior_bound_diagonal(8, 3).unwrap(), 8 * (26 + 96));
        assert_eq!(prior_bound_diagonal(9, 3).unwrap(), 8 * (7 * 81 - 375));
    }

    #[test]
    fn kappa_window_just_above_threshold() {
        let w = feasible_kappa(3, 21).unwrap();
        assert_eq!(w.interval, Some((rat(42, 5), rat(21, 2))));
        assert!(w.contains(&rat_int(9)));
        assert!(!w.contains(&rat_int(8)));
        assert!(!w.contains(&rat(21, 2)));
    }

    #[test]
    fn kappa_window_collides_at_threshold() {
        let w = feasible_kappa(3, 20).unwrap();
        assert!(!w.feasible());
        assert_eq!(w.lower_bounds[0].1, Some(rat_int(10)));
        assert_eq!(w.upper_bound.1, rat_int(10));
        assert!(w.entry_margin.is_zero());
        let report = w.conflict_report().unwrap();
        assert!(report.contains("kappa > 10/1"), "{report}");
        assert!(report.contains("kappa < 10/1"), "{report}");
        assert!(report.contains("n > 20"), "{report}");
    }

    #[test]
    fn kappa_window_widens_with_n() {
        let w = feasible_kappa(3, 24).unwrap();
        assert_eq!(w.interval, Some((rat_int(6), rat_int(12))));
        assert!(w.contains(&rat_int(7)));
    }

    #[test]
    fn kappa_window_reports_unreachable_lower_bound() {
        let w = feasible_kappa(3, 15).unwrap();
        assert!(!w.feasible());
        assert_eq!(w.lower_bounds[0], ("ladder-room", None));
        let report = w.conflict_report().unwrap();
        assert!(report.contains("ladder-room cannot hold"), "{report}");
    }

    #[test]
    fn frontier_scan_matches_threshold() {
        assert_eq!(min_feasible_n(3).unwrap(), 21);
        assert_eq!(min_feasible_n(4).unwrap(), 57);
        for k in 3..=8 {
            assert_eq!(min_feasible_n(k).unwrap(), threshold_n0(k).unwrap() + 1);
        }
    }

    #[test]
    fn derived_heights_worked_example() {
        let d = derive_params(3, 21, &rat_int(9)).unwrap();
        assert_eq!(d.theta_max, rat(12, 19));
        assert_eq!(d.eta_max, rat(7, 19));
        assert_eq!(d.omega, Rat::one());
    }

    #[test]
    fn infeasible_kappa_is_rejected() {
        assert!(matches!(
            derive_params(3, 21, &rat_int(8)),
            Err(Error::Infeasible(_))
        ));
        // Window boundaries are excluded: the constraints are strict.
        assert!(derive_params(3, 21, &rat(21, 2)).is_err());
        assert!(derive_params(3, 20, &rat_int(10)).is_err());
    }

    #[test]
    fn ceiling_meets_floor_exactly_at_the_window_edge() {
        // At kappa = 42/5 (the open lower edge) the height ceiling equals
        // the ladder floor 8/13, confirming the two formulations agree.
        let kappa = rat(42, 5);
        let scaled = rat_int(4) * &kappa;
        let theta = &scaled / (rat_int(21) + &scaled);
        assert_eq!(theta, rat(8, 13));
        let floor = rat_int(8) / rat_int(13);
        assert_eq!(theta, floor);
    }

    #[test]
    fn ladder_worked_example() {
        let ladder = build_theta_ladder(3, 21, &rat_int(9), &rat(12, 19)).unwrap();
        assert_eq!(ladder.floor, rat(8, 13));
        assert_eq!(ladder.slack, rat(4, 19));
        assert_eq!(ladder.step_cap, rat(1, 38));
        assert_eq!(ladder.step, rat(7, 285));
        assert_eq!(ladder.thetas.len(), 16);
        assert_eq!(ladder.thetas[0], Rat::one());
        assert_eq!(*ladder.thetas.last().unwrap(), rat(12, 19));
        for pair in ladder.thetas.windows(2) {
            assert!(pair[0] > pair[1]);
        }
    }

    #[test]
    fn ladder_rejects_its_floor() {
        let err = build_theta_ladder(3, 21, &rat_int(9), &rat(8, 13)).unwrap_err();
        assert!(err.to_string().contains("8/13"), "{err}");
    }

    #[test]
    fn certificate_roundtrip_reverifies() {
        let cert = certificate(3, 21, ParamChoice::Linked { kappa: Some(rat_int(9)) }).unwrap();
        assert_eq!(cert.theta_star, rat(12, 19));
        assert_eq!(cert.eta, rat(7, 19));
        assert_eq!(cert.omega, Rat::one());
        assert!(cert.checks.iter().any(|c| c.name == "height-coupling"));
        reverify(&cert).unwrap();

        let json = serde_json::to_string_pretty(&cert).unwrap();
        assert!(json.contains("\"12/19\""), "{json}");
        let back: ExponentCertificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cert);
        reverify(&back).unwrap();
    }

    #[test]
    fn certificate_defaults_to_the_window_midpoint() {
        let cert = certificate(3, 21, ParamChoice::Linked { kappa: None }).unwrap();
        assert_eq!(cert.kappa, rat(189, 20));
        assert_eq!(cert.theta_max, rat(9, 14));
        reverify(&cert).unwrap();
    }

    #[test]
    fn tampered_certificate_is_caught() {
        let mut cert = certificate(3, 21, ParamChoice::Linked { kappa: Some(rat_int(9)) }).unwrap();
        cert.theta_max = rat(13, 19);
        assert!(reverify(&cert).is_err());
    }

    #[test]
    fn free_mode_checks_ranges_and_claims_nothing_more() {
        let cert = certificate(
            3,
            21,
            ParamChoice::Free {
                kappa: rat_int(9),
                theta: rat(1, 2),
                eta: rat(1, 3),
            },
        )
        .unwrap();
        assert!(!cert.linked);
        assert_eq!(cert.omega, rat(5, 6));
        assert!(cert.theta_ladder.is_empty());
        assert!(cert.checks.iter().all(|c| c.name != "height-coupling"));
        let range = cert.checks.iter().find(|c| c.name == "eta-range").unwrap();
        assert_eq!(range.margin, rat(1, 6));
        reverify(&cert).unwrap();

        // Free pairs still have to respect the basic ranges.
        let bad = certificate(
            3,
            21,
            ParamChoice::Free {
                kappa: rat_int(9),
                theta: rat(1, 2),
                eta: rat(2, 3),
            },
        );
        assert!(bad.is_err());
    }

    #[test]
    fn infeasible_pair_reports_collision() {
        let err = certificate(3, 20, ParamChoice::Linked { kappa: None }).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("kappa > 10/1"), "{text}");
        assert!(text.contains("kappa < 10/1"), "{text}");
    }
}

//! Arc dissection of the torus.
//!
//! Three nested families, all cut out by rational-approximation conditions
//! with thresholds of the shape `c * X^e`:
//!
//! * the one-dimensional major arcs in the first phase coordinate: some
//!   `q <= X^theta` with `||alpha_k q|| <= X^{theta-k}`;
//! * the two-dimensional refined arcs: the same condition on `alpha_k`
//!   together with some `r <= X^{(d-1)eta}` with
//!   `||alpha_d q r|| <= c X^{-d+(d-1)eta+theta}`;
//! * the enlarged arcs: a single denominator `s <= c' X^omega` with both
//!   offsets `|gamma| <= c' X^{omega-deg}`, where `omega = (d-1)eta + theta`.
//!
//! Everything here is decided in exact arithmetic. Membership reduces to
//! `cmp_pow`; volumes are unions of intervals whose endpoints live in
//! `Q + Q * X^e`, swept with exact comparisons, and reported as short sums
//! `sum_i c_i X^{e_i}` with rational coefficients and exponents.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::arith::SplitMix64;
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::exact::{
    cmp_pow, cmp_scaled_pow, dist_to_nearest_int, floor_pow, floor_scaled_pow, frac, pow_f64, rat,
    rat_to_f64, round_nearest, sign_of_power_sum, ExtCtx, ExtVal, PowTerm, Rat,
};

/// Exponent parameters of one arc dissection.
#[derive(Clone, Debug)]
pub struct ArcParams {
    pub k: u32,
    pub d: u32,
    pub theta: Rat,
    pub eta: Rat,
    pub kappa: Rat,
    /// `(d-1) eta + theta`.
    pub omega: Rat,
    pub c: Rat,
    pub c_prime: Rat,
}

impl ArcParams {
    pub fn new(k: u32, theta: Rat, eta: Rat, kappa: Rat, c: Rat, c_prime: Rat) -> Result<Self> {
        if k < 3 {
            return Err(Error::invalid("k", "must be at least 3"));
        }
        if !theta.is_positive() || theta > Rat::one() {
            return Err(Error::invalid("theta", "must lie in (0, 1]"));
        }
        if !eta.is_positive() {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if !kappa.is_positive() {
            return Err(Error::invalid("kappa", "must be positive"));
        }
        if !c.is_positive() || !c_prime.is_positive() {
            return Err(Error::invalid("c", "arc constants must be positive"));
        }
        let d = k - 1;
        let omega = rat(d as i64 - 1, 1) * &eta + &theta;
        Ok(Self { k, d, theta, eta, kappa, omega, c, c_prime })
    }

    /// Parameters with `kappa` tied to the other exponents by
    /// `kappa * eta = n * theta / 2^d`.
    pub fn linked(k: u32, n: usize, theta: Rat, eta: Rat, c: Rat, c_prime: Rat) -> Result<Self> {
        if !eta.is_positive() {
            return Err(Error::invalid("eta", "must be positive"));
        }
        let d = k - 1;
        let kappa = rat(n as i64, 1i64 << d) * &theta / &eta;
        Self::new(k, theta, eta, kappa, c, c_prime)
    }

    /// The smallest constant that makes every refined-arc member an
    /// enlarged-arc member with `s = q r`.
    pub fn calibrated_c_prime(c: &Rat) -> Rat {
        if *c >= Rat::one() {
            c.clone()
        } else {
            Rat::one()
        }
    }

    /// Exponent of the `alpha_d` threshold: `-d + (d-1) eta + theta`.
    pub fn d_threshold_exp(&self) -> Rat {
        &self.omega - rat(self.d as i64, 1)
    }

    /// Exponent of the `alpha_k` threshold: `theta - k`.
    pub fn k_threshold_exp(&self) -> Rat {
        &self.theta - rat(self.k as i64, 1)
    }
}

/// Evidence for membership in one of the arc families.
#[derive(Clone, Debug)]
pub enum ArcWitness {
    Ma {
        q: u64,
        a_k: BigInt,
        gamma_k: Rat,
    },
    Na {
        q: u64,
        a_k: BigInt,
        r: u64,
        a_d: BigInt,
        gamma_k: Rat,
        gamma_d: Rat,
    },
    Pa {
        s: u64,
        a_k: BigInt,
        a_d: BigInt,
        gamma_k: Rat,
        gamma_d: Rat,
    },
}

#[derive(Clone, Debug)]
pub enum Classification {
    Member(ArcWitness),
    NonMember,
    /// Only returned by the error-bar variants: the input's uncertainty
    /// straddles an arc boundary.
    Boundary,
}

impl Classification {
    pub fn is_member(&self) -> bool {
        matches!(self, Classification::Member(_))
    }
}

/// Best rational approximation by continued fractions: the `q <= q_cap`
/// minimizing `||alpha q||`, with the nearest numerator and the exact error.
/// Ties cannot occur below the next convergent, so the result is also the
/// smallest minimizer. The error satisfies the Dirichlet bound
/// `||alpha q|| <= 1/(q_cap + 1)`.
pub fn best_rational_approx(alpha: &Rat, q_cap: u64) -> (BigInt, u64, Rat) {
    assert!(q_cap >= 1);
    let a = frac(alpha);
    if a.is_zero() {
        return (BigInt::zero(), 1, Rat::zero());
    }
    // Continued fraction of a = num/den in (0, 1): Euclid on (den, num).
    let mut r0 = a.denom().clone();
    let mut r1 = a.numer().clone();
    // convergents of a, starting from 0/1 and 1/a_1
    let mut p_prev = BigInt::one(); // p_{-1}
    let mut q_prev = BigInt::zero();
    let mut p = BigInt::zero(); // p_0 = 0, q_0 = 1
    let mut q = BigInt::one();
    let cap = BigInt::from(q_cap);
    let mut best_q = BigInt::one();
    while !r1.is_zero() {
        let (quot, rem) = r0.div_rem(&r1);
        let p_next = &quot * &p + &p_prev;
        let q_next = &quot * &q + &q_prev;
        if q_next > cap {
            break;
        }
        p_prev = std::mem::replace(&mut p, p_next);
        q_prev = std::mem::replace(&mut q, q_next);
        best_q = q.clone();
        r0 = std::mem::replace(&mut r1, rem);
        if (&a - Rat::new(p.clone(), q.clone())).is_zero() {
            break;
        }
    }
    let qb = best_q.to_u64().expect("convergent denominator exceeds u64");
    let scaled = alpha * Rat::from_integer(best_q);
    let a_num = round_nearest(&scaled);
    let err = (scaled - Rat::from_integer(a_num.clone())).abs();
    (a_num, qb, err)
}

fn q_range_cap(x: u64, exp: &Rat, coeff: &Rat, budget: &Budget) -> Result<u64> {
    let cap = floor_scaled_pow(coeff, x, exp);
    let cap = cap
        .to_u64()
        .ok_or_else(|| Error::invalid("X", "denominator range exceeds u64"))?;
    budget.charge_sweep("denominator scan", cap as u128)?;
    Ok(cap)
}

/// Decide `alpha_k` against the one-dimensional major arcs, exactly.
/// Returns the witness with the smallest `q`.
pub fn classify_ma(alpha_k: &Rat, theta: &Rat, x: u64, k: u32, budget: &Budget) -> Result<Classification> {
    if x < 2 {
        return Err(Error::invalid("X", "need X >= 2"));
    }
    let a = frac(alpha_k);
    let q_max = q_range_cap(x, theta, &Rat::one(), budget)?;
    let exp = theta - rat(k as i64, 1);
    for q in 1..=q_max {
        let scaled = &a * rat(q as i64, 1);
        let dist = dist_to_nearest_int(&scaled);
        if cmp_pow(&dist, x, &exp) != Ordering::Greater {
            let a_k = round_nearest(&scaled);
            let gamma_k = &a - Rat::new(a_k.clone(), BigInt::from(q));
            return Ok(Classification::Member(ArcWitness::Ma { q, a_k, gamma_k }));
        }
    }
    Ok(Classification::NonMember)
}

/// Error-bar variant: `alpha_k` is only known to within `eps`. A definite
/// hit at any `q` proves membership; a definite miss at every `q` proves
/// non-membership; anything else is a boundary verdict.
pub fn classify_ma_with_error(
    alpha_k: &Rat,
    eps: &Rat,
    theta: &Rat,
    x: u64,
    k: u32,
    budget: &Budget,
) -> Result<Classification> {
    if x < 2 {
        return Err(Error::invalid("X", "need X >= 2"));
    }
    assert!(!eps.is_negative());
    let a = frac(alpha_k);
    let q_max = q_range_cap(x, theta, &Rat::one(), budget)?;
    let exp = theta - rat(k as i64, 1);
    let mut ambiguous = false;
    for q in 1..=q_max {
        let scaled = &a * rat(q as i64, 1);
        let dist = dist_to_nearest_int(&scaled);
        let slack = eps * rat(q as i64, 1);
        let hi = &dist + &slack;
        let lo = if dist > slack { &dist - &slack } else { Rat::zero() };
        if cmp_pow(&hi, x, &exp) != Ordering::Greater {
            let a_k = round_nearest(&scaled);
            let gamma_k = &a - Rat::new(a_k.clone(), BigInt::from(q));
            return Ok(Classification::Member(ArcWitness::Ma { q, a_k, gamma_k }));
        }
        if cmp_pow(&lo, x, &exp) != Ordering::Greater {
            ambiguous = true;
        }
    }
    if ambiguous {
        Ok(Classification::Boundary)
    } else {
        Ok(Classification::NonMember)
    }
}

/// Decide `(alpha_k, alpha_d)` against the two-dimensional refined arcs.
/// Scans denominators in increasing `(q, r)` order; a continued-fraction
/// bound prunes hopeless `q` before the `r` scan.
pub fn classify_na(
    alpha_k: &Rat,
    alpha_d: &Rat,
    params: &ArcParams,
    x: u64,
    budget: &Budget,
) -> Result<Classification> {
    if x < 2 {
        return Err(Error::invalid("X", "need X >= 2"));
    }
    let ak = frac(alpha_k);
    let ad = frac(alpha_d);
    let q_max = q_range_cap(x, &params.theta, &Rat::one(), budget)?;
    let r_exp = &params.eta * rat(params.d as i64 - 1, 1);
    let r_max = q_range_cap(x, &r_exp, &Rat::one(), budget)?;
    let k_exp = params.k_threshold_exp();
    let d_exp = params.d_threshold_exp();
    for q in 1..=q_max {
        let scaled_k = &ak * rat(q as i64, 1);
        if cmp_pow(&dist_to_nearest_int(&scaled_k), x, &k_exp) == Ordering::Greater {
            continue;
        }
        // alpha_k passes with this q; now hunt for r.
        let beta = &ad * rat(q as i64, 1);
        let (_, _, best_err) = best_rational_approx(&beta, r_max);
        if cmp_scaled_pow(&best_err, &params.c, x, &d_exp) == Ordering::Greater {
            continue; // even the best r fails
        }
        for r in 1..=r_max {
            let scaled_d = &beta * rat(r as i64, 1);
            if cmp_scaled_pow(&dist_to_nearest_int(&scaled_d), &params.c, x, &d_exp)
                != Ordering::Greater
            {
                let a_k = round_nearest(&scaled_k);
                let a_d = round_nearest(&scaled_d);
                let gamma_k = &ak - Rat::new(a_k.clone(), BigInt::from(q));
                let gamma_d = &ad - Rat::new(a_d.clone(), BigInt::from(q) * BigInt::from(r));
                return Ok(Classification::Member(ArcWitness::Na {
                    q,
                    a_k,
                    r,
                    a_d,
                    gamma_k,
                    gamma_d,
                }));
            }
        }
        unreachable!("continued-fraction minimum admitted an r that the scan missed");
    }
    Ok(Classification::NonMember)
}

/// Decide `(alpha_k, alpha_d)` against the enlarged arcs with parameter
/// `omega` and constant `c_prime`. Smallest `s` first.
pub fn classify_pa(
    alpha_k: &Rat,
    alpha_d: &Rat,
    params: &ArcParams,
    x: u64,
    budget: &Budget,
) -> Result<Classification> {
    if x < 2 {
        return Err(Error::invalid("X", "need X >= 2"));
    }
    let ak = frac(alpha_k);
    let ad = frac(alpha_d);
    let s_max = q_range_cap(x, &params.omega, &params.c_prime, budget)?;
    let k_exp = &params.omega - rat(params.k as i64, 1);
    let d_exp = &params.omega - rat(params.d as i64, 1);
    for s in 1..=s_max {
        let sk = &ak * rat(s as i64, 1);
        let sd = &ad * rat(s as i64, 1);
        let a_k = round_nearest(&sk);
        let a_d = round_nearest(&sd);
        let gamma_k = &ak - Rat::new(a_k.clone(), BigInt::from(s));
        let gamma_d = &ad - Rat::new(a_d.clone(), BigInt::from(s));
        if cmp_scaled_pow(&gamma_k.abs(), &params.c_prime, x, &k_exp) != Ordering::Greater
            && cmp_scaled_pow(&gamma_d.abs(), &params.c_prime, x, &d_exp) != Ordering::Greater
        {
            return Ok(Classification::Member(ArcWitness::Pa { s, a_k, a_d, gamma_k, gamma_d }));
        }
    }
    Ok(Classification::NonMember)
}

/// Draw a phase in the minor-arc complement by rejection sampling of
/// exact dyadic rationals.
pub fn sample_minor_alpha(
    rng: &mut SplitMix64,
    theta: &Rat,
    x: u64,
    k: u32,
    max_tries: u32,
    budget: &Budget,
) -> Result<Rat> {
    for _ in 0..max_tries {
        let cand = crate::exact::rat_from_f64(rng.next_f64())
            .expect("finite dyadic sample");
        if !classify_ma(&cand, theta, x, k, budget)?.is_member() {
            return Ok(cand);
        }
    }
    Err(Error::NoMinorSample { tries: max_tries as u64 })
}

// ---------------------------------------------------------------------------
// volumes
// ---------------------------------------------------------------------------

/// A measure expressed as a short sum `sum_i coeff_i * X^{exp_i}` with
/// rational data, the exact output format of the arc sweeps.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerMeasure {
    pub x: u64,
    pub terms: BTreeMap<Rat, Rat>,
}

impl PowerMeasure {
    pub fn zero(x: u64) -> Self {
        Self { x, terms: BTreeMap::new() }
    }

    pub fn add_term(&mut self, exp: Rat, coeff: Rat) {
        if coeff.is_zero() {
            return;
        }
        let slot = self.terms.entry(exp).or_insert_with(Rat::zero);
        *slot += coeff;
        if slot.is_zero() {
            // keep the map minimal so equality comparisons are meaningful
            let dead: Vec<Rat> = self
                .terms
                .iter()
                .filter(|(_, c)| c.is_zero())
                .map(|(e, _)| e.clone())
                .collect();
            for e in dead {
                self.terms.remove(&e);
            }
        }
    }

    pub fn add_ext(&mut self, v: &ExtVal, v_exp: &Rat) {
        self.add_term(Rat::zero(), v.a.clone());
        self.add_term(v_exp.clone(), v.b.clone());
    }

    /// Accumulate `width * fiber` where the factors live over different
    /// surds `X^{w_exp}` and `X^{f_exp}`.
    pub fn add_product(&mut self, width: &ExtVal, w_exp: &Rat, fiber: &ExtVal, f_exp: &Rat) {
        self.add_term(Rat::zero(), &width.a * &fiber.a);
        self.add_term(f_exp.clone(), &width.a * &fiber.b);
        self.add_term(w_exp.clone(), &width.b * &fiber.a);
        self.add_term(w_exp + f_exp, &width.b * &fiber.b);
    }

    pub fn to_f64(&self) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| rat_to_f64(c) * pow_f64(self.x, e))
            .sum()
    }

    /// Exact sign of `self - coeff * X^exp`.
    pub fn cmp_scaled_power(&self, coeff: &Rat, exp: &Rat) -> Ordering {
        let mut terms: Vec<PowTerm> = self
            .terms
            .iter()
            .map(|(e, c)| PowTerm::new(c.clone(), e.clone()))
            .collect();
        terms.push(PowTerm::new(-coeff.clone(), exp.clone()));
        sign_of_power_sum(self.x, &terms)
    }

    /// Exact sign of `self - other` (same `X`).
    pub fn cmp_measure(&self, other: &PowerMeasure) -> Ordering {
        assert_eq!(self.x, other.x);
        let mut terms: Vec<PowTerm> = self
            .terms
            .iter()
            .map(|(e, c)| PowTerm::new(c.clone(), e.clone()))
            .collect();
        for (e, c) in &other.terms {
            terms.push(PowTerm::new(-c.clone(), e.clone()));
        }
        sign_of_power_sum(self.x, &terms)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Result of a one-dimensional interval-union sweep on `[0, 1]`.
#[derive(Clone, Debug)]
struct Sweep1d {
    measure: ExtVal,
    intervals: u64,
    /// merges with strictly positive overlap
    overlaps: u64,
}

/// Union measure of intervals `center ± radius_coeff * X^exp` clipped to
/// `[0, 1]`, by sort-and-merge with exact endpoint comparisons.
fn sweep_union_1d(ctx: &ExtCtx, intervals: &[(Rat, Rat)]) -> Sweep1d {
    let zero = ExtVal::zero();
    let one = ExtVal::rational(Rat::one());
    let mut segs: Vec<(ExtVal, ExtVal)> = Vec::with_capacity(intervals.len());
    for (center, rc) in intervals {
        let mut lo = ExtVal::new(center.clone(), -rc.clone());
        let mut hi = ExtVal::new(center.clone(), rc.clone());
        if ctx.cmp(&hi, &zero) == Ordering::Less || ctx.cmp(&lo, &one) == Ordering::Greater {
            continue;
        }
        if ctx.cmp(&lo, &zero) == Ordering::Less {
            lo = zero.clone();
        }
        if ctx.cmp(&hi, &one) == Ordering::Greater {
            hi = one.clone();
        }
        segs.push((lo, hi));
    }
    segs.sort_by(|a, b| ctx.cmp(&a.0, &b.0));
    let mut measure = ExtVal::zero();
    let mut overlaps = 0u64;
    let mut merged: Option<(ExtVal, ExtVal)> = None;
    let count = segs.len() as u64;
    for (lo, hi) in segs {
        match &mut merged {
            None => merged = Some((lo, hi)),
            Some((_, chi)) => {
                match ctx.cmp(&lo, chi) {
                    Ordering::Greater => {
                        let (clo, chi) = merged.take().unwrap();
                        measure = measure.add(&chi.sub(&clo));
                        merged = Some((lo, hi));
                    }
                    ord => {
                        if ord == Ordering::Less {
                            overlaps += 1;
                        }
                        if ctx.cmp(&hi, chi) == Ordering::Greater {
                            *chi = hi;
                        }
                    }
                }
            }
        }
    }
    if let Some((clo, chi)) = merged {
        measure = measure.add(&chi.sub(&clo));
    }
    Sweep1d { measure, intervals: count, overlaps }
}

/// Exact volume of the one-dimensional major arcs, with the disjointness
/// verdict and the comparison against `4 X^{2 theta - k}`.
#[derive(Clone, Debug)]
pub struct MaVolume {
    pub x: u64,
    pub theta: Rat,
    pub measure: PowerMeasure,
    pub disjoint: bool,
    pub interval_count: u64,
    pub q_max: u64,
    pub within_bound: bool,
    /// measure / (4 X^{2 theta - k}), as a double for reporting
    pub bound_ratio: f64,
}

pub fn volume_ma(theta: &Rat, x: u64, k: u32, budget: &Budget) -> Result<MaVolume> {
    if x < 2 {
        return Err(Error::invalid("X", "need X >= 2"));
    }
    let q_max = floor_pow(x, theta)
        .to_u64()
        .ok_or_else(|| Error::invalid("X", "denominator range exceeds u64"))?;
    let interval_estimate: u128 = (1..=q_max as u128).map(|q| q + 1).sum();
    budget.charge_sweep("arc interval sweep", interval_estimate)?;
    let v_exp = theta - rat(k as i64, 1);
    let ctx = ExtCtx::new(x, v_exp.clone());
    // Reduced fractions a/q carry the widest threshold interval among all
    // unreduced representations, so the union over reduced centers is the
    // whole union.
    let mut intervals: Vec<(Rat, Rat)> = Vec::new();
    for q in 1..=q_max {
        let radius = rat(1, q as i64);
        for a in 0..=q {
            if BigInt::from(a).gcd(&BigInt::from(q)) != BigInt::one() {
                continue;
            }
            intervals.push((rat(a as i64, q as i64), radius.clone()));
        }
    }
    let sweep = sweep_union_1d(&ctx, &intervals);
    let mut measure = PowerMeasure::zero(x);
    measure.add_ext(&sweep.measure, &v_exp);

    // complement identity: measure + gap sweep must reproduce 1 exactly
    let complement = complement_measure(&ctx, &intervals);
    let mut total = measure.clone();
    for (e, c) in &complement.terms {
        total.add_term(e.clone(), c.clone());
    }
    let mut one = PowerMeasure::zero(x);
    one.add_term(Rat::zero(), Rat::one());
    assert_eq!(total, one, "arc measure and complement must partition the torus");

    let bound_exp = theta * rat(2, 1) - rat(k as i64, 1);
    let four = rat(4, 1);
    let within = measure.cmp_scaled_power(&four, &bound_exp) != Ordering::Greater;
    let bound = 4.0 * pow_f64(x, &bound_exp);
    Ok(MaVolume {
        x,
        theta: theta.clone(),
        bound_ratio: measure.to_f64() / bound,
        measure,
        disjoint: sweep.overlaps == 0,
        interval_count: sweep.intervals,
        q_max,
        within_bound: within,
    })
}

/// Measure of `[0,1]` minus the interval union, via the gap sweep.
fn complement_measure(ctx: &ExtCtx, intervals: &[(Rat, Rat)]) -> PowerMeasure {
    let zero = ExtVal::zero();
    let one = ExtVal::rational(Rat::one());
    let mut segs: Vec<(ExtVal, ExtVal)> = Vec::new();
    for (center, rc) in intervals {
        let mut lo = ExtVal::new(center.clone(), -rc.clone());
        let mut hi = ExtVal::new(center.clone(), rc.clone());
        if ctx.cmp(&hi, &zero) == Ordering::Less || ctx.cmp(&lo, &one) == Ordering::Greater {
            continue;
        }
        if ctx.cmp(&lo, &zero) == Ordering::Less {
            lo = zero.clone();
        }
        if ctx.cmp(&hi, &one) == Ordering::Greater {
            hi = one.clone();
        }
        segs.push((lo, hi));
    }
    segs.sort_by(|a, b| ctx.cmp(&a.0, &b.0));
    let mut gaps = ExtVal::zero();
    let mut cursor = zero;
    for (lo, hi) in segs {
        if ctx.cmp(&lo, &cursor) == Ordering::Greater {
            gaps = gaps.add(&lo.sub(&cursor));
        }
        if ctx.cmp(&hi, &cursor) == Ordering::Greater {
            cursor = hi;
        }
    }
    if ctx.cmp(&one, &cursor) == Ordering::Greater {
        gaps = gaps.add(&one.sub(&cursor));
    }
    let mut m = PowerMeasure::zero(ctx.x);
    m.add_ext(&gaps, &ctx.v_exp);
    m
}

/// One strip family of a two-dimensional arc set: intervals around every
/// fraction `a/den` (`a = 0..=den`) of half-width `radius_coeff * X^{x_exp}`.
struct StripFamily {
    den: u64,
    radius_coeff: Rat,
}

/// Exact area of a union `U_f (strip_f x fiber(active set))`, computed by
/// cutting the first axis at every strip endpoint and sweeping the fiber
/// union over the denominators active in each slab.
fn union_volume_2d<F>(
    x: u64,
    x_exp: &Rat,
    strips: &[StripFamily],
    fiber_exp: &Rat,
    mut fiber: F,
    budget: &Budget,
) -> Result<PowerMeasure>
where
    F: FnMut(&[u64]) -> Result<ExtVal>,
{
    let ctx = ExtCtx::new(x, x_exp.clone());
    let zero = ExtVal::zero();
    let one = ExtVal::rational(Rat::one());
    // events: (position, delta, den)
    let mut events: Vec<(ExtVal, i64, u64)> = Vec::new();
    let mut event_estimate: u128 = 0;
    for s in strips {
        event_estimate += 2 * (s.den as u128 + 1);
    }
    budget.charge_sweep("arc slab events", event_estimate)?;
    for s in strips {
        for a in 0..=s.den {
            let center = rat(a as i64, s.den as i64);
            let mut lo = ExtVal::new(center.clone(), -s.radius_coeff.clone());
            let mut hi = ExtVal::new(center, s.radius_coeff.clone());
            if ctx.cmp(&hi, &zero) == Ordering::Less || ctx.cmp(&lo, &one) == Ordering::Greater {
                continue;
            }
            if ctx.cmp(&lo, &zero) == Ordering::Less {
                lo = zero.clone();
            }
            if ctx.cmp(&hi, &one) == Ordering::Greater {
                hi = one.clone();
            }
            events.push((lo, 1, s.den));
            events.push((hi, -1, s.den));
        }
    }
    events.sort_by(|a, b| ctx.cmp(&a.0, &b.0));

    let mut active: BTreeMap<u64, i64> = BTreeMap::new();
    let mut memo: HashMap<Vec<u64>, ExtVal> = HashMap::new();
    let mut result = PowerMeasure::zero(x);
    let mut check_total = ExtVal::zero();
    let mut cursor = ExtVal::zero();
    let mut i = 0;
    while i < events.len() {
        let pos = events[i].0.clone();
        let width = pos.sub(&cursor);
        if ctx.sign(&width) == Ordering::Greater {
            check_total = check_total.add(&width);
            if !active.is_empty() {
                let key: Vec<u64> = active.keys().copied().collect();
                let f = match memo.get(&key) {
                    Some(v) => v.clone(),
                    None => {
                        let v = fiber(&key)?;
                        memo.insert(key.clone(), v.clone());
                        v
                    }
                };
                result.add_product(&width, x_exp, &f, fiber_exp);
            }
            cursor = pos.clone();
        }
        // apply every event at this position
        while i < events.len() && ctx.cmp(&events[i].0, &pos) == Ordering::Equal {
            let (_, delta, den) = (&events[i].0, events[i].1, events[i].2);
            let e = active.entry(den).or_insert(0);
            *e += delta;
            if *e == 0 {
                active.remove(&den);
            }
            i += 1;
        }
    }
    let tail = one.sub(&cursor);
    if ctx.sign(&tail) == Ordering::Greater {
        check_total = check_total.add(&tail);
    }
    assert!(
        check_total.sub(&ExtVal::rational(Rat::one())).is_zero(),
        "slab widths must partition [0, 1]"
    );
    assert!(active.is_empty(), "every strip interval must close");
    Ok(result)
}

/// Exact area of the two-dimensional refined arcs, with the comparison
/// against `16 c X^{-k-d+2(d-1)eta+3theta}`.
#[derive(Clone, Debug)]
pub struct NaVolume {
    pub x: u64,
    pub measure: PowerMeasure,
    pub q_max: u64,
    pub r_max: u64,
    pub within_bound: bool,
    pub bound_coeff: Rat,
    pub bound_exp: Rat,
    pub bound_ratio: f64,
}

pub fn volume_na(params: &ArcParams, x: u64, budget: &Budget) -> Result<NaVolume> {
    if x < 2 {
        return Err(Error::invalid("X", "need X >= 2"));
    }
    let q_max = floor_pow(x, &params.theta)
        .to_u64()
        .ok_or_else(|| Error::invalid("X", "denominator range exceeds u64"))?;
    let r_exp = &params.eta * rat(params.d as i64 - 1, 1);
    let r_max = floor_pow(x, &r_exp)
        .to_u64()
        .ok_or_else(|| Error::invalid("X", "denominator range exceeds u64"))?;
    let k_exp = params.k_threshold_exp();
    let d_exp = params.d_threshold_exp();
    let strips: Vec<StripFamily> = (1..=q_max)
        .map(|q| StripFamily { den: q, radius_coeff: rat(1, q as i64) })
        .collect();
    let c = params.c.clone();
    let fiber_ctx = ExtCtx::new(x, d_exp.clone());
    let measure = union_volume_2d(
        x,
        &k_exp,
        &strips,
        &d_exp,
        |active: &[u64]| {
            // fiber: union over products m = q r of intervals around b/m
            // of half-width c X^{d_exp} / m
            let mut moduli: Vec<u64> = Vec::new();
            for &q in active {
                for r in 1..=r_max {
                    let m = q * r;
                    if !moduli.contains(&m) {
                        moduli.push(m);
                    }
                }
            }
            let mut intervals: Vec<(Rat, Rat)> = Vec::new();
            let mut cost: u128 = 0;
            for &m in &moduli {
                cost += m as u128 + 1;
                let radius = &c / rat(m as i64, 1);
                for b in 0..=m {
                    intervals.push((rat(b as i64, m as i64), radius.clone()));
                }
            }
            budget.charge_sweep("fiber sweep", cost)?;
            Ok(sweep_union_1d(&fiber_ctx, &intervals).measure)
        },
        budget,
    )?;
    let bound_coeff = rat(16, 1) * &params.c;
    let bound_exp = rat(-(params.k as i64) - params.d as i64, 1)
        + rat(2 * (params.d as i64 - 1), 1) * &params.eta
        + rat(3, 1) * &params.theta;
    let within = measure.cmp_scaled_power(&bound_coeff, &bound_exp) != Ordering::Greater;
    let bound = rat_to_f64(&bound_coeff) * pow_f64(x, &bound_exp);
    Ok(NaVolume {
        x,
        bound_ratio: measure.to_f64() / bound,
        measure,
        q_max,
        r_max,
        within_bound: within,
        bound_coeff,
        bound_exp,
    })
}

/// Exact area of the enlarged arcs (same sweep machinery; one shared
/// denominator for both coordinates).
pub fn volume_pa(params: &ArcParams, x: u64, budget: &Budget) -> Result<PowerMeasure> {
    if x < 2 {
        return Err(Error::invalid("X", "need X >= 2"));
    }
    let s_max = floor_scaled_pow(&params.c_prime, x, &params.omega)
        .to_u64()
        .ok_or_else(|| Error::invalid("X", "denominator range exceeds u64"))?;
    let k_exp = &params.omega - rat(params.k as i64, 1);
    let d_exp = &params.omega - rat(params.d as i64, 1);
    let cp = params.c_prime.clone();
    let strips: Vec<StripFamily> = (1..=s_max)
        .map(|s| StripFamily { den: s, radius_coeff: cp.clone() })
        .collect();
    let fiber_ctx = ExtCtx::new(x, d_exp.clone());
    let cpf = cp.clone();
    union_volume_2d(
        x,
        &k_exp,
        &strips,
        &d_exp,
        |active: &[u64]| {
            let mut intervals: Vec<(Rat, Rat)> = Vec::new();
            let mut cost: u128 = 0;
            for &s in active {
                cost += s as u128 + 1;
                for b in 0..=s {
                    intervals.push((rat(b as i64, s as i64), cpf.clone()));
                }
            }
            budget.charge_sweep("fiber sweep", cost)?;
            Ok(sweep_union_1d(&fiber_ctx, &intervals).measure)
        },
        budget,
    )
}

/// Endpoint data of the one-dimensional arcs, for exact reporting: each
/// row is `(q, a, center, radius_coeff)` with the interval
/// `center ± radius_coeff * X^{theta - k}`.
pub fn ma_endpoints(theta: &Rat, x: u64, budget: &Budget) -> Result<Vec<(u64, u64, Rat, Rat)>> {
    let q_max = floor_pow(x, theta)
        .to_u64()
        .ok_or_else(|| Error::invalid("X", "denominator range exceeds u64"))?;
    let total: u128 = (1..=q_max as u128).map(|q| q + 1).sum();
    budget.charge_sweep("endpoint dump", total)?;
    let mut rows = Vec::new();
    for q in 1..=q_max {
        for a in 0..=q {
            if BigInt::from(a).gcd(&BigInt::from(q)) != BigInt::one() {
                continue;
            }
            rows.push((q, a, rat(a as i64, q as i64), rat(1, q as i64)));
        }
    }
    Ok(rows)
}

//! Exact decisions about quantities of the form `c * X^e` with rational `c`
//! and `e` and integer `X >= 1`.
//!
//! Arc membership tests compare a rational distance against a bound `X^{p/r}`;
//! raising both sides to the r-th power turns that into a pure
//! big-integer comparison, so no floating point is involved anywhere.
//! Arc measures live in the rank-2 module `Q + Q*V` over a single surd
//! `V = X^{p/r}` (`V^r` is rational), where ordering is again exact. Sums
//! mixing several incommensurable powers of `X` are rare (only merged-arc
//! bound checks); their sign is decided by adaptive rational bracketing of
//! `X^{1/L}`, which terminates because distinct reduced powers of a
//! non-perfect-power base are linearly independent over the rationals.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    assert!(d != 0, "zero denominator");
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat_u(n: u64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Exact conversion of a finite `f64` (every finite double is a dyadic
/// rational).
pub fn rat_from_f64(x: f64) -> Option<Rat> {
    Rat::from_float(x)
}

/// Canonical `"p/q"` rendering. The denominator is always written, even for
/// integers, so serialized values are unambiguous and round-trip exactly.
pub fn rat_to_string(r: &Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parse `"p/q"` or a bare integer `"p"`, with optional surrounding space.
pub fn rat_from_str(s: &str) -> crate::error::Result<Rat> {
    use crate::error::Error;
    let parse_int = |part: &str| -> crate::error::Result<BigInt> {
        part.trim()
            .parse::<BigInt>()
            .map_err(|e| Error::invalid("rational", format!("bad integer `{part}`: {e}")))
    };
    match s.trim().split_once('/') {
        None => Ok(Rat::from_integer(parse_int(s)?)),
        Some((num, den)) => {
            let d = parse_int(den)?;
            if d.is_zero() {
                return Err(Error::invalid("rational", "zero denominator"));
            }
            Ok(Rat::new(parse_int(num)?, d))
        }
    }
}

/// Rounded conversion to `f64`, robust to numerators and denominators far
/// beyond the `f64` range.
pub fn rat_to_f64(r: &Rat) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let num_bits = r.numer().bits() as i64;
    let den_bits = r.denom().bits() as i64;
    // Scale so the quotient lands in a comfortable f64 range, convert, and
    // undo the scaling in the exponent.
    let shift = num_bits - den_bits;
    let scaled = if shift >= 0 {
        r / Rat::from_integer(BigInt::one() << shift as usize)
    } else {
        r * Rat::from_integer(BigInt::one() << (-shift) as usize)
    };
    // scaled is now in [1/2, 2) in absolute value up to one bit.
    let approx = (scaled.numer() << 64u32) / scaled.denom();
    let approx = approx.to_f64().unwrap_or(0.0) / 2f64.powi(64);
    approx * 2f64.powi(shift.clamp(-2000, 2000) as i32)
}

/// Fractional part in `[0, 1)`.
pub fn frac(r: &Rat) -> Rat {
    r - r.floor()
}

/// Distance to the nearest integer.
pub fn dist_to_nearest_int(r: &Rat) -> Rat {
    let f = frac(r);
    let half = rat(1, 2);
    if f <= half {
        f
    } else {
        Rat::one() - f
    }
}

/// Nearest integer; exact halves round up.
pub fn round_nearest(r: &Rat) -> BigInt {
    (r + rat(1, 2)).floor().to_integer()
}

/// Floor of the r-th root of a non-negative integer.
pub fn floor_root(x: &BigInt, r: u32) -> BigInt {
    assert!(!x.is_negative(), "floor_root of a negative integer");
    assert!(r >= 1);
    x.nth_root(r)
}

fn exp_parts(e: &Rat) -> (BigInt, u32) {
    let p = e.numer().clone();
    let r = e
        .denom()
        .to_u32()
        .expect("exponent denominator too large for exact power comparison");
    (p, r)
}

/// Exact comparison of `v >= 0` against `X^e` (`X >= 1`, rational `e`).
pub fn cmp_pow(v: &Rat, x: u64, e: &Rat) -> Ordering {
    assert!(!v.is_negative(), "cmp_pow expects a non-negative left side");
    assert!(x >= 1);
    if x == 1 {
        return v.cmp(&Rat::one());
    }
    let (p, r) = exp_parts(e);
    // v <= X^{p/r}  <=>  v^r <= X^p; fold the sign of p into which side the
    // integer power multiplies.
    let vr_num = v.numer().pow(r);
    let vr_den = v.denom().pow(r);
    let xb = BigInt::from(x);
    match p.to_i64() {
        Some(pi) if pi >= 0 => {
            let m = xb.pow(pi as u32);
            (vr_num).cmp(&(m * vr_den))
        }
        Some(pi) => {
            let m = xb.pow((-pi) as u32);
            (vr_num * m).cmp(&vr_den)
        }
        None => panic!("exponent numerator out of range"),
    }
}

/// Exact comparison of `v >= 0` against `c * X^e` with `c > 0`.
pub fn cmp_scaled_pow(v: &Rat, c: &Rat, x: u64, e: &Rat) -> Ordering {
    assert!(c.is_positive(), "scale must be positive");
    cmp_pow(&(v / c), x, e)
}

/// `floor(X^e)` for `e >= 0`.
pub fn floor_pow(x: u64, e: &Rat) -> BigInt {
    assert!(!e.is_negative());
    assert!(x >= 1);
    let (p, r) = exp_parts(e);
    let pi = p.to_u32().expect("exponent too large");
    floor_root(&BigInt::from(x).pow(pi), r)
}

/// `floor(c * X^e)` for `c >= 0` and any rational `e`.
pub fn floor_scaled_pow(c: &Rat, x: u64, e: &Rat) -> BigInt {
    assert!(!c.is_negative());
    assert!(x >= 1);
    let (p, r) = exp_parts(e);
    let pi = p.to_i32().expect("exponent too large");
    // s <= c * X^{p/r}  <=>  s^r <= c^r * X^p for integer s >= 0.
    let mut bound = Rat::new(c.numer().pow(r), c.denom().pow(r));
    let xb = BigInt::from(x);
    if pi >= 0 {
        bound *= Rat::from_integer(xb.pow(pi as u32));
    } else {
        bound /= Rat::from_integer(xb.pow((-pi) as u32));
    }
    floor_root(&bound.floor().to_integer(), r)
}

/// Approximate `X^e` as a double (diagnostics only).
pub fn pow_f64(x: u64, e: &Rat) -> f64 {
    ((x as f64).ln() * rat_to_f64(e)).exp()
}

/// One term `coeff * X^exp` of a power sum.
#[derive(Clone, Debug)]
pub struct PowTerm {
    pub coeff: Rat,
    pub exp: Rat,
}

impl PowTerm {
    pub fn new(coeff: Rat, exp: Rat) -> Self {
        Self { coeff, exp }
    }
}

/// Largest `w` such that `x` is a perfect `w`-th power, with the base.
fn perfect_power_reduce(x: u64) -> (u64, u32) {
    assert!(x >= 2);
    let max_w = 63 - x.leading_zeros().max(0);
    for w in (2..=max_w.max(2)).rev() {
        let root = floor_root(&BigInt::from(x), w);
        if root.pow(w) == BigInt::from(x) {
            return (root.to_u64().unwrap(), w);
        }
    }
    (x, 1)
}

/// Exact sign of `sum_j coeff_j * X^{exp_j}`.
///
/// Equal exponents are combined first; powers that are actually rational
/// (perfect-power bases) are folded into a rational term. What remains is a
/// nonzero combination of independent surds, so the adaptive bracketing of
/// the base root always separates it from zero.
pub fn sign_of_power_sum(x: u64, terms: &[PowTerm]) -> Ordering {
    assert!(x >= 1);
    use std::collections::BTreeMap;
    let mut by_exp: BTreeMap<Rat, Rat> = BTreeMap::new();
    for t in terms {
        *by_exp.entry(t.exp.clone()).or_insert_with(Rat::zero) += t.coeff.clone();
    }
    by_exp.retain(|_, c| !c.is_zero());
    if by_exp.is_empty() {
        return Ordering::Equal;
    }
    if x == 1 {
        let total: Rat = by_exp.values().cloned().sum();
        return total.cmp(&Rat::zero());
    }

    // Rewrite over the primitive base s with x = s^w.
    let (s, w) = perfect_power_reduce(x);
    let mut rational_part = Rat::zero();
    // Irrational residue: list of (integer exponent over s scaled by L, coeff).
    let mut irr: Vec<(BigInt, Rat)> = Vec::new();
    // L = lcm of denominators of w * exp.
    let mut l = BigInt::one();
    let scaled: Vec<(Rat, Rat)> = by_exp
        .into_iter()
        .map(|(e, c)| (e * rat_u(w as u64), c))
        .collect();
    for (e, _) in &scaled {
        l = l.lcm(e.denom());
    }
    let l_u = l.to_u32().expect("power-sum exponent lcm too large");
    for (e, c) in scaled {
        let m = (e * Rat::from_integer(l.clone())).to_integer();
        if (&m % &l).is_zero() {
            // s^{m/L} is rational: fold it in exactly.
            let k = (&m / &l).to_i32().expect("power too large");
            let sb = Rat::from_integer(BigInt::from(s));
            let val = if k >= 0 {
                pow_rat(&sb, k as u32)
            } else {
                Rat::one() / pow_rat(&sb, (-k) as u32)
            };
            rational_part += c * val;
        } else {
            irr.push((m, c));
        }
    }
    if irr.is_empty() {
        return rational_part.cmp(&Rat::zero());
    }

    // Shift exponents to be non-negative: multiply the whole sum by
    // s^{shift/L} (positive, sign-preserving). The rational part then carries
    // exponent `shift`.
    let min_m = irr
        .iter()
        .map(|(m, _)| m.clone())
        .chain(std::iter::once(BigInt::zero()))
        .min()
        .unwrap();
    let shift = -min_m;
    let mut parts: Vec<(BigInt, Rat)> = irr
        .into_iter()
        .map(|(m, c)| (m + &shift, c))
        .collect();
    if !rational_part.is_zero() {
        parts.push((shift.clone(), rational_part));
    }

    // Adaptive bracketing of t = s^{1/L}.
    let mut prec: u32 = 32;
    loop {
        // a/2^prec <= t < (a+1)/2^prec
        let a = floor_root(&(BigInt::from(s) << (prec as usize * l_u as usize)), l_u);
        let lo = Rat::new(a.clone(), BigInt::one() << prec as usize);
        let hi = Rat::new(a + 1, BigInt::one() << prec as usize);
        let mut sum_lo = Rat::zero();
        let mut sum_hi = Rat::zero();
        for (m, c) in &parts {
            let mu = m.to_u32().expect("power too large");
            let plo = pow_rat(&lo, mu);
            let phi = pow_rat(&hi, mu);
            if c.is_positive() {
                sum_lo += c * &plo;
                sum_hi += c * &phi;
            } else {
                sum_lo += c * &phi;
                sum_hi += c * &plo;
            }
        }
        if sum_lo.is_positive() {
            return Ordering::Greater;
        }
        if sum_hi.is_negative() {
            return Ordering::Less;
        }
        prec *= 2;
        assert!(
            prec <= 4096,
            "sign_of_power_sum: undecided at 4096 bits; inputs should be impossible"
        );
    }
}

fn pow_rat(base: &Rat, e: u32) -> Rat {
    Rat::new(base.numer().pow(e), base.denom().pow(e))
}

/// Element `a + b * V` of the rank-2 module over a fixed surd `V = X^{v_exp}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtVal {
    pub a: Rat,
    pub b: Rat,
}

impl ExtVal {
    pub fn zero() -> Self {
        Self {
            a: Rat::zero(),
            b: Rat::zero(),
        }
    }

    pub fn rational(a: Rat) -> Self {
        Self { a, b: Rat::zero() }
    }

    pub fn scaled(b: Rat) -> Self {
        Self { a: Rat::zero(), b }
    }

    pub fn new(a: Rat, b: Rat) -> Self {
        Self { a, b }
    }

    pub fn add(&self, other: &ExtVal) -> ExtVal {
        ExtVal::new(&self.a + &other.a, &self.b + &other.b)
    }

    pub fn sub(&self, other: &ExtVal) -> ExtVal {
        ExtVal::new(&self.a - &other.a, &self.b - &other.b)
    }

    pub fn scale(&self, c: &Rat) -> ExtVal {
        ExtVal::new(&self.a * c, &self.b * c)
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }
}

/// Comparison context fixing the surd `V = X^{v_exp} > 0`.
#[derive(Clone, Debug)]
pub struct ExtCtx {
    pub x: u64,
    pub v_exp: Rat,
}

impl ExtCtx {
    pub fn new(x: u64, v_exp: Rat) -> Self {
        assert!(x >= 1);
        Self { x, v_exp }
    }

    /// Exact sign of `a + b * V`.
    pub fn sign(&self, p: &ExtVal) -> Ordering {
        let sa = p.a.cmp(&Rat::zero());
        let sb = p.b.cmp(&Rat::zero());
        match (sa, sb) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (Ordering::Greater, Ordering::Greater) => Ordering::Greater,
            (Ordering::Less, Ordering::Less) => Ordering::Less,
            (Ordering::Greater, Ordering::Less) => {
                // sign(a - |b| V) = cmp(a / |b|, V)
                cmp_pow(&(-&p.a / &p.b), self.x, &self.v_exp)
            }
            (Ordering::Less, Ordering::Greater) => {
                // sign(b V - |a|) = cmp(|a| / b, V) reversed
                cmp_pow(&(-&p.a / &p.b), self.x, &self.v_exp).reverse()
            }
        }
    }

    pub fn cmp(&self, p: &ExtVal, q: &ExtVal) -> Ordering {
        self.sign(&p.sub(q))
    }

    pub fn v_f64(&self) -> f64 {
        pow_f64(self.x, &self.v_exp)
    }

    pub fn to_f64(&self, p: &ExtVal) -> f64 {
        rat_to_f64(&p.a) + rat_to_f64(&p.b) * self.v_f64()
    }
}

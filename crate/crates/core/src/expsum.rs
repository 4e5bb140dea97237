//! Exponential sums over integer boxes.
//!
//! The central object is `S(alpha) = sum_{x in [-X,X]^n} e(alpha_k F(x) +
//! alpha_d G(x))`. Everything else here supports the differencing story:
//! the linear-phase sum `phi` with its geometric closed form, the
//! differenced sums `f` and `g` built from the difference polynomials of
//! `x^k`, and sampled suprema of `|S|` off the major arcs.
//!
//! Phases are never accumulated as raw products `alpha * value`: the
//! fractional part of each phase is computed exactly in the rationals and
//! only then rounded once to `f64`, so magnitudes like `X^k` never meet
//! floating point. Summation uses compensated accumulators in a fixed
//! traversal order; parallel slabs are recombined in slab order, making
//! results independent of thread count.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::arith::SplitMix64;
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::exact::{floor_pow, frac, pow_f64, rat, rat_from_f64, rat_to_f64, Rat};
use crate::forms::{difference_polynomial, SystemSpec};
use crate::kahan::{Kahan, KahanC};

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Reduces `alpha * v` modulo 1 exactly, then converts once to `f64`.
enum PhaseReducer {
    /// denominator fits a machine word: pure modular arithmetic
    SmallDen { num: u64, den: u64 },
    /// arbitrary rational (e.g. a dyadic sample): exact big-rational path
    Big { alpha: Rat },
}

impl PhaseReducer {
    fn new(alpha: &Rat) -> Self {
        let a = frac(alpha);
        match (a.numer().to_u64(), a.denom().to_u64()) {
            (Some(num), Some(den)) if den < (1 << 31) => PhaseReducer::SmallDen { num, den },
            _ => PhaseReducer::Big { alpha: a },
        }
    }

    /// frac(alpha * v) in [0, 1).
    fn phase_of(&self, v: i128) -> f64 {
        match self {
            PhaseReducer::SmallDen { num, den } => {
                let q = *den as i128;
                let r = v.rem_euclid(q) as u64;
                let m = (*num as u128 * r as u128) % *den as u128;
                m as f64 / *den as f64
            }
            PhaseReducer::Big { alpha } => {
                rat_to_f64(&frac(&(alpha * Rat::from_integer(BigInt::from(v)))))
            }
        }
    }
}

fn unit(t: f64) -> (f64, f64) {
    let a = TAU * (t - t.floor());
    (a.cos(), a.sin())
}

/// The full two-phase exponential sum over `[-X, X]^n`.
pub fn eval_s(
    sys: &SystemSpec,
    alpha_k: &Rat,
    alpha_d: &Rat,
    x: u64,
    budget: &Budget,
) -> Result<Complex64> {
    let n = sys.n();
    let side = (2 * x + 1) as usize;
    let total = (side as u128).pow(n as u32);
    budget.charge_evals("exponential sum", total)?;
    let cap = BigInt::from(i128::MAX >> 2);
    if sys.f_abs_bound(x) > cap || sys.g_abs_bound(x) > cap {
        return Err(Error::invalid("x", "form values exceed the in-core 128-bit range"));
    }
    let red_k = PhaseReducer::new(alpha_k);
    let red_d = PhaseReducer::new(alpha_d);

    // Per-variable phase tables for the diagonal form, and for G when no
    // monomial couples two variables.
    let f_tab: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..side)
                .map(|j| {
                    let v = j as i128 - x as i128;
                    red_k.phase_of(sys.diag()[i] as i128 * v.pow(sys.k()))
                })
                .collect()
        })
        .collect();
    let g_diag = g_is_diagonal(sys);
    let g_tab: Option<Vec<Vec<f64>>> = g_diag.then(|| {
        (0..n)
            .map(|i| {
                (0..side)
                    .map(|j| {
                        let v = j as i128 - x as i128;
                        let mut acc: i128 = 0;
                        for m in sys.g_monomials() {
                            if m.exps[i] > 0 {
                                acc += m.coef as i128 * v.pow(m.exps[i]);
                            }
                        }
                        red_d.phase_of(acc)
                    })
                    .collect()
            })
            .collect()
    });

    fn walk(
        sys: &SystemSpec,
        f_tab: &[Vec<f64>],
        g_tab: &Option<Vec<Vec<f64>>>,
        red_d: &PhaseReducer,
        x: i64,
        depth: usize,
        phase: f64,
        point: &mut Vec<i64>,
        acc: &mut KahanC,
    ) {
        let n = sys.n();
        let side = (2 * x + 1) as usize;
        if depth == n {
            let t = match g_tab {
                Some(_) => phase,
                None => {
                    let mut g: i128 = 0;
                    for m in sys.g_monomials() {
                        let mut term = m.coef as i128;
                        for (i, &e) in m.exps.iter().enumerate() {
                            for _ in 0..e {
                                term *= point[i] as i128;
                            }
                        }
                        g += term;
                    }
                    phase + red_d.phase_of(g)
                }
            };
            let (re, im) = unit(t);
            acc.add(re, im);
            return;
        }
        for j in 0..side {
            point.push(j as i64 - x);
            let mut p = phase + f_tab[depth][j];
            if let Some(t) = g_tab {
                p += t[depth][j];
            }
            walk(sys, f_tab, g_tab, red_d, x, depth + 1, p, point, acc);
            point.pop();
        }
    }

    let slabs: Vec<(f64, f64)> = if n == 1 {
        let mut acc = KahanC::new();
        let mut point = Vec::new();
        walk(sys, &f_tab, &g_tab, &red_d, x as i64, 0, 0.0, &mut point, &mut acc);
        vec![acc.value()]
    } else {
        (0..side)
            .into_par_iter()
            .map(|j0| {
                let mut acc = KahanC::new();
                let mut point = vec![j0 as i64 - x as i64];
                let mut p = f_tab[0][j0];
                if let Some(t) = &g_tab {
                    p += t[0][j0];
                }
                walk(sys, &f_tab, &g_tab, &red_d, x as i64, 1, p, &mut point, &mut acc);
                acc.value()
            })
            .collect()
    };
    let mut total = KahanC::new();
    for (re, im) in slabs {
        total.add(re, im);
    }
    let (re, im) = total.value();
    Ok(Complex64::new(re, im))
}

fn g_is_diagonal(sys: &SystemSpec) -> bool {
    sys.g_monomials()
        .iter()
        .all(|m| m.exps.iter().filter(|&&e| e > 0).count() <= 1)
}

/// sin(pi r) with the argument reduced exactly modulo 2 first.
fn sin_pi(r: &Rat) -> f64 {
    let two = rat(2, 1);
    let reduced = r - &two * (r / &two).floor();
    (std::f64::consts::PI * rat_to_f64(&reduced)).sin()
}

/// The linear-phase sum `phi(alpha) = sum_{x=lo}^{hi} e(alpha (lead x + const))`
/// in geometric closed form, with every trigonometric argument reduced
/// exactly in the rationals first.
pub fn eval_phi(lead: &BigInt, constant: &BigInt, lo: i64, hi: i64, alpha: &Rat) -> Complex64 {
    if hi < lo {
        return Complex64::new(0.0, 0.0);
    }
    let count = (hi - lo + 1) as u64;
    let step = alpha * Rat::from_integer(lead.clone());
    if frac(&step).is_zero() {
        // the x-dependence vanishes on the integers
        let t = frac(&(alpha * Rat::from_integer(constant.clone())));
        let (re, im) = unit(rat_to_f64(&t));
        return Complex64::new(count as f64 * re, count as f64 * im);
    }
    // midpoint form: e(alpha(lead (lo+hi)/2 + const)) sin(pi step L)/sin(pi step)
    let mid = rat(lo + hi, 2);
    let center = alpha * (Rat::from_integer(lead.clone()) * mid + Rat::from_integer(constant.clone()));
    let amp = sin_pi(&(&step * rat(count as i64, 1))) / sin_pi(&step);
    let (re, im) = unit(rat_to_f64(&frac(&center)));
    Complex64::new(amp * re, amp * im)
}

/// `|phi|` without the phase factor.
pub fn phi_abs(lead: &BigInt, lo: i64, hi: i64, alpha: &Rat) -> f64 {
    if hi < lo {
        return 0.0;
    }
    let count = (hi - lo + 1) as u64;
    let step = alpha * Rat::from_integer(lead.clone());
    if frac(&step).is_zero() {
        return count as f64;
    }
    (sin_pi(&(&step * rat(count as i64, 1))) / sin_pi(&step)).abs()
}

/// `sum_{h=1}^{floor(X^{k-1})} |phi(h alpha)|` over the box `[-X, X]`, for
/// a fixed linear polynomial `lead * x + const`.
pub fn weyl_single_sum(
    lead: &BigInt,
    alpha: &Rat,
    x: u64,
    k: u32,
    budget: &Budget,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid("k", "need k >= 2"));
    }
    let h_max = floor_pow(x, &rat(k as i64 - 1, 1))
        .to_u64()
        .ok_or_else(|| Error::invalid("X", "phase count exceeds u64"))?;
    budget.charge_evals("linear-sum scan", h_max as u128)?;
    let lo = -(x as i64);
    let hi = x as i64;
    let mut acc = Kahan::new();
    for h in 1..=h_max {
        let beta = alpha * rat(h as i64, 1);
        acc.add(phi_abs(lead, lo, hi, &beta));
    }
    Ok(acc.value())
}

/// `sum over h in ([-X,X] \ {0})^{k-1} of |phi(h_1 ... h_{k-1} alpha)|`
/// with the identity linear polynomial, grouped by the product value.
pub fn weyl_product_sum(alpha: &Rat, x: u64, k: u32, budget: &Budget) -> Result<f64> {
    if k < 3 {
        return Err(Error::invalid("k", "need k >= 3"));
    }
    let d = (k - 1) as usize;
    let tuples = (2 * x as u128).pow(d as u32);
    budget.charge_evals("product-sum grouping", tuples)?;
    use std::collections::BTreeMap;
    let mut mult: BTreeMap<i128, u128> = BTreeMap::new();
    mult.insert(1, 1);
    for _ in 0..d {
        let mut next: BTreeMap<i128, u128> = BTreeMap::new();
        for (&p, &m) in &mult {
            for h in -(x as i128)..=(x as i128) {
                if h == 0 {
                    continue;
                }
                *next.entry(p * h).or_insert(0) += m;
            }
        }
        mult = next;
    }
    let lo = -(x as i64);
    let hi = x as i64;
    let one = BigInt::one();
    let mut acc = Kahan::new();
    for (&p, &m) in &mult {
        let beta = alpha * Rat::from_integer(BigInt::from(p));
        acc.add(m as f64 * phi_abs(&one, lo, hi, &beta));
    }
    Ok(acc.value())
}

/// Geometry of the iterated-differencing step at box size `X` in `d`
/// offset directions.
#[derive(Clone, Copy, Debug)]
pub struct DifferencingData {
    pub x: u64,
    pub d: u32,
}

impl DifferencingData {
    pub fn new(x: u64, d: u32) -> Self {
        Self { x, d }
    }

    /// The integer interval on which all iterated shifts by subsets of `h`
    /// stay inside `[-X, X]`; possibly empty (`hi < lo`).
    pub fn interval(&self, h: &[i64]) -> (i64, i64) {
        assert_eq!(h.len(), self.d as usize);
        let neg: i64 = h.iter().filter(|&&v| v < 0).sum();
        let pos: i64 = h.iter().filter(|&&v| v > 0).sum();
        (-(self.x as i64) - neg, self.x as i64 - pos)
    }

    pub fn interval_len(&self, h: &[i64]) -> u64 {
        let (lo, hi) = self.interval(h);
        if hi < lo {
            0
        } else {
            (hi - lo + 1) as u64
        }
    }

    /// Number of offset tuples in `[-X, X]^d` with a zero coordinate.
    pub fn zero_set_size(&self) -> u128 {
        let side = 2 * self.x as u128 + 1;
        side.pow(self.d) - (side - 1).pow(self.d)
    }
}

/// Which offset tuples participate in a differenced sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HBox {
    All,
    NonzeroOnly,
}

/// The differenced linear sum `f(beta; h) = sum_{x in I(h)} e(beta p_h(x))`.
pub fn eval_f(k: u32, beta: &Rat, h: &[i64], x: u64) -> Result<Complex64> {
    let data = DifferencingData::new(x, k - 1);
    let (lo, hi) = data.interval(h);
    if hi < lo {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let poly = difference_polynomial(k, h)?;
    if poly.is_zero() {
        // the phase polynomial collapses to zero: every term is 1
        return Ok(Complex64::new((hi - lo + 1) as f64, 0.0));
    }
    let lead = &poly.product * &poly.lead;
    let constant = &poly.product * &poly.constant;
    Ok(eval_phi(&lead, &constant, lo, hi, beta))
}

/// `g(beta; box) = sum over offsets h of |f(beta; h)|`.
pub fn eval_g_sum(k: u32, beta: &Rat, x: u64, mode: HBox, budget: &Budget) -> Result<f64> {
    let d = (k - 1) as usize;
    let side = 2 * x as u128 + 1;
    budget.charge_evals("differenced-sum scan", side.pow(d as u32))?;
    let mut h = vec![-(x as i64); d];
    let mut acc = Kahan::new();
    loop {
        let include = match mode {
            HBox::All => true,
            HBox::NonzeroOnly => h.iter().all(|&v| v != 0),
        };
        if include {
            acc.add(eval_f(k, beta, &h, x)?.norm());
        }
        // odometer over [-X, X]^d
        let mut i = 0;
        loop {
            if i == d {
                return Ok(acc.value());
            }
            if h[i] < x as i64 {
                h[i] += 1;
                break;
            }
            h[i] = -(x as i64);
            i += 1;
        }
    }
}

/// Both sides of the iterated-differencing inequality
/// `|S|^{2^d} <= (2X+1)^{(2^d-d-1) n} prod_i g(alpha_k c_i)`, in logs.
#[derive(Clone, Debug)]
pub struct ChainCheck {
    pub log_lhs: f64,
    pub log_rhs: f64,
    /// `exp(log_lhs - log_rhs)`; at most `2^d` is considered a pass.
    pub ratio: f64,
}

pub fn differencing_chain_check(
    sys: &SystemSpec,
    alpha_k: &Rat,
    alpha_d: &Rat,
    x: u64,
    budget: &Budget,
) -> Result<ChainCheck> {
    let d = sys.d();
    let n = sys.n() as f64;
    let s = eval_s(sys, alpha_k, alpha_d, x, budget)?;
    let pow = (1u64 << d) as f64;
    let log_lhs = pow * s.norm().max(f64::MIN_POSITIVE).ln();
    let mut log_rhs = (pow - d as f64 - 1.0) * n * ((2 * x + 1) as f64).ln();
    for &c in sys.diag() {
        let beta = alpha_k * rat(c, 1);
        let g = eval_g_sum(sys.k(), &beta, x, HBox::All, budget)?;
        log_rhs += g.max(f64::MIN_POSITIVE).ln();
    }
    Ok(ChainCheck {
        log_lhs,
        log_rhs,
        ratio: (log_lhs - log_rhs).exp(),
    })
}

/// One row of the sampled minor-arc supremum table.
#[derive(Clone, Debug)]
pub struct MinorSupRow {
    pub x: u64,
    pub samples: u32,
    pub max_abs: f64,
    /// `X^{n - n theta / 2^d}`
    pub envelope: f64,
    pub ratio: f64,
}

/// Sample phases with `alpha_k` in the minor arcs (rejection sampling) and
/// `alpha_d` uniform, recording the largest `|S|` seen per box size.
pub fn minor_arc_sup_diag(
    sys: &SystemSpec,
    theta: &Rat,
    x_list: &[u64],
    samples: u32,
    seed: u64,
    budget: &Budget,
) -> Result<Vec<MinorSupRow>> {
    let d = sys.d();
    let n = sys.n();
    let mut rows = Vec::new();
    for &x in x_list {
        let mut rng = SplitMix64::new(seed ^ x.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut max_abs = 0.0f64;
        for _ in 0..samples {
            let ak = crate::arcs::sample_minor_alpha(&mut rng, theta, x, sys.k(), 200, budget)?;
            let ad = rat_from_f64(rng.next_f64()).expect("finite sample");
            let s = eval_s(sys, &ak, &ad, x, budget)?.norm();
            if s > max_abs {
                max_abs = s;
            }
        }
        let exp = rat(n as i64, 1) - rat(n as i64, 1 << d) * theta;
        let envelope = pow_f64(x, &exp);
        rows.push(MinorSupRow { x, samples, max_abs, envelope, ratio: max_abs / envelope });
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    assert!(points.len() >= 2, "need at least two points for a slope");
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::Monomial;

    fn system(n: usize, k: u32, diag: Vec<i64>, g: Vec<(Vec<u32>, i64)>) -> SystemSpec {
        let monos = g
            .into_iter()
            .map(|(exps, coef)| Monomial { exps, coef })
            .collect();
        SystemSpec::new(n, k, diag, monos, None).unwrap()
    }

    fn n1() -> SystemSpec {
        system(1, 3, vec![1], vec![(vec![2], 1)])
    }

    fn mixed_n2() -> SystemSpec {
        system(2, 3, vec![1, -1], vec![(vec![2, 0], 1), (vec![0, 2], -1)])
    }

    fn cross_n2() -> SystemSpec {
        // G couples the variables, exercising the per-point G path
        system(2, 3, vec![1, 1], vec![(vec![1, 1], 1)])
    }

    #[test]
    fn s_at_zero_counts_the_box() {
        let b = Budget::default();
        let s = eval_s(&mixed_n2(), &Rat::zero(), &Rat::zero(), 5, &b).unwrap();
        assert!((s.re - 121.0).abs() < 1e-9);
        assert!(s.im.abs() < 1e-12);
    }

    #[test]
    fn s_three_term_example() {
        let b = Budget::default();
        let s = eval_s(&n1(), &rat(1, 2), &Rat::zero(), 1, &b).unwrap();
        assert!((s.re + 1.0).abs() < 1e-12, "got {s}");
        assert!(s.im.abs() < 1e-12);
    }

    #[test]
    fn s_conjugacy_and_periodicity() {
        let b = Budget::default();
        let sys = mixed_n2();
        let s1 = eval_s(&sys, &rat(1, 3), &rat(1, 7), 4, &b).unwrap();
        let s2 = eval_s(&sys, &rat(2, 3), &rat(6, 7), 4, &b).unwrap();
        assert!((s1.re - s2.re).abs() < 1e-9);
        assert!((s1.im + s2.im).abs() < 1e-9);
        let s3 = eval_s(&sys, &rat(4, 3), &rat(8, 7), 4, &b).unwrap();
        assert!((s1 - s3).norm() < 1e-9);
    }

    #[test]
    fn s_matches_exact_rational_oracle() {
        let b = Budget::default();
        let mut rng = SplitMix64::new(0xfeed);
        for sys in [n1(), mixed_n2(), cross_n2()] {
            for _ in 0..4 {
                let ak = if rng.next_below(2) == 0 {
                    rat(rng.next_below(30) as i64, 31)
                } else {
                    rat_from_f64(rng.next_f64()).unwrap()
                };
                let ad = rat(rng.next_below(16) as i64, 17);
                let x = 1 + rng.next_below(3);
                let s = eval_s(&sys, &ak, &ad, x, &b).unwrap();
                // direct exact-phase oracle
                let mut acc = KahanC::new();
                let side = (2 * x + 1) as i64;
                let n = sys.n();
                let total = (side as u64).pow(n as u32);
                for idx in 0..total {
                    let mut rem = idx;
                    let mut point = vec![0i64; n];
                    for slot in point.iter_mut() {
                        *slot = (rem % side as u64) as i64 - x as i64;
                        rem /= side as u64;
                    }
                    let f = sys.eval_f(&point).unwrap();
                    let g = sys.eval_g(&point).unwrap();
                    let t = frac(&(&ak * Rat::from_integer(f) + &ad * Rat::from_integer(g)));
                    let (re, im) = unit(rat_to_f64(&t));
                    acc.add(re, im);
                }
                let (ore, oim) = acc.value();
                let tol = 1e-9 * (side as f64).powi(n as i32);
                assert!((s.re - ore).abs() < tol && (s.im - oim).abs() < tol);
            }
        }
    }

    #[test]
    fn phi_examples_and_closed_form() {
        // all phases integral
        let p = eval_phi(&BigInt::from(6), &BigInt::from(6), 0, 2, &rat(1, 3));
        assert!((p.re - 3.0).abs() < 1e-12 && p.im.abs() < 1e-12);
        // empty interval
        let p = eval_phi(&BigInt::one(), &BigInt::zero(), 3, 2, &rat(1, 3));
        assert_eq!(p, Complex64::new(0.0, 0.0));
        // zero phase counts points
        let p = eval_phi(&BigInt::one(), &BigInt::zero(), -4, 4, &Rat::zero());
        assert!((p.re - 9.0).abs() < 1e-12);
        // random closed-form vs direct summation
        let mut rng = SplitMix64::new(0xd1ce);
        for _ in 0..500 {
            let lead = BigInt::from(rng.next_below(20) as i64 - 10);
            let constant = BigInt::from(rng.next_below(20) as i64 - 10);
            let lo = rng.next_below(30) as i64 - 15;
            let hi = lo + rng.next_below(25) as i64;
            let alpha = if rng.next_below(2) == 0 {
                rat(rng.next_below(64) as i64, 1 + rng.next_below(63) as i64)
            } else {
                rat_from_f64(rng.next_f64()).unwrap()
            };
            let closed = eval_phi(&lead, &constant, lo, hi, &alpha);
            let mut acc = KahanC::new();
            for v in lo..=hi {
                let t = frac(&(&alpha * (Rat::from_integer(&lead * v) + Rat::from_integer(constant.clone()))));
                let (re, im) = unit(rat_to_f64(&t));
                acc.add(re, im);
            }
            let (re, im) = acc.value();
            let count = (hi - lo + 1).max(0) as f64;
            assert!(
                (closed.re - re).abs() < 1e-9 * count.max(1.0)
                    && (closed.im - im).abs() < 1e-9 * count.max(1.0),
                "lead={lead} const={constant} [{lo},{hi}] alpha={alpha}: {closed} vs ({re},{im})"
            );
            assert!(closed.norm() <= count + 1e-9);
        }
    }

    #[test]
    fn weyl_single_examples() {
        let b = Budget::default();
        let one = BigInt::one();
        // alpha = 0: every term counts the box
        let v = weyl_single_sum(&one, &Rat::zero(), 10, 3, &b).unwrap();
        assert!((v - 2100.0).abs() < 1e-9);
        // alternating exact example at k = 2
        let v = weyl_single_sum(&one, &rat(1, 2), 4, 2, &b).unwrap();
        assert!((v - 20.0).abs() < 1e-9);
    }

    #[test]
    fn weyl_product_examples_and_oracle() {
        let b = Budget::default();
        let v = weyl_product_sum(&Rat::zero(), 2, 3, &b).unwrap();
        assert!((v - 80.0).abs() < 1e-9);
        let v = weyl_product_sum(&rat(1, 2), 1, 3, &b).unwrap();
        assert!((v - 4.0).abs() < 1e-9);
        // multiplicity grouping equals the naive double loop
        let one = BigInt::one();
        let mut rng = SplitMix64::new(0xbead);
        for &x in &[2u64, 5, 8] {
            let alpha = rat_from_f64(rng.next_f64()).unwrap();
            let grouped = weyl_product_sum(&alpha, x, 3, &b).unwrap();
            let mut acc = Kahan::new();
            for h1 in -(x as i64)..=(x as i64) {
                for h2 in -(x as i64)..=(x as i64) {
                    if h1 == 0 || h2 == 0 {
                        continue;
                    }
                    let beta = &alpha * rat(h1 * h2, 1);
                    acc.add(phi_abs(&one, -(x as i64), x as i64, &beta));
                }
            }
            assert!((grouped - acc.value()).abs() < 1e-6, "X={x}");
        }
    }

    #[test]
    fn differencing_intervals_and_zero_set() {
        let data = DifferencingData::new(3, 2);
        // brute-force the defining intersection
        for h1 in -3i64..=3 {
            for h2 in -3i64..=3 {
                let (lo, hi) = data.interval(&[h1, h2]);
                for v in -10i64..=10 {
                    let mut inside = true;
                    for mask in 0..4u32 {
                        let mut y = v;
                        if mask & 1 != 0 {
                            y += h1;
                        }
                        if mask & 2 != 0 {
                            y += h2;
                        }
                        if y.abs() > 3 {
                            inside = false;
                        }
                    }
                    assert_eq!(inside, v >= lo && v <= hi, "h=({h1},{h2}) v={v}");
                }
            }
        }
        assert_eq!(data.zero_set_size(), 49 - 36);
        assert!(data.zero_set_size() <= 2 * 7);
    }

    #[test]
    fn f_sum_basics() {
        // zero phase counts the interval
        let f = eval_f(3, &Rat::zero(), &[1, 1], 3).unwrap();
        assert!((f.re - 5.0).abs() < 1e-12); // I = [-3, 1]
        // a zero offset kills the polynomial: still counts the interval
        let f = eval_f(3, &rat(1, 7), &[0, 2], 3).unwrap();
        assert!((f.re - 5.0).abs() < 1e-12); // I = [-3, 1]
        assert!(f.im.abs() < 1e-12);
    }

    #[test]
    fn g_sum_matches_nested_differencing_oracle() {
        // d = 2, X = 1, beta = 1/2: compare against direct double differencing
        let b = Budget::default();
        let beta = rat(1, 2);
        let got = eval_g_sum(3, &beta, 1, HBox::All, &b).unwrap();
        let mut expect = Kahan::new();
        for h1 in -1i64..=1 {
            for h2 in -1i64..=1 {
                let data = DifferencingData::new(1, 2);
                let (lo, hi) = data.interval(&[h1, h2]);
                let mut acc = KahanC::new();
                for v in lo..=hi {
                    // p(v) = sum over subsets with signs of (v + eps . h)^3
                    let mut p = BigInt::zero();
                    for mask in 0..4u32 {
                        let mut y = BigInt::from(v);
                        let mut sign = 1i64;
                        if mask & 1 != 0 {
                            y += h1;
                        } else {
                            sign = -sign;
                        }
                        if mask & 2 != 0 {
                            y += h2;
                        } else {
                            sign = -sign;
                        }
                        p += BigInt::from(sign) * y.pow(3);
                    }
                    let t = frac(&(&beta * Rat::from_integer(p)));
                    let (re, im) = unit(rat_to_f64(&t));
                    acc.add(re, im);
                }
                let (re, im) = acc.value();
                expect.add((re * re + im * im).sqrt());
            }
        }
        assert!((got - expect.value()).abs() < 1e-9, "{got} vs {}", expect.value());
    }

    #[test]
    fn g_split_inequality() {
        let b = Budget::default();
        let mut rng = SplitMix64::new(0x5a5a);
        for _ in 0..5 {
            let beta = rat_from_f64(rng.next_f64()).unwrap();
            let x = 2 + rng.next_below(3);
            let all = eval_g_sum(3, &beta, x, HBox::All, &b).unwrap();
            let nz = eval_g_sum(3, &beta, x, HBox::NonzeroOnly, &b).unwrap();
            let data = DifferencingData::new(x, 2);
            let max_len = (2 * x + 1) as f64;
            assert!(all <= nz + data.zero_set_size() as f64 * max_len + 1e-6);
        }
    }

    #[test]
    fn chain_inequality_on_samples() {
        let b = Budget::default();
        let sys = mixed_n2();
        let mut rng = SplitMix64::new(0xc4a1);
        for _ in 0..4 {
            let ak = rat_from_f64(rng.next_f64()).unwrap();
            let ad = rat_from_f64(rng.next_f64()).unwrap();
            let x = 3 + rng.next_below(4);
            let chk = differencing_chain_check(&sys, &ak, &ad, x, &b).unwrap();
            assert!(
                chk.ratio <= (1u64 << sys.d()) as f64,
                "chain ratio {} at X={x}",
                chk.ratio
            );
        }
    }

    #[test]
    fn minor_sup_rows_are_finite() {
        let b = Budget::default();
        let sys = mixed_n2();
        let rows = minor_arc_sup_diag(&sys, &rat(2, 5), &[8, 12], 5, 42, &b).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.max_abs > 0.0 && r.ratio.is_finite() && r.ratio > 0.0);
        }
    }

    #[test]
    fn slope_of_power_law_is_recovered() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(1.7)))
            .collect();
        assert!((log_log_slope(&pts) - 1.7).abs() < 1e-12);
    }
}

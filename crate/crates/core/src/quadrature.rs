//! Oscillatory integrals over the unit box.
//!
//! `J(gamma) = integral over [-1,1]^n of e(gamma_k F + gamma_d G)` is the
//! continuous sibling of the box sum. The integrand factors over the
//! variable-interaction components of the system, so an n-variable
//! integral costs a product of small tensor grids rather than one
//! `m^n` grid. Error control is order doubling: a Gauss-Legendre rule of
//! order `m` is trusted once it agrees with the order-`2m` rule.
//!
//! This is the one corner of the crate that works in floating point
//! throughout: the integrand is smooth and the quadrature error dominates
//! rounding by many orders of magnitude.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::budget::Budget;
use crate::error::Result;
use crate::forms::SystemSpec;
use crate::kahan::KahanC;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed once per order via Newton iteration and cached process-wide.
pub fn gauss_legendre(m: u32) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&m) {
        return Arc::clone(hit);
    }
    let mut nodes = vec![0.0f64; m as usize];
    let mut weights = vec![0.0f64; m as usize];
    let n = m as usize;
    for i in 0..n.div_ceil(2) {
        // Tricomi-style initial guess, then Newton on P_m
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    let entry = Arc::new((nodes, weights));
    cache.lock().unwrap().insert(m, Arc::clone(&entry));
    entry
}

/// `(P_m(x), P_m'(x))` by the three-term recurrence.
fn legendre(m: u32, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=m as u64 {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Controls for the order-doubling tensor quadrature.
#[derive(Clone, Copy, Debug)]
pub struct QuadScheme {
    pub base_order: u32,
    pub max_order: u32,
    /// acceptance tolerance for `|J_m - J_{2m}|`
    pub tol: f64,
    /// error budget per unit area for the gamma-plane cell refinement
    pub cell_tol_density: f64,
}

impl Default for QuadScheme {
    fn default() -> Self {
        Self { base_order: 16, max_order: 2048, tol: 1e-9, cell_tol_density: 1e-7 }
    }
}

/// A quadrature value with its doubling-based error estimate.
#[derive(Clone, Copy, Debug)]
pub struct JEval {
    pub value: Complex64,
    /// `|J_m - J_{2m}|` at the accepted order.
    pub error: f64,
    /// false when even the maximal order did not settle (reported, not fatal)
    pub converged: bool,
    pub order: u32,
}

fn unit(t: f64) -> Complex64 {
    let a = TAU * t;
    Complex64::new(a.cos(), a.sin())
}

/// A component's integrand, reduced to integer data: diagonal cubic
/// coefficients per slot and the supported monomials reindexed to slots.
/// Components with equal shapes have equal integrals, and negating every
/// coefficient conjugates the integral, so shapes double as cache keys.
#[derive(Clone, PartialEq, Eq)]
struct CompShape {
    diag: Vec<i64>,
    monos: Vec<(i64, Vec<(usize, i32)>)>,
}

impl CompShape {
    fn of(sys: &SystemSpec, comp: &[usize]) -> Self {
        let diag = comp.iter().map(|&v| sys.diag()[v]).collect();
        let monos = sys
            .g_monomials()
            .iter()
            .filter(|m| {
                m.exps
                    .iter()
                    .enumerate()
                    .all(|(v, &e)| e == 0 || comp.contains(&v))
            })
            .map(|m| {
                let pows = comp
                    .iter()
                    .enumerate()
                    .filter(|&(_, &var)| m.exps[var] > 0)
                    .map(|(slot, &var)| (slot, m.exps[var] as i32))
                    .collect();
                (m.coef, pows)
            })
            .collect();
        Self { diag, monos }
    }

    fn negated(&self) -> Self {
        Self {
            diag: self.diag.iter().map(|c| -c).collect(),
            monos: self
                .monos
                .iter()
                .map(|(c, pows)| (-c, pows.clone()))
                .collect(),
        }
    }

    fn dims(&self) -> usize {
        self.diag.len()
    }
}

/// For each component, the index of the first component with the same
/// shape (or the same shape negated, which needs only a conjugation).
/// Repeated coefficients are common in diagonal pairs, and each duplicate
/// saved is one full tensor grid not evaluated.
fn shape_reps(shapes: &[CompShape]) -> Vec<(usize, bool)> {
    let mut reps = Vec::with_capacity(shapes.len());
    for i in 0..shapes.len() {
        let neg = shapes[i].negated();
        let rep = (0..i)
            .find_map(|j| {
                if shapes[j] == shapes[i] {
                    Some((j, false))
                } else if shapes[j] == neg {
                    Some((j, true))
                } else {
                    None
                }
            })
            .unwrap_or((i, false));
        reps.push(rep);
    }
    reps
}

/// One component's tensor integral at a fixed order.
fn component_integral(shape: &CompShape, k: i32, gamma_k: f64, gamma_d: f64, order: u32) -> Complex64 {
    let rule = gauss_legendre(order);
    let (nodes, weights) = (&rule.0, &rule.1);
    let dims = shape.dims();
    let diag: Vec<f64> = shape.diag.iter().map(|&c| c as f64).collect();
    let mut idx = vec![0usize; dims];
    let mut acc = KahanC::new();
    loop {
        let mut w = 1.0;
        let mut f = 0.0;
        for (slot, &c) in idx.iter().zip(&diag) {
            w *= weights[*slot];
            f += c * nodes[*slot].powi(k);
        }
        let mut g = 0.0;
        for (coef, pows) in &shape.monos {
            let mut term = *coef as f64;
            for &(slot, e) in pows {
                term *= nodes[idx[slot]].powi(e);
            }
            g += term;
        }
        let z = unit(gamma_k * f + gamma_d * g);
        acc.add(w * z.re, w * z.im);
        let mut i = 0;
        loop {
            if i == dims {
                let (re, im) = acc.value();
                return Complex64::new(re, im);
            }
            if idx[i] + 1 < order as usize {
                idx[i] += 1;
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

fn j_at_orders(
    k: i32,
    shapes: &[CompShape],
    reps: &[(usize, bool)],
    gamma_k: f64,
    gamma_d: f64,
    orders: &[u32],
) -> Complex64 {
    let mut cache: HashMap<(usize, u32), Complex64> = HashMap::new();
    let mut product = Complex64::new(1.0, 0.0);
    for (i, &(rep, conj)) in reps.iter().enumerate() {
        let key = (rep, orders[i]);
        let value = match cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = component_integral(&shapes[rep], k, gamma_k, gamma_d, orders[i]);
                cache.insert(key, v);
                v
            }
        };
        product *= if conj { value.conj() } else { value };
    }
    product
}

fn grid_cost(shapes: &[CompShape], reps: &[(usize, bool)], orders: &[u32]) -> u128 {
    let mut seen: Vec<(usize, u32)> = Vec::with_capacity(shapes.len());
    let mut cost = 0u128;
    for (i, &(rep, _)) in reps.iter().enumerate() {
        let key = (rep, orders[i]);
        if !seen.contains(&key) {
            seen.push(key);
            cost += (orders[i] as u128).pow(shapes[rep].dims() as u32);
        }
    }
    cost
}

/// Per-component phase swing in full cycles: the total variation of
/// `gamma_k F + gamma_d G` along any one axis of the component is at most
/// `2(|gamma_k| sum|c_i| + |gamma_d| sum|coef|)` because the unit-box
/// monomials have range at most 2.
fn component_cycles(
    sys: &SystemSpec,
    comps: &[Vec<usize>],
    gamma_k: f64,
    gamma_d: f64,
) -> Vec<f64> {
    comps
        .iter()
        .map(|comp| {
            let f_span: f64 = comp
                .iter()
                .map(|&v| sys.diag()[v].unsigned_abs() as f64)
                .sum();
            let g_span: f64 = sys
                .g_monomials()
                .iter()
                .filter(|m| {
                    m.exps
                        .iter()
                        .enumerate()
                        .all(|(v, &e)| e == 0 || comp.contains(&v))
                })
                .map(|m| m.coef.unsigned_abs() as f64)
                .sum();
            2.0 * (gamma_k.abs() * f_span + gamma_d.abs() * g_span)
        })
        .collect()
}

/// Admissible rule orders. Quantizing to a geometric ladder keeps the
/// node cache small: orders would otherwise vary continuously with gamma
/// and every distinct order pays a fresh Newton solve.
const ORDER_LADDER: [u32; 19] = [
    8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1024, 1536, 2048, 3072, 4096,
];

fn ladder_rung(want: f64, scheme: &QuadScheme) -> u32 {
    let floor = scheme.base_order.max(8);
    let target = want.max(floor as f64);
    for &m in &ORDER_LADDER {
        if m as f64 >= target {
            return m.min(scheme.max_order.max(8));
        }
    }
    ORDER_LADDER[ORDER_LADDER.len() - 1].min(scheme.max_order.max(8))
}

fn rung_above(m: u32, scheme: &QuadScheme) -> u32 {
    for &r in &ORDER_LADDER {
        if r > m {
            return r.min(scheme.max_order.max(8));
        }
    }
    m
}

/// The oscillatory integral `J(gamma)`. The starting order gives four
/// nodes per cycle (safely past the Gauss-Legendre resolution cliff at
/// about pi nodes per cycle); the value is verified against the next
/// ladder rung and the orders climb only on disagreement.
pub fn eval_j(
    sys: &SystemSpec,
    gamma_k: f64,
    gamma_d: f64,
    scheme: &QuadScheme,
    budget: &Budget,
) -> Result<JEval> {
    let comps = sys.interaction_components();
    let shapes: Vec<CompShape> = comps.iter().map(|c| CompShape::of(sys, c)).collect();
    let reps = shape_reps(&shapes);
    let k = sys.k() as i32;
    let cycles = component_cycles(sys, &comps, gamma_k, gamma_d);
    let mut orders: Vec<u32> = cycles
        .iter()
        .map(|&c| ladder_rung(4.0 * c, scheme))
        .collect();
    budget.charge_quad("oscillatory integrand grid", grid_cost(&shapes, &reps, &orders))?;
    let mut prev = j_at_orders(k, &shapes, &reps, gamma_k, gamma_d, &orders);
    loop {
        let next_orders: Vec<u32> = orders.iter().map(|&m| rung_above(m, scheme)).collect();
        if next_orders == orders {
            // every component is already at the ceiling
            let order = orders.iter().copied().max().unwrap_or(8);
            return Ok(JEval { value: prev, error: f64::NAN, converged: false, order });
        }
        budget.charge_quad(
            "oscillatory integrand grid",
            grid_cost(&shapes, &reps, &next_orders),
        )?;
        let next = j_at_orders(k, &shapes, &reps, gamma_k, gamma_d, &next_orders);
        let diff = (next - prev).norm();
        if diff <= scheme.tol {
            let order = next_orders.iter().copied().max().unwrap_or(8);
            return Ok(JEval { value: next, error: diff, converged: true, order });
        }
        prev = next;
        orders = next_orders;
    }
}

/// The box-scaled variant `X^n J(X^k gamma_k, X^d gamma_d)`.
pub fn eval_j_x(
    sys: &SystemSpec,
    gamma_k: f64,
    gamma_d: f64,
    x: u64,
    scheme: &QuadScheme,
    budget: &Budget,
) -> Result<JEval> {
    let xk = (x as f64).powi(sys.k() as i32);
    let xd = (x as f64).powi(sys.d() as i32);
    let inner = eval_j(sys, xk * gamma_k, xd * gamma_d, scheme, budget)?;
    let scale = (x as f64).powi(sys.n() as i32);
    Ok(JEval {
        value: scale * inner.value,
        error: scale * inner.error,
        converged: inner.converged,
        order: inner.order,
    })
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

    #[test]
    fn nodes_integrate_polynomials_exactly() {
        for m in [2u32, 5, 16, 33] {
            let rule = gauss_legendre(m);
            let (nodes, weights) = (&rule.0, &rule.1);
            assert_eq!(nodes.len(), m as usize);
            // weights sum to the interval length
            let total: f64 = weights.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "m={m}");
            // exact for degree 2m-1: check x^2 and x^4 where applicable
            let q2: f64 = nodes.iter().zip(weights).map(|(x, w)| w * x * x).sum();
            assert!((q2 - 2.0 / 3.0).abs() < 1e-13, "m={m}");
            if m >= 3 {
                let q4: f64 = nodes.iter().zip(weights).map(|(x, w)| w * x.powi(4)).sum();
                assert!((q4 - 2.0 / 5.0).abs() < 1e-13, "m={m}");
            }
        }
    }

    #[test]
    fn j_at_zero_is_box_volume() {
        let b = Budget::default();
        for sys in [
            n1(),
            system(2, 3, vec![1, -1], vec![(vec![2, 0], 1), (vec![0, 2], -1)]),
            system(2, 3, vec![1, 1], vec![(vec![1, 1], 1)]),
        ] {
            let j = eval_j(&sys, 0.0, 0.0, &QuadScheme::default(), &b).unwrap();
            let expect = 2.0f64.powi(sys.n() as i32);
            assert!(j.converged);
            assert!((j.value.re - expect).abs() < 1e-9);
            assert!(j.value.im.abs() < 1e-12);
        }
    }

    #[test]
    fn odd_phase_symmetry_kills_imaginary_part() {
        let b = Budget::default();
        for g in [0.3f64, 1.0, 2.5, 7.0] {
            let j = eval_j(&n1(), g, 0.0, &QuadScheme::default(), &b).unwrap();
            assert!(j.value.im.abs() < 1e-9, "gamma={g}: {}", j.value.im);
        }
    }

    #[test]
    fn matches_adaptive_simpson_oracle() {
        // n=1, F = x^3, G = x^2 at gamma = (1, 0)
        let b = Budget::default();
        let j = eval_j(&n1(), 1.0, 0.0, &QuadScheme::default(), &b).unwrap();
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fb: f64, fm: f64, eps: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() < 15.0 * eps {
                left + right + (left + right - whole) / 15.0
            } else {
                simpson(f, a, m, fa, fm, flm, eps / 2.0, depth - 1)
                    + simpson(f, m, b, fm, fb, frm, eps / 2.0, depth - 1)
            }
        }
        let re = |x: f64| (TAU * x.powi(3)).cos();
        let im = |x: f64| (TAU * x.powi(3)).sin();
        let oracle_re = simpson(&re, -1.0, 1.0, re(-1.0), re(1.0), re(0.0), 1e-10, 30);
        let oracle_im = simpson(&im, -1.0, 1.0, im(-1.0), im(1.0), im(0.0), 1e-10, 30);
        assert!((j.value.re - oracle_re).abs() < 1e-6, "{} vs {oracle_re}", j.value.re);
        assert!((j.value.im - oracle_im).abs() < 1e-6);
    }

    #[test]
    fn magnitude_never_exceeds_box_volume() {
        let b = Budget::default();
        let sys = system(2, 3, vec![1, -1], vec![(vec![2, 0], 1), (vec![0, 2], -1)]);
        for &(gk, gd) in &[(0.5, 0.5), (3.0, 1.0), (10.0, 4.0), (25.0, 0.0)] {
            let j = eval_j(&sys, gk, gd, &QuadScheme::default(), &b).unwrap();
            assert!(j.value.norm() <= 4.0 + 1e-9, "({gk},{gd})");
        }
    }

    #[test]
    fn scaled_variant_matches_direct_box_quadrature() {
        // n=1, X=2: by substitution, X J(X^3 g_k, X^2 g_d) integrates over [-2,2]
        let b = Budget::default();
        let sys = n1();
        let scheme = QuadScheme::default();
        let jx = eval_j_x(&sys, 0.07, 0.05, 2, &scheme, &b).unwrap();
        // direct quadrature over [-2, 2] of e(g_k x^3 + g_d x^2)
        let rule = gauss_legendre(256);
        let mut acc = KahanC::new();
        for (x, w) in rule.0.iter().zip(&rule.1) {
            let t = 2.0 * x; // map [-1,1] -> [-2,2]
            let z = unit(0.07 * t.powi(3) + 0.05 * t * t);
            acc.add(2.0 * w * z.re, 2.0 * w * z.im);
        }
        let (re, im) = acc.value();
        assert!((jx.value.re - re).abs() < 1e-6 && (jx.value.im - im).abs() < 1e-6);
        // zero phase: (2X)^n exactly
        let j0 = eval_j_x(&sys, 0.0, 0.0, 2, &scheme, &b).unwrap();
        assert!((j0.value.re - 4.0).abs() < 1e-9);
        // definition instantiated at gamma = (X^-k, X^-d)
        let j1 = eval_j(&sys, 1.0, 1.0, &scheme, &b).unwrap();
        let jx1 = eval_j_x(&sys, 0.125, 0.25, 2, &scheme, &b).unwrap();
        assert!((jx1.value - 2.0 * j1.value).norm() < 1e-9);
    }

    #[test]
    fn decay_trend_in_first_phase() {
        // |J(g, 0)| should fall roughly like g^{-n/2^d} for the small samples
        let b = Budget::default();
        let systems = [
            n1(),
            system(2, 3, vec![1, -1], vec![(vec![2, 0], 1), (vec![0, 2], -1)]),
            system(3, 3, vec![1, 1, -1], vec![(vec![2, 0, 0], 1), (vec![0, 2, 0], 1), (vec![0, 0, 2], -1)]),
        ];
        for sys in &systems {
            let pts: Vec<(f64, f64)> = [4.0f64, 8.0, 16.0, 32.0]
                .iter()
                .map(|&g| {
                    let j = eval_j(sys, g, 0.0, &QuadScheme::default(), &b).unwrap();
                    (g, j.value.norm())
                })
                .collect();
            let slope = crate::expsum::log_log_slope(&pts);
            let cap = -(sys.n() as f64) / (1u64 << sys.d()) as f64 + 0.2;
            assert!(slope <= cap, "n={} slope {slope} cap {cap}", sys.n());
        }
    }

    #[test]
    fn point_reflection_conjugates_exactly() {
        // J(-gamma) = conj J(gamma) bit-for-bit: the phase tables negate
        // exactly and complex multiplication mirrors sign patterns. The
        // truncated-integral code halves its work on the strength of this.
        let b = Budget::default();
        let scheme = QuadScheme::default();
        let systems = [
            n1(),
            system(2, 3, vec![1, -1], vec![(vec![2, 0], 2), (vec![0, 2], -3)]),
            system(2, 3, vec![2, 1], vec![(vec![1, 1], 1)]),
        ];
        for sys in &systems {
            for &(gk, gd) in &[(0.3, 0.7), (2.25, -1.5), (5.0, 8.125)] {
                let plus = eval_j(sys, gk, gd, &scheme, &b).unwrap();
                let minus = eval_j(sys, -gk, -gd, &scheme, &b).unwrap();
                assert_eq!(minus.value.re.to_bits(), plus.value.re.to_bits());
                assert_eq!(minus.value.im.to_bits(), (-plus.value.im).to_bits());
            }
        }
    }

    #[test]
    fn budget_caps_the_grid() {
        let b = Budget { max_quad_evals: 10, ..Budget::default() };
        let err = eval_j(&n1(), 0.0, 0.0, &QuadScheme::default(), &b).unwrap_err();
        assert!(matches!(err, crate::error::Error::Budget { .. }));
    }
}

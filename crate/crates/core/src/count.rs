//! Counting integer solutions of `F(x) = G(x) = 0`.
//!
//! Three routes to the same number, used to cross-check one another:
//!
//! * direct enumeration of the box `[-X, X]^n` with per-variable power
//!   tables and a running partial sum;
//! * a meet-in-the-middle join: split the variables in half, tabulate the
//!   value pairs of one half, sort, and probe with the negated values of
//!   the other half;
//! * a discrete-Fourier identity on small boxes: averaging the exponential
//!   sum over a full grid of rational phases recovers the count, which
//!   exercises the same machinery the arc analysis relies on.
//!
//! Also here: counts of solutions modulo `q` (direct scan, CRT across prime
//! powers, and exact level-by-level lifting for prime powers too large to
//! scan), which feed the local density computations.

use std::time::Instant;

use num_bigint::BigInt;
use rayon::prelude::*;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::forms::SystemSpec;
use crate::kahan::KahanC;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CountMethod {
    Enumerate,
    MeetInMiddle,
    Dft,
}

impl std::fmt::Display for CountMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CountMethod::Enumerate => write!(f, "enumerate"),
            CountMethod::MeetInMiddle => write!(f, "mitm"),
            CountMethod::Dft => write!(f, "dft"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CountResult {
    pub x: u64,
    pub count: u128,
    pub method: CountMethod,
    pub seconds: f64,
    /// Distance of the phase-average from the integer it should hit
    /// (DFT method only).
    pub residual: Option<f64>,
}

/// `(2X+1)^m` with overflow detection.
fn box_size(x: u64, m: usize) -> Result<u128> {
    let side = 2u128 * x as u128 + 1;
    let mut total = 1u128;
    for _ in 0..m {
        total = total
            .checked_mul(side)
            .ok_or_else(|| Error::invalid("x", "box size overflows u128"))?;
    }
    Ok(total)
}

/// Guard: all F- and G-values over the box fit comfortably in `i128`.
fn check_i128_range(sys: &SystemSpec, x: u64) -> Result<()> {
    let cap = BigInt::from(i128::MAX >> 2);
    if sys.f_abs_bound(x) > cap || sys.g_abs_bound(x) > cap {
        return Err(Error::invalid(
            "x",
            "form values exceed the in-core 128-bit range at this box size",
        ));
    }
    Ok(())
}

/// Per-variable tables `tab[i][xi + X] = c_i * xi^k` for the diagonal form.
fn diag_tables(coefs: &[i64], exp: u32, x: u64) -> Vec<Vec<i128>> {
    let side = (2 * x + 1) as usize;
    coefs
        .iter()
        .map(|&c| {
            (0..side)
                .map(|j| {
                    let xi = j as i128 - x as i128;
                    c as i128 * xi.pow(exp)
                })
                .collect()
        })
        .collect()
}

/// If G is diagonal (no monomial couples two variables), its per-variable
/// tables; otherwise `None`.
fn g_diag_tables(sys: &SystemSpec, x: u64) -> Option<Vec<Vec<i128>>> {
    let side = (2 * x + 1) as usize;
    let mut tabs = vec![vec![0i128; side]; sys.n()];
    for m in sys.g_monomials() {
        let support: Vec<usize> = (0..sys.n()).filter(|&i| m.exps[i] > 0).collect();
        if support.len() > 1 {
            return None;
        }
        let i = support[0];
        for (j, slot) in tabs[i].iter_mut().enumerate() {
            let xi = j as i128 - x as i128;
            *slot += m.coef as i128 * xi.pow(m.exps[i]);
        }
    }
    Some(tabs)
}

fn eval_g_i128(sys: &SystemSpec, point: &[i64]) -> i128 {
    let mut acc: i128 = 0;
    for m in sys.g_monomials() {
        let mut term = m.coef as i128;
        for (i, &e) in m.exps.iter().enumerate() {
            for _ in 0..e {
                term *= point[i] as i128;
            }
        }
        acc += term;
    }
    acc
}

/// Direct enumeration of `[-X, X]^n`.
pub fn count_enumerate(sys: &SystemSpec, x: u64, budget: &Budget) -> Result<CountResult> {
    let start = Instant::now();
    let n = sys.n();
    budget.charge_evals("box enumeration", box_size(x, n)?)?;
    check_i128_range(sys, x)?;
    let side = (2 * x + 1) as usize;
    let f_tab = diag_tables(sys.diag(), sys.k(), x);
    let g_tab = g_diag_tables(sys, x);

    // Depth-first walk with running partial sums; the outermost variable is
    // split across threads and the per-slab counts recombined in index order.
    fn walk(
        sys: &SystemSpec,
        f_tab: &[Vec<i128>],
        g_tab: &Option<Vec<Vec<i128>>>,
        x: i64,
        depth: usize,
        f_acc: i128,
        g_acc: i128,
        point: &mut Vec<i64>,
    ) -> u128 {
        let n = sys.n();
        let side = (2 * x + 1) as usize;
        if depth == n {
            let g_total = match g_tab {
                Some(_) => g_acc,
                None => eval_g_i128(sys, point),
            };
            return (f_acc == 0 && g_total == 0) as u128;
        }
        let mut total = 0u128;
        for j in 0..side {
            point.push(j as i64 - x);
            let f_next = f_acc + f_tab[depth][j];
            let g_next = match g_tab {
                Some(t) => g_acc + t[depth][j],
                None => 0,
            };
            total += walk(sys, f_tab, g_tab, x, depth + 1, f_next, g_next, point);
            point.pop();
        }
        total
    }

    let count: u128 = if n == 1 {
        let mut point = Vec::new();
        walk(sys, &f_tab, &g_tab, x as i64, 0, 0, 0, &mut point)
    } else {
        (0..side)
            .into_par_iter()
            .map(|j0| {
                let x0 = j0 as i64 - x as i64;
                let mut point = vec![x0];
                let g0 = g_tab.as_ref().map_or(0, |t| t[0][j0]);
                walk(sys, &f_tab, &g_tab, x as i64, 1, f_tab[0][j0], g0, &mut point)
            })
            .sum()
    };
    Ok(CountResult {
        x,
        count,
        method: CountMethod::Enumerate,
        seconds: start.elapsed().as_secs_f64(),
        residual: None,
    })
}

/// Decode a mixed-radix index into box coordinates `[-X, X]^m`.
fn decode_point(mut idx: u64, x: u64, m: usize, out: &mut [i64]) {
    let side = 2 * x + 1;
    for slot in out.iter_mut().take(m) {
        *slot = (idx % side) as i64 - x as i64;
        idx /= side;
    }
}

/// Value pairs of one half of the variables over its box, as a sorted vector.
fn half_pairs(
    sys: &SystemSpec,
    x: u64,
    vars: std::ops::Range<usize>,
    g_tab: &Option<Vec<Vec<i128>>>,
    f_tab: &[Vec<i128>],
) -> Vec<(i128, i128)> {
    let m = vars.len();
    let side = 2 * x + 1;
    let total = (side as u128).pow(m as u32) as u64;
    let mut out: Vec<(i128, i128)> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut coords = vec![0i64; m];
            decode_point(idx, x, m, &mut coords);
            let mut f: i128 = 0;
            let mut g: i128 = 0;
            for (off, &c) in coords.iter().enumerate() {
                let i = vars.start + off;
                let j = (c + x as i64) as usize;
                f += f_tab[i][j];
                if let Some(t) = g_tab {
                    g += t[i][j];
                }
            }
            if g_tab.is_none() {
                // restrict G to this half: other variables are zero
                let mut full = vec![0i64; sys.n()];
                full[vars.start..vars.start + m].copy_from_slice(&coords);
                g = eval_g_i128(sys, &full);
            }
            (f, g)
        })
        .collect();
    out.par_sort_unstable();
    out
}

/// Meet-in-the-middle count. Splits the variables into a left half (which
/// gets the extra variable when `n` is odd) and a right half.
///
/// When every monomial of G stays within one half, the join is exact on the
/// pair `(F, G)` of both halves. Otherwise the join matches `F` only and the
/// candidates are re-evaluated in full, which is still exact but can degrade
/// toward enumeration cost if F has massive level sets.
pub fn count_mitm(sys: &SystemSpec, x: u64, budget: &Budget) -> Result<CountResult> {
    let start = Instant::now();
    let n = sys.n();
    if n < 2 {
        return Err(Error::invalid("n", "meet-in-the-middle needs at least 2 variables"));
    }
    check_i128_range(sys, x)?;
    let n_l = n.div_ceil(2);
    let left_size = box_size(x, n_l)?;
    let right_size = box_size(x, n - n_l)?;
    budget.charge_evals("meet-in-the-middle halves", left_size + right_size)?;
    if left_size > u64::MAX as u128 {
        return Err(Error::invalid("x", "half-box too large to index"));
    }
    let side = 2 * x + 1;
    let f_tab = diag_tables(sys.diag(), sys.k(), x);
    let g_tab = g_diag_tables(sys, x);
    let left_mask: Vec<bool> = (0..n).map(|i| i < n_l).collect();
    let separable = g_tab.is_some() || sys.g_separable_across(&left_mask);

    let count: u128 = if separable {
        let left = half_pairs(sys, x, 0..n_l, &g_tab, &f_tab);
        let m_r = n - n_l;
        let right_total = (side as u128).pow(m_r as u32) as u64;
        (0..right_total)
            .into_par_iter()
            .map(|idx| {
                let mut coords = vec![0i64; m_r];
                decode_point(idx, x, m_r, &mut coords);
                let mut f: i128 = 0;
                let mut g: i128 = 0;
                for (off, &c) in coords.iter().enumerate() {
                    let i = n_l + off;
                    let j = (c + x as i64) as usize;
                    f += f_tab[i][j];
                    if let Some(t) = &g_tab {
                        g += t[i][j];
                    }
                }
                if g_tab.is_none() {
                    let mut full = vec![0i64; n];
                    full[n_l..].copy_from_slice(&coords);
                    g = eval_g_i128(sys, &full);
                }
                let target = (-f, -g);
                let lo = left.partition_point(|&p| p < target);
                let hi = left.partition_point(|&p| p <= target);
                (hi - lo) as u128
            })
            .sum()
    } else {
        count_mitm_f_keyed(sys, x, n_l, &f_tab, budget)?
    };
    Ok(CountResult {
        x,
        count,
        method: CountMethod::MeetInMiddle,
        seconds: start.elapsed().as_secs_f64(),
        residual: None,
    })
}

/// Fallback join on F alone: index the left half by its F-value and
/// re-evaluate G on every candidate pair. Candidate pairs are charged
/// against the budget as they are consumed.
fn count_mitm_f_keyed(
    sys: &SystemSpec,
    x: u64,
    n_l: usize,
    f_tab: &[Vec<i128>],
    budget: &Budget,
) -> Result<u128> {
    let n = sys.n();
    let side = 2 * x + 1;
    let left_total = (side as u128).pow(n_l as u32) as u64;
    let mut left: Vec<(i128, u64)> = (0..left_total)
        .into_par_iter()
        .map(|idx| {
            let mut coords = vec![0i64; n_l];
            decode_point(idx, x, n_l, &mut coords);
            let mut f: i128 = 0;
            for (off, &c) in coords.iter().enumerate() {
                f += f_tab[off][(c + x as i64) as usize];
            }
            (f, idx)
        })
        .collect();
    left.par_sort_unstable();

    let m_r = n - n_l;
    let right_total = (side as u128).pow(m_r as u32) as u64;
    let mut count = 0u128;
    let mut pairs: u128 = left_total as u128 + right_total as u128;
    let mut point = vec![0i64; n];
    for idx in 0..right_total {
        decode_point(idx, x, m_r, &mut point[n_l..]);
        let mut f_r: i128 = 0;
        for off in 0..m_r {
            f_r += f_tab[n_l + off][(point[n_l + off] + x as i64) as usize];
        }
        let target = -f_r;
        let lo = left.partition_point(|&(f, _)| f < target);
        let hi = left.partition_point(|&(f, _)| f <= target);
        pairs += (hi - lo) as u128;
        budget.charge_evals("meet-in-the-middle candidate pairs", pairs)?;
        for &(_, l_idx) in &left[lo..hi] {
            decode_point(l_idx, x, n_l, &mut point[..n_l]);
            if eval_g_i128(sys, &point) == 0 {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Exact maxima of |F| and |G| over the box, by enumeration.
fn box_maxima(sys: &SystemSpec, x: u64) -> (i128, i128) {
    let n = sys.n();
    let side = (2 * x + 1) as usize;
    let total = (side as u128).pow(n as u32) as u64;
    let f_tab = diag_tables(sys.diag(), sys.k(), x);
    (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut coords = vec![0i64; n];
            decode_point(idx, x, n, &mut coords);
            let mut f: i128 = 0;
            for (i, &c) in coords.iter().enumerate() {
                f += f_tab[i][(c + x as i64) as usize];
            }
            (f.abs(), eval_g_i128(sys, &coords).abs())
        })
        .reduce(|| (0, 0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
}

/// Count via the discrete orthogonality identity: averaging the exponential
/// sum over the full grid of phases `(a/M_k, b/M_d)` with `M > 2 max |form|`
/// isolates the solutions. Returns the modulus sizes actually used.
pub fn count_dft(sys: &SystemSpec, x: u64, budget: &Budget) -> Result<(CountResult, u64, u64)> {
    let start = Instant::now();
    let n = sys.n();
    let total = box_size(x, n)?;
    check_i128_range(sys, x)?;
    let (max_f, max_g) = box_maxima(sys, x);
    let m_k = 2 * max_f as u128 + 1;
    let m_d = 2 * max_g as u128 + 1;
    if m_k > 1 << 22 || m_d > 1 << 22 {
        return Err(Error::invalid("x", "phase grid too large for the DFT check"));
    }
    let (m_k, m_d) = (m_k as usize, m_d as usize);
    // histogram pass + factored phase sums
    budget.charge_evals(
        "dft phase grid",
        total + (m_k as u128 * m_d as u128) * (m_k as u128 + m_d as u128),
    )?;

    let f_tab = diag_tables(sys.diag(), sys.k(), x);
    let side = (2 * x + 1) as usize;
    let mut hist = vec![vec![0u64; m_d]; m_k];
    let mut coords = vec![0i64; n];
    for idx in 0..total as u64 {
        decode_point(idx, x, n, &mut coords);
        let mut f: i128 = 0;
        for (i, &c) in coords.iter().enumerate() {
            f += f_tab[i][(c + x as i64) as usize];
        }
        let g = eval_g_i128(sys, &coords);
        let fr = f.rem_euclid(m_k as i128) as usize;
        let gr = g.rem_euclid(m_d as i128) as usize;
        hist[fr][gr] += 1;
    }
    let _ = side;

    let root_k = roots_of_unity(m_k);
    let root_d = roots_of_unity(m_d);

    // T[fr][b] = sum_gr hist[fr][gr] e(b gr / M_d)
    let t: Vec<Vec<(f64, f64)>> = (0..m_k)
        .map(|fr| {
            (0..m_d)
                .map(|b| {
                    let mut acc = KahanC::new();
                    for gr in 0..m_d {
                        let h = hist[fr][gr];
                        if h == 0 {
                            continue;
                        }
                        let (re, im) = root_d[b * gr % m_d];
                        acc.add(h as f64 * re, h as f64 * im);
                    }
                    acc.value()
                })
                .collect()
        })
        .collect();

    // total phase average = (1 / M_k M_d) sum_{a,b} sum_fr T[fr][b] e(a fr / M_k)
    let mut grand = KahanC::new();
    for a in 0..m_k {
        for b in 0..m_d {
            let mut acc = KahanC::new();
            for (fr, row) in t.iter().enumerate() {
                let (tre, tim) = row[b];
                let (re, im) = root_k[a * fr % m_k];
                acc.add(tre * re - tim * im, tre * im + tim * re);
            }
            let (re, im) = acc.value();
            grand.add(re, im);
        }
    }
    let (g_re, g_im) = grand.value();
    let scale = (m_k as f64) * (m_d as f64);
    let est_re = g_re / scale;
    let est_im = g_im / scale;
    let rounded = est_re.round();
    let residual = ((est_re - rounded).powi(2) + est_im.powi(2)).sqrt();
    let tol = 1e-6;
    if residual >= tol || rounded < 0.0 {
        return Err(Error::NumericFault {
            what: "dft phase average".into(),
            residual,
            tol,
        });
    }
    let exact = hist[0][0] as u128;
    if rounded as u128 != exact {
        return Err(Error::NumericFault {
            what: "dft count disagrees with histogram".into(),
            residual: (rounded - exact as f64).abs(),
            tol,
        });
    }
    Ok((
        CountResult {
            x,
            count: exact,
            method: CountMethod::Dft,
            seconds: start.elapsed().as_secs_f64(),
            residual: Some(residual),
        },
        m_k as u64,
        m_d as u64,
    ))
}

fn roots_of_unity(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|j| {
            let t = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            (t.cos(), t.sin())
        })
        .collect()
}

/// Count with an automatically chosen method: meet-in-the-middle once the
/// box is big enough for the join to pay off, enumeration otherwise.
pub fn count_auto(sys: &SystemSpec, x: u64, budget: &Budget) -> Result<CountResult> {
    if sys.n() >= 4 && x >= 4 {
        count_mitm(sys, x, budget)
    } else {
        count_enumerate(sys, x, budget)
    }
}

// ---------------------------------------------------------------------------
// solution counts modulo q
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModMethod {
    Direct,
    CrtProduct,
    Lift,
}

impl std::fmt::Display for ModMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModMethod::Direct => write!(f, "direct"),
            ModMethod::CrtProduct => write!(f, "crt"),
            ModMethod::Lift => write!(f, "lift"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModCount {
    pub q: u64,
    pub count: u128,
    pub method: ModMethod,
}

fn pow_u128(base: u64, exp: u32) -> Result<u128> {
    (base as u128)
        .checked_pow(exp)
        .ok_or_else(|| Error::invalid("q", "modulus power overflows"))
}

/// Solutions of the pair modulo `q`, each coordinate in `0..q`.
pub fn solutions_mod(sys: &SystemSpec, q: u64, budget: &Budget) -> Result<Vec<Vec<i64>>> {
    let n = sys.n();
    let total = pow_u128(q, n as u32)?;
    budget.charge_evals("residue box scan", total)?;
    let total = total as u64;
    let mut sols = Vec::new();
    let mut coords = vec![0i64; n];
    for idx in 0..total {
        let mut rem = idx;
        for slot in coords.iter_mut() {
            *slot = (rem % q) as i64;
            rem /= q;
        }
        let (f, g) = sys.eval_mod(&coords, q)?;
        if f == 0 && g == 0 {
            sols.push(coords.clone());
        }
    }
    Ok(sols)
}

/// Number of solutions of the pair modulo `q`.
///
/// Composite `q` is split by CRT. A prime power whose direct scan would
/// blow the budget is handled by lifting solution lists level by level,
/// which is exact and usually far cheaper because solution counts grow
/// much more slowly than the scan.
pub fn count_mod(sys: &SystemSpec, q: u64, budget: &Budget) -> Result<ModCount> {
    if q == 0 {
        return Err(Error::invalid("q", "modulus must be positive"));
    }
    if q == 1 {
        return Ok(ModCount { q, count: 1, method: ModMethod::Direct });
    }
    let factors = crate::arith::factorize(q);
    if factors.len() > 1 {
        let mut count: u128 = 1;
        for &(p, h) in &factors {
            let pp = pow_u128(p, h)? as u64;
            count = count
                .checked_mul(count_mod(sys, pp, budget)?.count)
                .ok_or_else(|| Error::invalid("q", "solution count overflows u128"))?;
        }
        return Ok(ModCount { q, count, method: ModMethod::CrtProduct });
    }
    let (p, h) = factors[0];
    let n = sys.n() as u32;
    let direct_cost = pow_u128(q, n)?;
    if direct_cost <= budget.max_evals as u128 / 4 {
        let count = solutions_mod(sys, q, budget)?.len() as u128;
        return Ok(ModCount { q, count, method: ModMethod::Direct });
    }
    let levels = prime_power_solution_counts(sys, p, h, budget)?;
    match levels.counts.get(h as usize - 1) {
        Some(&count) => Ok(ModCount { q, count, method: ModMethod::Lift }),
        None => Err(Error::Budget {
            what: format!("lifting solutions to modulus {p}^{h}"),
            needed: levels.next_cost,
            cap: budget.max_evals as u128,
        }),
    }
}

/// Solution counts modulo `p, p^2, ..., p^h` (as far as the budget allows).
#[derive(Clone, Debug)]
pub struct PrimePowerCounts {
    pub p: u64,
    /// `counts[j-1]` is the solution count modulo `p^j`.
    pub counts: Vec<u128>,
    /// Levels beyond `counts.len()` were skipped because the next lift
    /// would have cost this many evaluations.
    pub next_cost: u128,
}

impl PrimePowerCounts {
    pub fn truncated(&self, h: u32) -> bool {
        self.counts.len() < h as usize
    }
}

/// Count solutions modulo successive powers of a prime by exact lifting:
/// scan `(Z/p)^n` once, then extend each solution modulo `p^j` by every
/// possible correction `p^j t`, keeping those that survive modulo
/// `p^{j+1}`. No smoothness assumption is involved.
pub fn prime_power_solution_counts(
    sys: &SystemSpec,
    p: u64,
    h: u32,
    budget: &Budget,
) -> Result<PrimePowerCounts> {
    if !crate::arith::is_prime(p) {
        return Err(Error::NotPrime(p));
    }
    if h == 0 {
        return Err(Error::invalid("h", "need at least one level"));
    }
    let n = sys.n() as u32;
    let p_n = pow_u128(p, n)?;
    let mut spent: u128 = 0;
    let cap = budget.max_evals as u128;

    // level 1: direct scan
    if p_n > cap {
        return Ok(PrimePowerCounts { p, counts: Vec::new(), next_cost: p_n });
    }
    spent += p_n;
    budget.charge_evals("residue box scan", spent)?;
    let mut sols = {
        let scan_budget = Budget { max_evals: u64::MAX, ..*budget };
        solutions_mod(sys, p, &scan_budget)?
    };
    let mut counts = vec![sols.len() as u128];

    let mut modulus: u64 = p;
    for j in 1..h {
        let next_mod = match modulus.checked_mul(p) {
            Some(m) if m < 1 << 62 => m,
            _ => {
                return Ok(PrimePowerCounts { p, counts, next_cost: u128::MAX });
            }
        };
        let lift_cost = (sols.len() as u128).saturating_mul(p_n);
        if spent + lift_cost > cap {
            return Ok(PrimePowerCounts { p, counts, next_cost: lift_cost });
        }
        spent += lift_cost;
        let step = modulus; // corrections are multiples of p^j
        let lifted: Vec<Vec<i64>> = sols
            .par_iter()
            .flat_map_iter(|sol| {
                let n = sol.len();
                let p_nu = p_n as u64;
                let sys = sys.clone();
                let sol = sol.clone();
                (0..p_nu).filter_map(move |tidx| {
                    let mut cand = sol.clone();
                    let mut rem = tidx;
                    for slot in cand.iter_mut().take(n) {
                        let t = (rem % p) as i64;
                        rem /= p;
                        *slot += step as i64 * t;
                    }
                    match sys.eval_mod(&cand, next_mod) {
                        Ok((0, 0)) => Some(cand),
                        _ => None,
                    }
                })
            })
            .collect();
        sols = lifted;
        counts.push(sols.len() as u128);
        modulus = next_mod;
        let _ = j;
    }
    Ok(PrimePowerCounts { p, counts, next_cost: (sols.len() as u128).saturating_mul(p_n) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::SplitMix64;
    use crate::forms::Monomial;

    fn system(n: usize, k: u32, diag: Vec<i64>, g: Vec<(Vec<u32>, i64)>) -> SystemSpec {
        let monos = g
            .into_iter()
            .map(|(exps, coef)| Monomial { exps, coef })
            .collect();
        SystemSpec::new(n, k, diag, monos, None).unwrap()
    }

    fn mixed_n2() -> SystemSpec {
        // x^3 - y^3 = 0, x^2 - y^2 = 0: solutions are the diagonal x = y.
        system(2, 3, vec![1, -1], vec![(vec![2, 0], 1), (vec![0, 2], -1)])
    }

    fn toy_n2() -> SystemSpec {
        // x^3 + y^3 = 0, x^2 + y^2 = 0: only the origin over Z.
        system(2, 3, vec![1, 1], vec![(vec![2, 0], 1), (vec![0, 2], 1)])
    }

    fn mitm_n4() -> SystemSpec {
        system(
            4,
            3,
            vec![1, 1, -1, -1],
            vec![(vec![1, 1, 0, 0], 1), (vec![0, 0, 1, 1], -1)],
        )
    }

    #[test]
    fn enumerate_known_counts() {
        let b = Budget::default();
        // x = y line inside [-5,5]^2: 11 points
        let r = count_enumerate(&mixed_n2(), 5, &b).unwrap();
        assert_eq!(r.count, 11);
        // origin only
        let r = count_enumerate(&toy_n2(), 5, &b).unwrap();
        assert_eq!(r.count, 1);
        // degenerate box
        let r = count_enumerate(&toy_n2(), 0, &b).unwrap();
        assert_eq!(r.count, 1);
        // n = 4 pair at X = 1
        let r = count_enumerate(&mitm_n4(), 1, &b).unwrap();
        assert_eq!(r.count, 15);
    }

    #[test]
    fn mitm_agrees_with_enumeration() {
        let b = Budget::default();
        for x in [1, 2, 3, 5] {
            let e = count_enumerate(&mixed_n2(), x, &b).unwrap().count;
            let m = count_mitm(&mixed_n2(), x, &b).unwrap().count;
            assert_eq!(e, m, "X = {x}");
        }
        for x in [1, 2, 4] {
            let e = count_enumerate(&mitm_n4(), x, &b).unwrap().count;
            let m = count_mitm(&mitm_n4(), x, &b).unwrap().count;
            assert_eq!(e, m, "X = {x}");
        }
    }

    #[test]
    fn mitm_f_keyed_fallback_agrees() {
        // G = x1 x3 + x2^2 straddles the 2|1 split, forcing the F-keyed path.
        let sys = system(3, 3, vec![1, 1, -2], vec![(vec![1, 0, 1], 1), (vec![0, 2, 0], 1)]);
        let b = Budget::default();
        for x in [1, 2, 3, 4] {
            let e = count_enumerate(&sys, x, &b).unwrap().count;
            let m = count_mitm(&sys, x, &b).unwrap().count;
            assert_eq!(e, m, "X = {x}");
        }
    }

    #[test]
    fn mitm_random_systems_agree() {
        let mut rng = SplitMix64::new(0xc0ffee);
        let b = Budget::default();
        for trial in 0..12 {
            let n = 2 + (rng.next_below(3) as usize); // 2..=4
            let k = 3 + rng.next_below(2) as u32; // 3 or 4
            let d = k - 1;
            let diag: Vec<i64> = (0..n)
                .map(|_| {
                    let c = rng.next_below(5) as i64 - 2;
                    if c == 0 { 1 } else { c }
                })
                .collect();
            // a couple of random monomials of degree d
            let mut monos: Vec<(Vec<u32>, i64)> = Vec::new();
            for _ in 0..2 {
                let mut exps = vec![0u32; n];
                for _ in 0..d {
                    let i = rng.next_below(n as u64) as usize;
                    exps[i] += 1;
                }
                let coef = rng.next_below(5) as i64 - 2;
                if coef != 0 && !monos.iter().any(|(e, _)| *e == exps) {
                    monos.push((exps, coef));
                }
            }
            if monos.is_empty() {
                monos.push((std::iter::once(d).chain(std::iter::repeat(0)).take(n).collect(), 1));
            }
            let sys = system(n, k, diag, monos);
            let x = 1 + rng.next_below(3);
            let e = count_enumerate(&sys, x, &b).unwrap().count;
            let m = count_mitm(&sys, x, &b).unwrap().count;
            assert_eq!(e, m, "trial {trial}: {} X={x}", sys.to_json());
        }
    }

    #[test]
    fn dft_oracle_small_box() {
        let b = Budget::default();
        let (r, m_k, m_d) = count_dft(&mixed_n2(), 2, &b).unwrap();
        assert_eq!(r.count, 5);
        assert_eq!((m_k, m_d), (33, 9));
        assert!(r.residual.unwrap() < 1e-6);
        let e = count_enumerate(&mixed_n2(), 2, &b).unwrap().count;
        assert_eq!(r.count, e);
    }

    #[test]
    fn dft_matches_enumeration_on_random_boxes() {
        let mut rng = SplitMix64::new(7);
        let b = Budget::default();
        for _ in 0..6 {
            let sys = if rng.next_below(2) == 0 { mixed_n2() } else { toy_n2() };
            let x = 1 + rng.next_below(2);
            let (r, _, _) = count_dft(&sys, x, &b).unwrap();
            let e = count_enumerate(&sys, x, &b).unwrap().count;
            assert_eq!(r.count, e);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let tight = Budget { max_evals: 10, ..Budget::default() };
        match count_enumerate(&mixed_n2(), 5, &tight) {
            Err(Error::Budget { needed, cap, .. }) => {
                assert_eq!(needed, 121);
                assert_eq!(cap, 10);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn mod_counts_toy() {
        let b = Budget::default();
        let sys = toy_n2();
        assert_eq!(count_mod(&sys, 2, &b).unwrap().count, 2);
        assert_eq!(count_mod(&sys, 3, &b).unwrap().count, 1);
        // CRT: 6 = 2 * 3
        let r = count_mod(&sys, 6, &b).unwrap();
        assert_eq!(r.count, 2);
        assert_eq!(r.method, ModMethod::CrtProduct);
        // brute force the same thing
        let direct = solutions_mod(&sys, 6, &b).unwrap().len() as u128;
        assert_eq!(direct, 2);
    }

    #[test]
    fn lifting_agrees_with_direct_scan() {
        let b = Budget::default();
        for sys in [toy_n2(), mixed_n2()] {
            for p in [2u64, 3, 5] {
                let levels = prime_power_solution_counts(&sys, p, 3, &b).unwrap();
                assert!(!levels.truncated(3));
                for (j, &c) in levels.counts.iter().enumerate() {
                    let q = p.pow(j as u32 + 1);
                    let direct = solutions_mod(&sys, q, &b).unwrap().len() as u128;
                    assert_eq!(c, direct, "p={p} level={}", j + 1);
                }
            }
        }
    }

    #[test]
    fn lifting_truncates_on_small_budget() {
        let sys = toy_n2();
        let b = Budget { max_evals: 30, ..Budget::default() };
        // level 1 scan costs 25; the next lift costs count * 25 > 5
        let levels = prime_power_solution_counts(&sys, 5, 3, &b).unwrap();
        assert_eq!(levels.counts.len(), 1);
        assert!(levels.truncated(3));
        assert!(levels.next_cost > 0);
    }
}

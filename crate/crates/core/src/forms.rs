//! The system under study: a diagonal form `F(x) = sum_i c_i x_i^k` of degree
//! `k >= 3` together with a general form `G` of degree `d = k - 1` in the same
//! `n` variables, both with integer coefficients.
//!
//! Also here: the iterated forward-difference polynomial of `x^k`. Applying
//! `d` difference steps with offsets `w_1, ..., w_d` to `x^k` leaves a linear
//! polynomial `(w_1 ... w_d) * (A x + B)` whose leading factor
//! `A = k!` does not depend on the offsets; that fact is what collapses the
//! degree-d form G to a constant in the differencing inequality.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::is_prime;
use crate::error::{Error, Result};

#[derive(Debug, thiserror::Error)]
pub enum FormError {
    #[error("form spec is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> FormError {
    FormError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// One monomial `coef * x^exps` of G.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial {
    pub exps: Vec<u32>,
    pub coef: i64,
}

/// On-disk shape of a system; see `SystemSpec::parse`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSystem {
    n: usize,
    k: u32,
    diag: Vec<i64>,
    g_monomials: Vec<Monomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

/// A validated pair (F, G).
#[derive(Clone, Debug)]
pub struct SystemSpec {
    n: usize,
    k: u32,
    diag: Vec<i64>,
    g_monomials: Vec<Monomial>,
    name: Option<String>,
}

impl SystemSpec {
    pub fn new(
        n: usize,
        k: u32,
        diag: Vec<i64>,
        g_monomials: Vec<Monomial>,
        name: Option<String>,
    ) -> std::result::Result<Self, FormError> {
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if k < 3 {
            return Err(invalid("k", format!("must be at least 3, got {k}")));
        }
        if diag.len() != n {
            return Err(invalid(
                "diag",
                format!("expected {n} coefficients, got {}", diag.len()),
            ));
        }
        if let Some(i) = diag.iter().position(|&c| c == 0) {
            return Err(invalid(format!("diag[{i}]"), "diagonal coefficient is zero"));
        }
        if g_monomials.is_empty() {
            return Err(invalid("g_monomials", "G must have at least one monomial"));
        }
        let d = k - 1;
        let mut seen: Vec<&Vec<u32>> = Vec::new();
        for (j, m) in g_monomials.iter().enumerate() {
            if m.exps.len() != n {
                return Err(invalid(
                    format!("g_monomials[{j}].exps"),
                    format!("expected {n} exponents, got {}", m.exps.len()),
                ));
            }
            let deg: u32 = m.exps.iter().sum();
            if deg != d {
                return Err(invalid(
                    format!("g_monomials[{j}].exps"),
                    format!("total degree {deg}, but G must be homogeneous of degree {d}"),
                ));
            }
            if m.coef == 0 {
                return Err(invalid(format!("g_monomials[{j}].coef"), "coefficient is zero"));
            }
            if seen.contains(&&m.exps) {
                return Err(invalid(
                    format!("g_monomials[{j}].exps"),
                    "duplicate exponent vector",
                ));
            }
            seen.push(&m.exps);
        }
        Ok(Self {
            n,
            k,
            diag,
            g_monomials,
            name,
        })
    }

    /// Parse the JSON form-spec format:
    ///
    /// ```json
    /// { "n": 2, "k": 3, "diag": [1, 1],
    ///   "g_monomials": [ { "exps": [2, 0], "coef": 1 },
    ///                    { "exps": [0, 2], "coef": 1 } ] }
    /// ```
    pub fn parse(text: &str) -> std::result::Result<Self, FormError> {
        let raw: RawSystem = serde_json::from_str(text)?;
        Self::new(raw.n, raw.k, raw.diag, raw.g_monomials, raw.name)
    }

    pub fn to_json(&self) -> String {
        let raw = RawSystem {
            n: self.n,
            k: self.k,
            diag: self.diag.clone(),
            g_monomials: self.g_monomials.clone(),
            name: self.name.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("serializing a form spec cannot fail")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Degree of G.
    pub fn d(&self) -> u32 {
        self.k - 1
    }

    pub fn diag(&self) -> &[i64] {
        &self.diag
    }

    pub fn g_monomials(&self) -> &[Monomial] {
        &self.g_monomials
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    fn check_dim(&self, x: &[i64]) -> std::result::Result<(), FormError> {
        if x.len() != self.n {
            return Err(FormError::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// F(x) in exact arbitrary-precision arithmetic.
    pub fn eval_f(&self, x: &[i64]) -> Result<BigInt> {
        self.check_dim(x)?;
        let mut acc = BigInt::zero();
        for (i, &xi) in x.iter().enumerate() {
            acc += BigInt::from(self.diag[i]) * BigInt::from(xi).pow(self.k);
        }
        Ok(acc)
    }

    /// G(x) in exact arbitrary-precision arithmetic.
    pub fn eval_g(&self, x: &[i64]) -> Result<BigInt> {
        self.check_dim(x)?;
        let mut acc = BigInt::zero();
        for m in &self.g_monomials {
            let mut term = BigInt::from(m.coef);
            for (i, &e) in m.exps.iter().enumerate() {
                if e > 0 {
                    term *= BigInt::from(x[i]).pow(e);
                }
            }
            acc += term;
        }
        Ok(acc)
    }

    /// Both forms reduced mod `q > 0`, each in `0..q`.
    pub fn eval_mod(&self, x: &[i64], q: u64) -> Result<(u64, u64)> {
        self.check_dim(x)?;
        if q == 0 {
            return Err(Error::invalid("q", "modulus must be positive"));
        }
        if q >= 1 << 62 {
            return Err(Error::invalid("q", "modulus too large for 128-bit reduction"));
        }
        let qi = q as i128;
        let mut f: i128 = 0;
        for (i, &xi) in x.iter().enumerate() {
            let xr = (xi as i128).rem_euclid(qi);
            let mut p: i128 = 1;
            for _ in 0..self.k {
                p = p * xr % qi;
            }
            f = (f + (self.diag[i] as i128).rem_euclid(qi) * p) % qi;
        }
        let mut g: i128 = 0;
        for m in &self.g_monomials {
            let mut term = (m.coef as i128).rem_euclid(qi);
            for (i, &e) in m.exps.iter().enumerate() {
                let xr = (x[i] as i128).rem_euclid(qi);
                for _ in 0..e {
                    term = term * xr % qi;
                }
            }
            g = (g + term) % qi;
        }
        Ok((f.rem_euclid(qi) as u64, g.rem_euclid(qi) as u64))
    }

    /// Upper bound `sum_i |c_i| X^k >= max |F|` over the box `[-X, X]^n`.
    pub fn f_abs_bound(&self, x_bound: u64) -> BigInt {
        let xk = BigInt::from(x_bound).pow(self.k);
        self.diag
            .iter()
            .map(|&c| BigInt::from(c.unsigned_abs()) * &xk)
            .sum()
    }

    /// Upper bound `sum_m |coef| X^d >= max |G|` over the box.
    pub fn g_abs_bound(&self, x_bound: u64) -> BigInt {
        let xd = BigInt::from(x_bound).pow(self.d());
        self.g_monomials
            .iter()
            .map(|m| BigInt::from(m.coef.unsigned_abs()) * &xd)
            .sum()
    }

    /// Connected components of the variable-interaction graph.
    ///
    /// F is diagonal, so only G's monomials couple variables. Complete sums
    /// and the oscillatory integral factor over these components, which is
    /// what keeps the diagonal demos cheap at n = 6.
    pub fn interaction_components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let r = find(parent, parent[i]);
                parent[i] = r;
            }
            parent[i]
        }
        for m in &self.g_monomials {
            let support: Vec<usize> = (0..self.n).filter(|&i| m.exps[i] > 0).collect();
            for w in support.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let mut comps: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for i in 0..self.n {
            let r = find(&mut parent, i);
            comps[r].push(i);
        }
        comps.retain(|c| !c.is_empty());
        comps.sort_by_key(|c| c[0]);
        comps
    }

    /// Does every monomial of G live entirely inside or entirely outside the
    /// marked variable set?
    pub fn g_separable_across(&self, left: &[bool]) -> bool {
        assert_eq!(left.len(), self.n);
        self.g_monomials.iter().all(|m| {
            let mut in_left = false;
            let mut in_right = false;
            for (i, &e) in m.exps.iter().enumerate() {
                if e > 0 {
                    if left[i] {
                        in_left = true;
                    } else {
                        in_right = true;
                    }
                }
            }
            !(in_left && in_right)
        })
    }

    /// Rank over F_p of the 2 x n Jacobian of (F, G) at `x`.
    pub fn jacobian_rank_mod_p(&self, x: &[i64], p: u64) -> Result<u8> {
        self.check_dim(x)?;
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        let pi = p as i128;
        let mut row_f = vec![0i128; self.n];
        let mut row_g = vec![0i128; self.n];
        for i in 0..self.n {
            // dF/dx_i = k c_i x_i^{k-1}
            let xr = (x[i] as i128).rem_euclid(pi);
            let mut pw: i128 = 1;
            for _ in 0..self.k - 1 {
                pw = pw * xr % pi;
            }
            row_f[i] = (self.k as i128 % pi) * ((self.diag[i] as i128).rem_euclid(pi)) % pi * pw % pi;
        }
        for m in &self.g_monomials {
            for i in 0..self.n {
                let e = m.exps[i];
                if e == 0 {
                    continue;
                }
                // d/dx_i of coef * x^exps
                let mut term = (m.coef as i128).rem_euclid(pi) * (e as i128 % pi) % pi;
                for (j, &ej) in m.exps.iter().enumerate() {
                    let downgraded = if j == i { ej - 1 } else { ej };
                    let xr = (x[j] as i128).rem_euclid(pi);
                    for _ in 0..downgraded {
                        term = term * xr % pi;
                    }
                }
                row_g[i] = (row_g[i] + term) % pi;
            }
        }
        let f_zero = row_f.iter().all(|v| v.rem_euclid(pi) == 0);
        let g_zero = row_g.iter().all(|v| v.rem_euclid(pi) == 0);
        if f_zero && g_zero {
            return Ok(0);
        }
        if f_zero || g_zero {
            return Ok(1);
        }
        for i in 0..self.n {
            for j in i + 1..self.n {
                let minor = (row_f[i] * row_g[j] - row_f[j] * row_g[i]).rem_euclid(pi);
                if minor != 0 {
                    return Ok(2);
                }
            }
        }
        Ok(1)
    }
}

/// The image of `x^k` under `d = k - 1` forward-difference steps with
/// offsets `w`: identically `product * (lead * x + constant)` with
/// `product = w_1 ... w_d` and `lead = k!`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DifferencePoly {
    pub w: Vec<i64>,
    pub product: BigInt,
    pub lead: BigInt,
    pub constant: BigInt,
}

impl DifferencePoly {
    pub fn eval(&self, x: i64) -> BigInt {
        &self.product * (&self.lead * BigInt::from(x) + &self.constant)
    }

    pub fn is_zero(&self) -> bool {
        self.product.is_zero()
    }
}

/// Apply `k - 1` forward differences with the given offsets to `x^k`.
pub fn difference_polynomial(k: u32, w: &[i64]) -> Result<DifferencePoly> {
    if k < 3 {
        return Err(Error::invalid("k", format!("must be at least 3, got {k}")));
    }
    let d = (k - 1) as usize;
    if w.len() != d {
        return Err(Error::invalid(
            "w",
            format!("expected {d} offsets for k = {k}, got {}", w.len()),
        ));
    }
    // Dense coefficient vector of x^k, then difference symbolically.
    let mut coeffs: Vec<BigInt> = vec![BigInt::zero(); k as usize + 1];
    coeffs[k as usize] = BigInt::one();
    for &wi in w {
        coeffs = shift_minus_identity(&coeffs, wi);
    }
    // Degree must now be at most 1.
    for (deg, c) in coeffs.iter().enumerate().skip(2) {
        assert!(
            c.is_zero(),
            "difference of x^{k} left a degree-{deg} term; offsets {w:?}"
        );
    }
    let product: BigInt = w.iter().map(|&wi| BigInt::from(wi)).product();
    let factorial: BigInt = (1..=k as u64).map(BigInt::from).product();
    if product.is_zero() {
        assert!(coeffs[0].is_zero() && coeffs[1].is_zero());
        return Ok(DifferencePoly {
            w: w.to_vec(),
            product,
            lead: factorial,
            constant: BigInt::zero(),
        });
    }
    let (lead, r1) = coeffs[1].div_rem(&product);
    let (constant, r0) = coeffs[0].div_rem(&product);
    assert!(
        r1.is_zero() && r0.is_zero(),
        "offset product must divide the differenced coefficients exactly"
    );
    assert_eq!(lead, factorial, "leading factor must be k! independent of w");
    Ok(DifferencePoly {
        w: w.to_vec(),
        product,
        lead,
        constant,
    })
}

/// Coefficients of `p(x + w) - p(x)` given those of `p`.
fn shift_minus_identity(coeffs: &[BigInt], w: i64) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); coeffs.len()];
    let wb = BigInt::from(w);
    for (m, cm) in coeffs.iter().enumerate() {
        if cm.is_zero() {
            continue;
        }
        // cm * (x + w)^m
        let mut binom = BigInt::one();
        let mut wpow = BigInt::one();
        for j in (0..=m).rev() {
            // binom = C(m, j), wpow = w^{m-j}
            out[j] += cm * &binom * &wpow;
            if j > 0 {
                binom = binom * j / (m - j + 1);
                wpow *= &wb;
            }
        }
    }
    for (j, c) in coeffs.iter().enumerate() {
        out[j] -= c;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::SplitMix64;

    pub(crate) fn toy_n2() -> SystemSpec {
        SystemSpec::new(
            2,
            3,
            vec![1, 1],
            vec![
                Monomial { exps: vec![2, 0], coef: 1 },
                Monomial { exps: vec![0, 2], coef: 1 },
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn parse_round_trip_and_validation() {
        let text = r#"{ "n": 2, "k": 3, "diag": [1, -1],
            "g_monomials": [ { "exps": [2,0], "coef": 1 }, { "exps": [0,2], "coef": -1 } ] }"#;
        let sys = SystemSpec::parse(text).unwrap();
        assert_eq!(sys.n(), 2);
        assert_eq!(sys.k(), 3);
        assert_eq!(sys.d(), 2);
        let back = SystemSpec::parse(&sys.to_json()).unwrap();
        assert_eq!(back.diag(), sys.diag());

        // degree mismatch is rejected with the offending field named
        let bad = r#"{ "n": 2, "k": 3, "diag": [1, 1],
            "g_monomials": [ { "exps": [1,0], "coef": 1 } ] }"#;
        let err = SystemSpec::parse(bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("g_monomials[0].exps"), "got: {msg}");

        // zero diagonal coefficient
        let bad = r#"{ "n": 2, "k": 3, "diag": [1, 0],
            "g_monomials": [ { "exps": [2,0], "coef": 1 } ] }"#;
        assert!(SystemSpec::parse(bad).unwrap_err().to_string().contains("diag[1]"));

        // k below 3
        let bad = r#"{ "n": 1, "k": 2, "diag": [1], "g_monomials": [ { "exps": [1], "coef": 1 } ] }"#;
        assert!(SystemSpec::parse(bad).is_err());
    }

    #[test]
    fn evaluation_basics() {
        let sys = toy_n2();
        assert_eq!(sys.eval_f(&[2, -1]).unwrap(), BigInt::from(7));
        assert_eq!(sys.eval_g(&[2, -1]).unwrap(), BigInt::from(5));
        let (f, g) = sys.eval_mod(&[2, -1], 5).unwrap();
        assert_eq!((f, g), (2, 0));
        assert!(sys.eval_f(&[1]).is_err());
    }

    #[test]
    fn difference_poly_worked_examples() {
        // k = 3: offsets (1,1) give 1 * (6x + 6)
        let p = difference_polynomial(3, &[1, 1]).unwrap();
        assert_eq!(p.product, BigInt::from(1));
        assert_eq!(p.lead, BigInt::from(6));
        assert_eq!(p.constant, BigInt::from(6));
        // offsets (2,3) give 6 * (6x + 15)
        let p = difference_polynomial(3, &[2, 3]).unwrap();
        assert_eq!(p.product, BigInt::from(6));
        assert_eq!(p.lead, BigInt::from(6));
        assert_eq!(p.constant, BigInt::from(15));
        // a zero offset kills the polynomial
        let p = difference_polynomial(4, &[1, 0, 1]).unwrap();
        assert!(p.is_zero());
        assert_eq!(p.eval(17), BigInt::zero());
        assert_eq!(p.lead, BigInt::from(24));
    }

    #[test]
    fn difference_poly_matches_numeric_differencing() {
        // Oracle: evaluate x^k and difference numerically.
        fn numeric(k: u32, w: &[i64], x: i64) -> BigInt {
            let d = w.len();
            let mut vals: Vec<BigInt> = Vec::new();
            // iterate over subsets of offsets with inclusion-exclusion signs
            for mask in 0u32..(1 << d) {
                let mut arg = BigInt::from(x);
                let mut sign = 1i64;
                for (i, &wi) in w.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        arg += BigInt::from(wi);
                    } else {
                        sign = -sign;
                    }
                }
                // subsets with all bits set contribute +, each missing bit flips
                vals.push(BigInt::from(sign) * arg.pow(k));
            }
            vals.into_iter().sum()
        }
        let mut rng = SplitMix64::new(0x5eed);
        for _ in 0..60 {
            let k = 3 + (rng.next_below(4)) as u32; // 3..=6
            let d = (k - 1) as usize;
            let w: Vec<i64> = (0..d).map(|_| rng.next_below(9) as i64 - 4).collect();
            let x = rng.next_below(21) as i64 - 10;
            let p = difference_polynomial(k, &w).unwrap();
            assert_eq!(p.eval(x), numeric(k, &w, x), "k={k} w={w:?} x={x}");
        }
    }

    #[test]
    fn jacobian_rank_examples() {
        let sys = toy_n2();
        // At (1,1) mod 2: dF = (3,3) = (1,1), dG = (2,2) = (0,0) -> rank 1.
        assert_eq!(sys.jacobian_rank_mod_p(&[1, 1], 2).unwrap(), 1);
        // At (1,1) mod 5: dF = (3,3), dG = (2,2): minor 6-6 = 0 -> rank 1.
        assert_eq!(sys.jacobian_rank_mod_p(&[1, 1], 5).unwrap(), 1);
        // At (1,2) mod 5: dF = (3,12)=(3,2), dG = (2,4): minor 12-4=8=3 -> rank 2.
        assert_eq!(sys.jacobian_rank_mod_p(&[1, 2], 5).unwrap(), 2);
        // Origin: rank 0.
        assert_eq!(sys.jacobian_rank_mod_p(&[0, 0], 3).unwrap(), 0);
        assert!(matches!(
            sys.jacobian_rank_mod_p(&[0, 0], 6),
            Err(Error::NotPrime(6))
        ));
    }

    #[test]
    fn components_and_separability() {
        let sys = toy_n2();
        assert_eq!(sys.interaction_components(), vec![vec![0], vec![1]]);
        let mitm4 = SystemSpec::new(
            4,
            3,
            vec![1, 1, -1, -1],
            vec![
                Monomial { exps: vec![1, 1, 0, 0], coef: 1 },
                Monomial { exps: vec![0, 0, 1, 1], coef: -1 },
            ],
            None,
        )
        .unwrap();
        assert_eq!(mitm4.interaction_components(), vec![vec![0, 1], vec![2, 3]]);
        assert!(mitm4.g_separable_across(&[true, true, false, false]));
        assert!(!mitm4.g_separable_across(&[true, false, true, false]));
    }
}

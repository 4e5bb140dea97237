//! Compensated (Kahan–Neumaier) accumulators.
//!
//! Every floating-point reduction in the crate runs through one of these, in
//! a traversal order fixed by the caller, so results do not depend on thread
//! count or chunking.

/// Neumaier variant of Kahan summation for `f64`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Paired accumulator for complex values stored as (re, im).
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanC {
    pub re: Kahan,
    pub im: Kahan,
}

impl KahanC {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, re: f64, im: f64) {
        self.re.add(re);
        self.im.add(im);
    }

    pub fn value(&self) -> (f64, f64) {
        (self.re.value(), self.im.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancellation() {
        // 1 + 1e100 - 1e100 naively loses the 1.
        let mut k = Kahan::new();
        k.add(1.0);
        k.add(1e100);
        k.add(-1e100);
        assert_eq!(k.value(), 1.0);
    }

    #[test]
    fn many_small_terms() {
        let mut k = Kahan::new();
        for _ in 0..1_000_000 {
            k.add(0.1);
        }
        assert!((k.value() - 100_000.0).abs() < 1e-9);
    }
}

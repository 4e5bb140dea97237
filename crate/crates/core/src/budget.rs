//! Work budgets. Every potentially explosive loop (box enumerations,
//! complete-sum scans, arc sweeps, quadrature grids) charges its cost here
//! before running, so oversized requests fail fast instead of hanging.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Budget {
    /// Cap on elementary form evaluations (box points, residue vectors,
    /// lifted candidates, ...).
    pub max_evals: u64,
    /// Cap on the number of intervals an arc sweep may materialize.
    pub max_sweep_intervals: u64,
    /// Cap on oscillatory-integral evaluations per outer integral.
    pub max_quad_evals: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_evals: 100_000_000,
            max_sweep_intervals: 2_000_000,
            max_quad_evals: 50_000_000,
        }
    }
}

impl Budget {
    pub fn unlimited() -> Self {
        Self {
            max_evals: u64::MAX,
            max_sweep_intervals: u64::MAX,
            max_quad_evals: u64::MAX,
        }
    }

    pub fn charge_evals(&self, what: &str, needed: u128) -> Result<()> {
        if needed > self.max_evals as u128 {
            return Err(Error::Budget {
                what: what.to_string(),
                needed,
                cap: self.max_evals as u128,
            });
        }
        Ok(())
    }

    pub fn charge_sweep(&self, what: &str, needed: u128) -> Result<()> {
        if needed > self.max_sweep_intervals as u128 {
            return Err(Error::Budget {
                what: what.to_string(),
                needed,
                cap: self.max_sweep_intervals as u128,
            });
        }
        Ok(())
    }

    pub fn charge_quad(&self, what: &str, needed: u128) -> Result<()> {
        if needed > self.max_quad_evals as u128 {
            return Err(Error::Budget {
                what: what.to_string(),
                needed,
                cap: self.max_quad_evals as u128,
            });
        }
        Ok(())
    }
}

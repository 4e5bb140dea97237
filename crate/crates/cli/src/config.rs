//! Experiment configuration: a JSON file naming a form spec, the box radii
//! to count over, truncation levels for the two densities, and resource
//! caps. All rationals arrive as "p/q" strings.

use std::path::{Path, PathBuf};

use arclab_core::budget::Budget;
use arclab_core::exact::{rat_from_str, Rat};
use arclab_core::forms::SystemSpec;
use arclab_core::{Error, Result};
use num_traits::One;
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExperiment {
    #[serde(default = "default_schema")]
    pub schema: u32,
    /// Path to the form spec, relative to the config file's directory.
    pub system: String,
    pub x_list: Vec<u64>,
    pub r_series: u64,
    pub r_integral: f64,
    #[serde(default)]
    pub omega: Option<String>,
    #[serde(default)]
    pub c: Option<String>,
    #[serde(default)]
    pub c_prime: Option<String>,
    #[serde(default)]
    pub budgets: Option<RawBudgets>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the config file's directory.
    pub output: String,
}

fn default_schema() -> u32 {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBudgets {
    pub max_evals: u64,
    pub max_sweep_intervals: u64,
    pub max_quad_evals: u64,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub system_path: PathBuf,
    pub x_list: Vec<u64>,
    pub r_series: u64,
    pub r_integral: f64,
    pub omega: Rat,
    pub c: Rat,
    pub c_prime: Rat,
    pub budget: Budget,
    pub seed: u64,
    pub output: PathBuf,
    /// Raw config bytes, hashed into provenance.
    pub raw_bytes: Vec<u8>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw_bytes = std::fs::read(path)
            .map_err(|e| Error::invalid("config", format!("{}: {e}", path.display())))?;
        let raw: RawExperiment = serde_json::from_slice(&raw_bytes)
            .map_err(|e| Error::invalid("config", format!("{}: {e}", path.display())))?;
        if raw.schema != 1 {
            return Err(Error::invalid(
                "schema",
                format!("unsupported config schema {}", raw.schema),
            ));
        }
        if raw.x_list.is_empty() {
            return Err(Error::invalid("x_list", "must not be empty"));
        }
        if let Some(w) = raw.x_list.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "x_list",
                format!("must be strictly increasing, found {} before {}", w[0], w[1]),
            ));
        }
        if raw.r_series == 0 {
            return Err(Error::invalid("r_series", "must be positive"));
        }
        if !(raw.r_integral > 0.0) {
            return Err(Error::invalid("r_integral", "must be positive"));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let system_path = base.join(&raw.system);
        let spec_text = std::fs::read_to_string(&system_path)
            .map_err(|e| Error::invalid("system", format!("{}: {e}", system_path.display())))?;
        let system = SystemSpec::parse(&spec_text)?;
        let parse_opt = |name: &'static str, v: &Option<String>| -> Result<Rat> {
            match v {
                None => Ok(Rat::one()),
                Some(s) => {
                    let r = rat_from_str(s)?;
                    if r <= num_traits::Zero::zero() {
                        return Err(Error::invalid(name, "must be positive"));
                    }
                    Ok(r)
                }
            }
        };
        let budget = match &raw.budgets {
            None => Budget::default(),
            Some(b) => {
                if b.max_evals == 0 || b.max_sweep_intervals == 0 || b.max_quad_evals == 0 {
                    return Err(Error::invalid("budgets", "all caps must be positive"));
                }
                Budget {
                    max_evals: b.max_evals,
                    max_sweep_intervals: b.max_sweep_intervals,
                    max_quad_evals: b.max_quad_evals,
                }
            }
        };
        Ok(Self {
            system,
            system_path,
            x_list: raw.x_list,
            r_series: raw.r_series,
            r_integral: raw.r_integral,
            omega: parse_opt("omega", &raw.omega)?,
            c: parse_opt("c", &raw.c)?,
            c_prime: parse_opt("c_prime", &raw.c_prime)?,
            budget,
            seed: raw.seed,
            output: base.join(&raw.output),
            raw_bytes,
        })
    }
}

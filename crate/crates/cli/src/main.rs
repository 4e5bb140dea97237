//! `arclab` — command-line front door for the circle-method toolkit.
//!
//! Subcommands delegate to the library crate; this layer only parses
//! arguments, loads form specs, renders tables, and maps error classes to
//! the exit-code contract: 0 success, 1 invariant violation, 2 usage
//! error, 3 budget exhaustion.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use arclab_core::arcs::{classify_ma, volume_ma, ArcParams, ArcWitness, Classification};
use arclab_core::budget::Budget;
use arclab_core::certify::{
    certificate, min_feasible_n, prior_bounds, reverify, threshold_n0, ExponentCertificate,
    ParamChoice,
};
use arclab_core::count::{count_auto, count_dft, count_enumerate, count_mitm, count_mod};
use arclab_core::density::{chi_p, major_arc_main_term, singular_integral, singular_series};
use arclab_core::exact::{pow_f64, rat, rat_from_f64, rat_from_str, rat_to_string, Rat};
use arclab_core::expsum::{eval_s, log_log_slope, minor_arc_sup_diag, weyl_single_sum};
use arclab_core::forms::SystemSpec;
use arclab_core::quadrature::QuadScheme;
use arclab_core::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use serde_json::{json, Value};

use output::{Cell, Format, Rendered, Table};

/// Environment variable consulted when `--budget` is absent.
const BUDGET_ENV: &str = "ARCLAB_BUDGET";

#[derive(Parser)]
#[command(
    name = "arclab",
    version,
    about = "Desk-scale circle-method experiments on pairs of forms"
)]
struct Cli {
    /// Cap on elementary form evaluations. The sweep and quadrature caps
    /// scale proportionally. Defaults to $ARCLAB_BUDGET, then 100000000.
    #[arg(long, global = true)]
    budget: Option<u64>,

    /// Worker threads for the parallel kernels (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Output format for stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Significant digits for floating-point cells in CSV output.
    #[arg(long, global = true, default_value_t = 12)]
    precision: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CountMethodArg {
    Auto,
    Enumerate,
    Mitm,
    Dft,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum WeylMode {
    /// Linear-phase scan `sum_h |phi(h alpha)|` against its envelope.
    Single,
    /// Sampled suprema of `|S|` with `alpha_k` on the minor arcs.
    Minor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ArcMode {
    /// Exact measure of the one-dimensional arcs, with the partition and
    /// disjointness checks.
    VolumeMa,
    /// Exact measure of the two-dimensional refined arcs.
    VolumeNa,
    /// Membership of a phase in the one-dimensional arcs, with witness.
    Classify,
}

#[derive(Subcommand)]
enum Command {
    /// Count integer solutions of F = G = 0 in the box [-X, X]^n.
    Count {
        /// Form-spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// Box radius; repeat for several.
        #[arg(long, required = true)]
        x: Vec<u64>,
        #[arg(long, value_enum, default_value_t = CountMethodArg::Auto)]
        method: CountMethodArg,
    },
    /// Count solutions modulo q (prime-power lifting glued by CRT).
    Gamma {
        #[arg(long)]
        spec: PathBuf,
        /// Modulus; repeat for several.
        #[arg(long, required = true)]
        q: Vec<u64>,
    },
    /// p-adic density: normalized solution counts up the power tower,
    /// cross-checked against complete exponential sums at every level.
    ChiP {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        p: u64,
        #[arg(long, default_value_t = 3)]
        h_max: u32,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Truncated singular series: sum of A(s) for s <= R.
    SingSeries {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        r: u64,
    },
    /// Truncated singular integral over the [-R, R]^2 gamma square.
    SingIntegral {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        r: f64,
    },
    /// Major-arc main term at one box radius: X^{n-k-d} * series * integral
    /// with truncations c' X^omega.
    MainTerm {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        x: u64,
        /// Truncation exponent, as "p/q".
        #[arg(long, default_value = "1")]
        omega: String,
        /// Truncation constant, as "p/q".
        #[arg(long, default_value = "1")]
        c_prime: String,
    },
    /// Exponential sum S(alpha_k, alpha_d) over the box.
    Expsum {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        x: u64,
        /// Phase on the degree-k form, as "p/q".
        #[arg(long)]
        alpha_k: String,
        /// Phase on the degree-d form, as "p/q".
        #[arg(long)]
        alpha_d: String,
    },
    /// Weyl-sum growth diagnostics.
    WeylDiag {
        #[arg(long, value_enum, default_value_t = WeylMode::Single)]
        mode: WeylMode,
        /// Degree of the diagonal form (single mode).
        #[arg(long)]
        k: Option<u32>,
        /// Form-spec JSON file (minor mode).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Box radius; repeat for several (at least two for a slope).
        #[arg(long, required = true)]
        x: Vec<u64>,
        /// Phase, as "p/q"; defaults to the dyadic of the fractional
        /// golden ratio, the canonical badly approximable number.
        #[arg(long)]
        alpha: Option<String>,
        /// Arc height for the envelope / the minor-arc cutoff, as "p/q".
        #[arg(long, default_value = "1")]
        theta: String,
        /// Samples per box radius (minor mode).
        #[arg(long, default_value_t = 6)]
        samples: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Arc membership and exact arc measures.
    Arcs {
        #[arg(long, value_enum, default_value_t = ArcMode::VolumeMa)]
        mode: ArcMode,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        x: u64,
        /// Arc height, as "p/q".
        #[arg(long, default_value = "1/2")]
        theta: String,
        /// Refined-arc height (volume-na), as "p/q".
        #[arg(long, default_value = "1/4")]
        eta: String,
        /// Threshold constant of the refined arcs (volume-na), as "p/q".
        #[arg(long, default_value = "1")]
        c: String,
        /// Threshold constant of the enlarged arcs, as "p/q".
        #[arg(long, default_value = "1")]
        c_prime: String,
        /// Saving rate recorded alongside the heights, as "p/q".
        #[arg(long, default_value = "9")]
        kappa: String,
        /// Phase to classify, as "p/q" (classify mode).
        #[arg(long)]
        alpha_k: Option<String>,
    },
    /// Exact-rational feasibility certificate for (k, n, kappa).
    Certify {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        n: Option<u64>,
        /// Saving rate, as "p/q"; defaults to the window midpoint.
        #[arg(long)]
        kappa: Option<String>,
        /// Record a freely chosen height pair instead of deriving the
        /// coupled ceilings (requires --eta).
        #[arg(long, requires = "eta")]
        theta: Option<String>,
        #[arg(long, requires = "theta")]
        eta: Option<String>,
    },
    /// Variable-count thresholds against the previously available bounds.
    Thresholds {
        #[arg(long, default_value_t = 8)]
        k_max: u32,
    },
    /// Full pipeline over an experiment config; writes report.json,
    /// report.csv, and provenance.json into the config's output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Budget { .. } => 3,
        Error::Inconsistent(_) | Error::NumericFault { .. } => 1,
        _ => 2,
    }
}

fn resolve_budget(cli: &Cli) -> Result<Budget> {
    let base = Budget::default();
    let evals = match cli.budget {
        Some(b) => b,
        None => match std::env::var(BUDGET_ENV) {
            Ok(s) => s
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::invalid("budget", format!("{BUDGET_ENV}: {e}")))?,
            Err(_) => base.max_evals,
        },
    };
    if evals == 0 {
        return Err(Error::invalid("budget", "must be positive"));
    }
    let scale = |other: u64| -> u64 {
        let scaled = other as u128 * evals as u128 / base.max_evals as u128;
        scaled.clamp(1, u64::MAX as u128) as u64
    };
    Ok(Budget {
        max_evals: evals,
        max_sweep_intervals: scale(base.max_sweep_intervals),
        max_quad_evals: scale(base.max_quad_evals),
    })
}

fn load_spec(path: &PathBuf) -> Result<SystemSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid("spec", format!("{}: {e}", path.display())))?;
    Ok(SystemSpec::parse(&text)?)
}

fn parse_rat(name: &'static str, s: &str) -> Result<Rat> {
    rat_from_str(s).map_err(|e| Error::invalid(name, e.to_string()))
}

fn golden_alpha() -> Rat {
    rat_from_f64((5f64.sqrt() - 1.0) / 2.0).expect("finite")
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let budget = resolve_budget(cli)?;
    let rendered = match &cli.command {
        Command::Count { spec, x, method } => cmd_count(spec, x, *method, &budget)?,
        Command::Gamma { spec, q } => cmd_gamma(spec, q, &budget)?,
        Command::ChiP {
            spec,
            p,
            h_max,
            tol,
        } => cmd_chi_p(spec, *p, *h_max, *tol, &budget)?,
        Command::SingSeries { spec, r } => cmd_sing_series(spec, *r, &budget)?,
        Command::SingIntegral { spec, r } => cmd_sing_integral(spec, *r, &budget)?,
        Command::MainTerm {
            spec,
            x,
            omega,
            c_prime,
        } => cmd_main_term(spec, *x, omega, c_prime, &budget)?,
        Command::Expsum {
            spec,
            x,
            alpha_k,
            alpha_d,
        } => cmd_expsum(spec, *x, alpha_k, alpha_d, &budget)?,
        Command::WeylDiag {
            mode,
            k,
            spec,
            x,
            alpha,
            theta,
            samples,
            seed,
        } => cmd_weyl(*mode, *k, spec.as_ref(), x, alpha.as_deref(), theta, *samples, *seed, &budget)?,
        Command::Arcs {
            mode,
            k,
            x,
            theta,
            eta,
            c,
            c_prime,
            kappa,
            alpha_k,
        } => cmd_arcs(*mode, *k, *x, theta, eta, c, c_prime, kappa, alpha_k.as_deref(), &budget)?,
        Command::Certify {
            k,
            n,
            kappa,
            theta,
            eta,
        } => cmd_certify(*k, *n, kappa.as_deref(), theta.as_deref(), eta.as_deref())?,
        Command::Thresholds { k_max } => cmd_thresholds(*k_max)?,
        Command::Run { config } => {
            let mut cfg = config::ExperimentConfig::load(config)?;
            // Command line and environment take precedence over the
            // config's own caps; otherwise the config (or default) stands.
            if cli.budget.is_some() || std::env::var(BUDGET_ENV).is_ok() {
                cfg.budget = budget.clone();
            }
            let summary = run::run_experiment(&cfg, cli.precision)?;
            println!("report: {}", summary.report_json.display());
            println!("csv:    {}", summary.report_csv.display());
            if summary.budget_exhausted {
                eprintln!("warning: budget exhausted; report contains MISSING markers");
                return Ok(ExitCode::from(3));
            }
            return Ok(ExitCode::SUCCESS);
        }
    };
    let name = command_name(&cli.command);
    rendered.print(name, cli.format, cli.precision);
    Ok(ExitCode::SUCCESS)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Count { .. } => "count",
        Command::Gamma { .. } => "gamma",
        Command::ChiP { .. } => "chi-p",
        Command::SingSeries { .. } => "sing-series",
        Command::SingIntegral { .. } => "sing-integral",
        Command::MainTerm { .. } => "main-term",
        Command::Expsum { .. } => "expsum",
        Command::WeylDiag { .. } => "weyl-diag",
        Command::Arcs { .. } => "arcs",
        Command::Certify { .. } => "certify",
        Command::Thresholds { .. } => "thresholds",
        Command::Run { .. } => "run",
    }
}

fn cmd_count(
    spec: &PathBuf,
    xs: &[u64],
    method: CountMethodArg,
    budget: &Budget,
) -> Result<Rendered> {
    let sys = load_spec(spec)?;
    let mut table = Table::new(&["x", "count", "method", "seconds", "residual"]);
    for &x in xs {
        let res = match method {
            CountMethodArg::Auto => count_auto(&sys, x, budget)?,
            CountMethodArg::Enumerate => count_enumerate(&sys, x, budget)?,
            CountMethodArg::Mitm => count_mitm(&sys, x, budget)?,
            CountMethodArg::Dft => count_dft(&sys, x, budget)?.0,
        };
        table.push(vec![
            Cell::UInt(x as u128),
            Cell::UInt(res.count),
            Cell::Text(res.method.to_string()),
            Cell::Float(res.seconds),
            res.residual.map_or(Cell::Empty, Cell::Float),
        ]);
    }
    Ok(Rendered::Table(table))
}

fn cmd_gamma(spec: &PathBuf, qs: &[u64], budget: &Budget) -> Result<Rendered> {
    let sys = load_spec(spec)?;
    let mut table = Table::new(&["q", "count", "method"]);
    for &q in qs {
        let res = count_mod(&sys, q, budget)?;
        table.push(vec![
            Cell::UInt(q as u128),
            Cell::UInt(res.count),
            Cell::Text(res.method.to_string()),
        ]);
    }
    Ok(Rendered::Table(table))
}

fn cmd_chi_p(spec: &PathBuf, p: u64, h_max: u32, tol: f64, budget: &Budget) -> Result<Rendered> {
    let sys = load_spec(spec)?;
    let rep = chi_p(&sys, p, h_max, tol, budget)?;
    let mut table = Table::new(&["p", "h", "gamma", "normalized", "a_term", "residual"]);
    let mut levels = Vec::new();
    for level in &rep.levels {
        let partial: f64 = rep.a_terms.iter().take(level.h as usize + 1).sum();
        let a_term = rep.a_terms.get(level.h as usize).copied();
        let residual = (level.normalized - partial).abs();
        table.push(vec![
            Cell::UInt(p as u128),
            Cell::UInt(level.h as u128),
            Cell::UInt(level.gamma),
            Cell::Float(level.normalized),
            a_term.map_or(Cell::Empty, Cell::Float),
            Cell::Float(residual),
        ]);
        levels.push(json!({
            "h": level.h,
            "gamma": match u64::try_from(level.gamma) {
                Ok(v) => json!(v),
                Err(_) => json!(level.gamma.to_string()),
            },
            "normalized": level.normalized,
            "a_term": a_term,
            "residual": residual,
        }));
    }
    let json = json!({
        "p": p,
        "levels": levels,
        "stabilized": rep.stabilized,
        "stable_level": rep.stable_level,
        "chi_p": rep.chi_p,
        "truncated_cost": rep.truncated_cost.map(|c| c.to_string()),
    });
    Ok(Rendered::Object {
        json,
        text: table.to_csv(12),
    })
}

fn cmd_sing_series(spec: &PathBuf, r: u64, budget: &Budget) -> Result<Rendered> {
    let sys = load_spec(spec)?;
    let tr = singular_series(&sys, r, budget)?;
    let mut table = Table::new(&["s", "a_term"]);
    for (i, &a) in tr.per_s.iter().enumerate() {
        table.push(vec![Cell::UInt(i as u128 + 1), Cell::Float(a)]);
    }
    let json = json!({
        "r": tr.r,
        "value": tr.value,
        "doubling_residuals": tr.doubling_residuals,
    });
    Ok(Rendered::Object {
        json,
        text: table.to_csv(12),
    })
}

fn cmd_sing_integral(spec: &PathBuf, r: f64, budget: &Budget) -> Result<Rendered> {
    let sys = load_spec(spec)?;
    let scheme = QuadScheme::default();
    let tr = singular_integral(&sys, r, &scheme, budget)?;
    let mut table = Table::new(&[
        "r",
        "value",
        "audit_error",
        "max_abs_j",
        "cells",
        "unconverged_cells",
    ]);
    table.push(vec![
        Cell::Float(tr.r),
        Cell::Float(tr.value),
        Cell::Float(tr.audit_error),
        Cell::Float(tr.max_abs_j),
        Cell::UInt(tr.cells as u128),
        Cell::UInt(tr.unconverged_cells as u128),
    ]);
    let json = json!({
        "r": tr.r,
        "value": tr.value,
        "audit_error": tr.audit_error,
        "max_abs_j": tr.max_abs_j,
        "cells": tr.cells,
        "unconverged_cells": tr.unconverged_cells,
        "doubling_residuals": tr.doubling_residuals,
    });
    Ok(Rendered::Object {
        json,
        text: table.to_csv(12),
    })
}

fn cmd_main_term(
    spec: &PathBuf,
    x: u64,
    omega: &str,
    c_prime: &str,
    budget: &Budget,
) -> Result<Rendered> {
    let sys = load_spec(spec)?;
    let omega = parse_rat("omega", omega)?;
    let c_prime = parse_rat("c_prime", c_prime)?;
    let scheme = QuadScheme::default();
    let mt = major_arc_main_term(&sys, x, &omega, &c_prime, &scheme, budget)?;
    let mut table = Table::new(&[
        "x",
        "r_series",
        "r_integral",
        "series",
        "integral",
        "scale",
        "value",
    ]);
    table.push(vec![
        Cell::UInt(mt.x as u128),
        Cell::UInt(mt.r_series as u128),
        Cell::Float(mt.r_integral),
        Cell::Float(mt.series.value),
        Cell::Float(mt.integral.value),
        Cell::Float(mt.scale),
        Cell::Float(mt.value),
    ]);
    let json = json!({
        "x": mt.x,
        "r_series": mt.r_series,
        "r_integral": mt.r_integral,
        "series": { "value": mt.series.value, "doubling_residuals": mt.series.doubling_residuals },
        "integral": { "value": mt.integral.value, "audit_error": mt.integral.audit_error },
        "scale": mt.scale,
        "value": mt.value,
    });
    Ok(Rendered::Object {
        json,
        text: table.to_csv(12),
    })
}

fn cmd_expsum(
    spec: &PathBuf,
    x: u64,
    alpha_k: &str,
    alpha_d: &str,
    budget: &Budget,
) -> Result<Rendered> {
    let sys = load_spec(spec)?;
    let ak = parse_rat("alpha_k", alpha_k)?;
    let ad = parse_rat("alpha_d", alpha_d)?;
    let s = eval_s(&sys, &ak, &ad, x, budget)?;
    let mut table = Table::new(&["x", "alpha_k", "alpha_d", "re", "im", "abs"]);
    table.push(vec![
        Cell::UInt(x as u128),
        Cell::Rational(ak.clone()),
        Cell::Rational(ad.clone()),
        Cell::Float(s.re),
        Cell::Float(s.im),
        Cell::Float(s.norm()),
    ]);
    let json = json!({
        "x": x,
        "alpha_k": rat_to_string(&ak),
        "alpha_d": rat_to_string(&ad),
        "re": s.re,
        "im": s.im,
        "abs": s.norm(),
    });
    Ok(Rendered::Object {
        json,
        text: table.to_csv(12),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_weyl(
    mode: WeylMode,
    k: Option<u32>,
    spec: Option<&PathBuf>,
    xs: &[u64],
    alpha: Option<&str>,
    theta: &str,
    samples: u32,
    seed: u64,
    budget: &Budget,
) -> Result<Rendered> {
    let theta = parse_rat("theta", theta)?;
    if xs.len() < 2 {
        return Err(Error::invalid("x", "need at least two box radii for a slope"));
    }
    match mode {
        WeylMode::Single => {
            let k = k.ok_or_else(|| Error::invalid("k", "required in single mode"))?;
            let alpha = match alpha {
                Some(s) => parse_rat("alpha", s)?,
                None => golden_alpha(),
            };
            let lead = BigInt::from(1);
            let mut rows = Vec::new();
            let mut points = Vec::new();
            for &x in xs {
                let sum = weyl_single_sum(&lead, &alpha, x, k, budget)?;
                let envelope = pow_f64(x, &(rat(k as i64, 1) - &theta));
                points.push((x as f64, sum / envelope));
                rows.push((x, sum, envelope));
            }
            let slope = log_log_slope(&points);
            let mut table = Table::new(&["x", "sum", "envelope", "ratio", "ratio_slope"]);
            for (x, sum, envelope) in rows {
                table.push(vec![
                    Cell::UInt(x as u128),
                    Cell::Float(sum),
                    Cell::Float(envelope),
                    Cell::Float(sum / envelope),
                    Cell::Float(slope),
                ]);
            }
            Ok(Rendered::Table(table))
        }
        WeylMode::Minor => {
            let spec = spec.ok_or_else(|| Error::invalid("spec", "required in minor mode"))?;
            let sys = load_spec(spec)?;
            let rows = minor_arc_sup_diag(&sys, &theta, xs, samples, seed, budget)?;
            let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.x as f64, r.ratio)).collect();
            let slope = log_log_slope(&points);
            let mut table = Table::new(&[
                "x",
                "samples",
                "max_abs",
                "envelope",
                "ratio",
                "ratio_slope",
            ]);
            for r in rows {
                table.push(vec![
                    Cell::UInt(r.x as u128),
                    Cell::UInt(r.samples as u128),
                    Cell::Float(r.max_abs),
                    Cell::Float(r.envelope),
                    Cell::Float(r.ratio),
                    Cell::Float(slope),
                ]);
            }
            Ok(Rendered::Table(table))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_arcs(
    mode: ArcMode,
    k: u32,
    x: u64,
    theta: &str,
    eta: &str,
    c: &str,
    c_prime: &str,
    kappa: &str,
    alpha_k: Option<&str>,
    budget: &Budget,
) -> Result<Rendered> {
    let theta = parse_rat("theta", theta)?;
    match mode {
        ArcMode::VolumeMa => {
            let v = volume_ma(&theta, x, k, budget)?;
            let terms: Vec<Value> = v
                .measure
                .terms
                .iter()
                .map(|(e, c)| json!({"exp": rat_to_string(e), "coeff": rat_to_string(c)}))
                .collect();
            let mut table = Table::new(&["exp", "coeff"]);
            for (e, c) in &v.measure.terms {
                table.push(vec![Cell::Rational(e.clone()), Cell::Rational(c.clone())]);
            }
            let json = json!({
                "x": x,
                "theta": rat_to_string(&theta),
                "measure_terms": terms,
                "measure": v.measure.to_f64(),
                "disjoint": v.disjoint,
                "interval_count": v.interval_count,
                "q_max": v.q_max,
                "within_bound": v.within_bound,
                "bound_ratio": v.bound_ratio,
            });
            Ok(Rendered::Object {
                json,
                text: table.to_csv(12),
            })
        }
        ArcMode::VolumeNa => {
            let params = ArcParams::new(
                k,
                theta.clone(),
                parse_rat("eta", eta)?,
                parse_rat("kappa", kappa)?,
                parse_rat("c", c)?,
                parse_rat("c_prime", c_prime)?,
            )?;
            let v = arclab_core::arcs::volume_na(&params, x, budget)?;
            let terms: Vec<Value> = v
                .measure
                .terms
                .iter()
                .map(|(e, c)| json!({"exp": rat_to_string(e), "coeff": rat_to_string(c)}))
                .collect();
            let json = json!({
                "x": x,
                "theta": rat_to_string(&params.theta),
                "eta": rat_to_string(&params.eta),
                "measure_terms": terms,
                "measure": v.measure.to_f64(),
                "q_max": v.q_max,
                "r_max": v.r_max,
                "within_bound": v.within_bound,
                "bound_ratio": v.bound_ratio,
            });
            let text = format!(
                "measure {:.12e} within_bound {}",
                v.measure.to_f64(),
                v.within_bound
            );
            Ok(Rendered::Object { json, text })
        }
        ArcMode::Classify => {
            let alpha = alpha_k.ok_or_else(|| Error::invalid("alpha_k", "required"))?;
            let alpha = parse_rat("alpha_k", alpha)?;
            let class = classify_ma(&alpha, &theta, x, k, budget)?;
            let json = match &class {
                Classification::Member(ArcWitness::Ma { q, a_k, gamma_k }) => json!({
                    "member": true,
                    "q": q,
                    "a_k": a_k.to_string(),
                    "gamma_k": rat_to_string(gamma_k),
                }),
                Classification::Member(_) => unreachable!("1-d classify yields 1-d witnesses"),
                Classification::NonMember => json!({"member": false}),
                Classification::Boundary => json!({"member": "boundary"}),
            };
            let text = serde_json::to_string(&json).expect("json");
            Ok(Rendered::Object { json, text })
        }
    }
}

fn cmd_certify(
    k: u32,
    n: Option<u64>,
    kappa: Option<&str>,
    theta: Option<&str>,
    eta: Option<&str>,
) -> Result<Rendered> {
    let Some(n) = n else {
        let threshold = threshold_n0(k)?;
        let frontier = min_feasible_n(k)?;
        let json = json!({
            "k": k,
            "threshold": threshold,
            "min_feasible_n": frontier,
        });
        let text = format!("k = {k}: threshold {threshold}, first feasible n = {frontier}");
        return Ok(Rendered::Object { json, text });
    };
    let kappa = kappa.map(|s| parse_rat("kappa", s)).transpose()?;
    let choice = match (theta, eta) {
        (Some(t), Some(e)) => ParamChoice::Free {
            kappa: kappa
                .clone()
                .ok_or_else(|| Error::invalid("kappa", "required with --theta/--eta"))?,
            theta: parse_rat("theta", t)?,
            eta: parse_rat("eta", e)?,
        },
        _ => ParamChoice::Linked { kappa },
    };
    match certificate(k, n, choice) {
        Ok(cert) => {
            reverify(&cert)?;
            let text = certificate_text(&cert);
            let json = serde_json::to_value(&cert).expect("certificate serializes");
            Ok(Rendered::Object { json, text })
        }
        Err(Error::Infeasible(reason)) => {
            let json = json!({
                "k": k,
                "n": n,
                "feasible": false,
                "reason": reason,
            });
            let text = format!("INFEASIBLE: {reason}");
            Ok(Rendered::Object { json, text })
        }
        Err(e) => Err(e),
    }
}

fn certificate_text(cert: &ExponentCertificate) -> String {
    let mut out = String::new();
    out.push_str(&format!("k = {}  d = {}  n = {}\n", cert.k, cert.d, cert.n));
    match &cert.kappa_interval {
        Some((lo, hi)) => out.push_str(&format!(
            "kappa = {}  (window {} .. {})\n",
            rat_to_string(&cert.kappa),
            rat_to_string(lo),
            rat_to_string(hi)
        )),
        None => out.push_str(&format!("kappa = {}\n", rat_to_string(&cert.kappa))),
    }
    out.push_str(&format!(
        "theta_star = {}  theta_max = {}  eta = {}  omega = {}\n",
        rat_to_string(&cert.theta_star),
        rat_to_string(&cert.theta_max),
        rat_to_string(&cert.eta),
        rat_to_string(&cert.omega)
    ));
    if cert.theta_ladder.is_empty() {
        out.push_str("ladder: none (free heights)\n");
    } else {
        let step = &cert.theta_ladder[0] - &cert.theta_ladder[1];
        out.push_str(&format!(
            "ladder: {} heights, step {}\n",
            cert.theta_ladder.len(),
            rat_to_string(&step)
        ));
    }
    out.push_str("checks:\n");
    for c in &cert.checks {
        let kind = match c.kind {
            arclab_core::certify::CheckKind::Strict => "strict",
            arclab_core::certify::CheckKind::NonStrict => "non-strict",
            arclab_core::certify::CheckKind::Equality => "equality",
        };
        out.push_str(&format!(
            "  {:<20} {:<10} margin {}\n",
            c.name,
            kind,
            rat_to_string(&c.margin)
        ));
    }
    out.push_str("VERIFIED");
    out
}

fn cmd_thresholds(k_max: u32) -> Result<Rendered> {
    if k_max < 3 {
        return Err(Error::invalid("k_max", "needs k_max >= 3"));
    }
    let mut table = Table::new(&[
        "k",
        "bound",
        "prior_consecutive",
        "prior_three_two",
        "prior_general_pair",
    ]);
    for k in 3..=k_max {
        let bound = threshold_n0(k)?;
        let priors = prior_bounds(k)?;
        table.push(vec![
            Cell::UInt(k as u128),
            Cell::UInt(bound as u128),
            Cell::UInt(priors.bp_consecutive as u128),
            priors
                .bdhb
                .map_or(Cell::Empty, |v| Cell::UInt(v as u128)),
            Cell::UInt(priors.bhb as u128),
        ]);
    }
    Ok(Rendered::Table(table))
}

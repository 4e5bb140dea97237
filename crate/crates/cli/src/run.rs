//! The `run` subcommand: full pipeline over one experiment config.
//!
//! Counts every box in `x_list`, computes the two truncated densities once,
//! juxtaposes `N(X) / X^{n-k-d}` with their product, and attaches arc,
//! Weyl, and local-density diagnostics. Results land in the config's
//! output directory as `report.json` + `report.csv` (deterministic for a
//! fixed config and seed) and `provenance.json` (timestamped).

use std::time::Instant;

use arclab_core::arcs::volume_ma;
use arclab_core::count::{count_auto, CountResult};
use arclab_core::density::{chi_p, singular_integral, singular_series};
use arclab_core::exact::{pow_f64, rat, rat_from_f64, rat_to_string};
use arclab_core::expsum::{log_log_slope, weyl_single_sum};
use arclab_core::quadrature::QuadScheme;
use arclab_core::{Error, Result};
use num_bigint::BigInt;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::output::{fnv1a, Cell, Table, SCHEMA};

/// Largest box radius the Weyl diagnostic will scan (the phase count grows
/// like `X^{k-1}`).
const WEYL_X_CAP: u64 = 4_000;

struct RowOutcome {
    x: u64,
    count: Option<CountResult>,
    missing: Option<String>,
}

pub struct RunSummary {
    pub budget_exhausted: bool,
    pub report_json: std::path::PathBuf,
    pub report_csv: std::path::PathBuf,
}

pub fn run_experiment(cfg: &ExperimentConfig, precision: usize) -> Result<RunSummary> {
    let sys = &cfg.system;
    let scheme = QuadScheme::default();
    let mut exhausted = false;
    let mut timings: Vec<(&'static str, f64)> = Vec::new();

    // Counting first: the cheap rows give early feedback that the config
    // is sane before the densities start burning quadrature budget.
    let t0 = Instant::now();
    let mut rows: Vec<RowOutcome> = Vec::new();
    for &x in &cfg.x_list {
        match count_auto(sys, x, &cfg.budget) {
            Ok(c) => rows.push(RowOutcome {
                x,
                count: Some(c),
                missing: None,
            }),
            Err(Error::Budget { what, needed, cap }) => {
                exhausted = true;
                rows.push(RowOutcome {
                    x,
                    count: None,
                    missing: Some(format!("{what}: needs {needed}, cap {cap}")),
                });
            }
            Err(e) => return Err(e),
        }
    }
    timings.push(("count", t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let series = match singular_series(sys, cfg.r_series, &cfg.budget) {
        Ok(s) => Some(s),
        Err(Error::Budget { .. }) => {
            exhausted = true;
            None
        }
        Err(e) => return Err(e),
    };
    timings.push(("series", t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let integral = match singular_integral(sys, cfg.r_integral, &scheme, &cfg.budget) {
        Ok(i) => Some(i),
        Err(Error::Budget { .. }) => {
            exhausted = true;
            None
        }
        Err(e) => return Err(e),
    };
    timings.push(("integral", t0.elapsed().as_secs_f64()));

    let main_product = match (&series, &integral) {
        (Some(s), Some(i)) => Some(s.value * i.value),
        _ => None,
    };

    let t0 = Instant::now();
    let diagnostics = diagnostics(cfg, &mut exhausted)?;
    timings.push(("diagnostics", t0.elapsed().as_secs_f64()));

    // Assemble the per-X comparison.
    let exp = rat(
        sys.n() as i64 - sys.k() as i64 - sys.d() as i64,
        1,
    );
    let mut table = Table::new(&[
        "x",
        "count",
        "method",
        "scale",
        "ratio",
        "main_product",
        "discrepancy",
        "flag",
    ]);
    let mut row_values: Vec<Value> = Vec::new();
    for row in &rows {
        let degenerate = row.x < 2;
        let scale = if degenerate {
            None
        } else {
            Some(pow_f64(row.x, &exp))
        };
        let (mut cells, mut obj): (Vec<Cell>, serde_json::Map<String, Value>) =
            (vec![Cell::UInt(row.x as u128)], serde_json::Map::new());
        obj.insert("x".into(), json!(row.x));
        match (&row.count, &row.missing) {
            (Some(c), _) => {
                cells.push(Cell::UInt(c.count));
                cells.push(Cell::Text(c.method.to_string()));
                obj.insert(
                    "count".into(),
                    match u64::try_from(c.count) {
                        Ok(v) => json!(v),
                        Err(_) => json!(c.count.to_string()),
                    },
                );
                obj.insert("method".into(), json!(c.method.to_string()));
                match scale {
                    Some(s) => {
                        let ratio = c.count as f64 / s;
                        cells.push(Cell::Float(s));
                        cells.push(Cell::Float(ratio));
                        obj.insert("scale".into(), json!(s));
                        obj.insert("ratio".into(), json!(ratio));
                        match main_product {
                            Some(mp) => {
                                let disc = (ratio - mp).abs();
                                cells.push(Cell::Float(mp));
                                cells.push(Cell::Float(disc));
                                obj.insert("main_product".into(), json!(mp));
                                obj.insert("discrepancy".into(), json!(disc));
                                cells.push(Cell::Empty);
                            }
                            None => {
                                cells.push(Cell::Text("MISSING".into()));
                                cells.push(Cell::Text("MISSING".into()));
                                obj.insert("main_product".into(), Value::Null);
                                obj.insert("discrepancy".into(), Value::Null);
                                cells.push(Cell::Text("MISSING".into()));
                            }
                        }
                    }
                    None => {
                        cells.push(Cell::Empty);
                        cells.push(Cell::Empty);
                        cells.push(Cell::Empty);
                        cells.push(Cell::Empty);
                        cells.push(Cell::Text("degenerate".into()));
                        obj.insert("scale".into(), Value::Null);
                        obj.insert("ratio".into(), Value::Null);
                        obj.insert("degenerate".into(), json!(true));
                    }
                }
            }
            (None, Some(msg)) => {
                for _ in 0..5 {
                    cells.push(Cell::Text("MISSING".into()));
                }
                cells.push(Cell::Text("MISSING".into()));
                obj.insert("count".into(), Value::Null);
                obj.insert("missing".into(), json!(msg));
            }
            (None, None) => unreachable!("row with neither count nor reason"),
        }
        table.push(cells);
        row_values.push(Value::Object(obj));
    }

    let report = json!({
        "schema": SCHEMA,
        "command": "run",
        "system": {
            "name": sys.name(),
            "path": cfg.system_path.display().to_string(),
            "n": sys.n(),
            "k": sys.k(),
            "d": sys.d(),
        },
        "truncation": {
            "r_series": cfg.r_series,
            "r_integral": cfg.r_integral,
            "omega": rat_to_string(&cfg.omega),
            "c": rat_to_string(&cfg.c),
            "c_prime": rat_to_string(&cfg.c_prime),
        },
        "seed": cfg.seed,
        "series": series.as_ref().map(|s| json!({
            "r": s.r,
            "value": s.value,
            "doubling_residuals": s.doubling_residuals,
        })),
        "integral": integral.as_ref().map(|i| json!({
            "r": i.r,
            "value": i.value,
            "audit_error": i.audit_error,
            "cells": i.cells,
            "unconverged_cells": i.unconverged_cells,
            "doubling_residuals": i.doubling_residuals,
        })),
        "main_product": main_product,
        "rows": row_values,
        "diagnostics": diagnostics,
    });

    std::fs::create_dir_all(&cfg.output)
        .map_err(|e| Error::invalid("output", format!("{}: {e}", cfg.output.display())))?;
    let report_json = cfg.output.join("report.json");
    let report_csv = cfg.output.join("report.csv");
    std::fs::write(
        &report_json,
        serde_json::to_string_pretty(&report).expect("json") + "\n",
    )
    .map_err(|e| Error::invalid("output", e.to_string()))?;
    std::fs::write(&report_csv, table.to_csv(precision))
        .map_err(|e| Error::invalid("output", e.to_string()))?;

    let provenance = json!({
        "schema": SCHEMA,
        "unix_time": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "config_hash": format!("{:016x}", fnv1a(&cfg.raw_bytes)),
        "seed": cfg.seed,
        "versions": { "arclab": env!("CARGO_PKG_VERSION") },
        "timings_seconds": timings.iter().map(|(k, v)| json!({"stage": k, "seconds": v})).collect::<Vec<_>>(),
        "budget": {
            "max_evals": cfg.budget.max_evals,
            "max_sweep_intervals": cfg.budget.max_sweep_intervals,
            "max_quad_evals": cfg.budget.max_quad_evals,
        },
        "budget_exhausted": exhausted,
    });
    std::fs::write(
        cfg.output.join("provenance.json"),
        serde_json::to_string_pretty(&provenance).expect("json") + "\n",
    )
    .map_err(|e| Error::invalid("output", e.to_string()))?;

    Ok(RunSummary {
        budget_exhausted: exhausted,
        report_json,
        report_csv,
    })
}

fn diagnostics(cfg: &ExperimentConfig, exhausted: &mut bool) -> Result<Value> {
    let sys = &cfg.system;

    // One-dimensional arc volume at the midpoint height, on the largest
    // usable box: exact measure, exact partition identity, bound check.
    let arc = match cfg.x_list.iter().rev().find(|&&x| x >= 2) {
        None => Value::Null,
        Some(&x) => match volume_ma(&rat(1, 2), x, sys.k(), &cfg.budget) {
            Ok(v) => {
                let terms: Vec<Value> = v
                    .measure
                    .terms
                    .iter()
                    .map(|(e, c)| {
                        json!({"exp": rat_to_string(e), "coeff": rat_to_string(c)})
                    })
                    .collect();
                json!({
                    "x": x,
                    "theta": "1/2",
                    "measure_terms": terms,
                    "measure": v.measure.to_f64(),
                    "disjoint": v.disjoint,
                    "within_bound": v.within_bound,
                    "bound_ratio": v.bound_ratio,
                })
            }
            Err(Error::Budget { .. }) => {
                *exhausted = true;
                json!({"missing": "budget"})
            }
            Err(e) => return Err(e),
        },
    };

    // Weyl sum growth against the height-one envelope, with a badly
    // approximable phase: the slope should stay well under the trivial
    // growth rate.
    let weyl_xs: Vec<u64> = cfg
        .x_list
        .iter()
        .copied()
        .filter(|&x| (2..=WEYL_X_CAP).contains(&x))
        .collect();
    let weyl = if weyl_xs.len() >= 2 {
        let alpha = rat_from_f64((5f64.sqrt() - 1.0) / 2.0).expect("finite");
        let lead = BigInt::from(1);
        let mut rows = Vec::new();
        let mut points = Vec::new();
        let mut missing = false;
        for &x in &weyl_xs {
            match weyl_single_sum(&lead, &alpha, x, sys.k(), &cfg.budget) {
                Ok(sum) => {
                    let envelope = pow_f64(x, &rat(sys.k() as i64 - 1, 1));
                    points.push((x as f64, sum));
                    rows.push(json!({
                        "x": x,
                        "sum": sum,
                        "envelope": envelope,
                        "ratio": sum / envelope,
                    }));
                }
                Err(Error::Budget { .. }) => {
                    *exhausted = true;
                    missing = true;
                }
                Err(e) => return Err(e),
            }
        }
        if points.len() >= 2 {
            json!({
                "alpha": rat_to_string(&alpha),
                "rows": rows,
                "slope": log_log_slope(&points),
                "missing": missing,
            })
        } else {
            json!({"missing": "budget"})
        }
    } else {
        Value::Null
    };

    // Local-density bridge: level-by-level residual of the lifted counts
    // against the complete-sum partial sums, two independent code paths.
    let mut bridge = Vec::new();
    for p in [2u64, 3] {
        match chi_p(sys, p, 2, 1e-3, &cfg.budget) {
            Ok(rep) => {
                let levels: Vec<Value> = rep
                    .levels
                    .iter()
                    .map(|l| {
                        let partial: f64 = rep.a_terms.iter().take(l.h as usize + 1).sum();
                        json!({
                            "h": l.h,
                            "gamma": l.gamma.to_string(),
                            "normalized": l.normalized,
                            "residual": (l.normalized - partial).abs(),
                        })
                    })
                    .collect();
                bridge.push(json!({
                    "p": p,
                    "levels": levels,
                    "stabilized": rep.stabilized,
                }));
            }
            Err(Error::Budget { .. }) => {
                *exhausted = true;
                bridge.push(json!({"p": p, "missing": "budget"}));
            }
            Err(e) => return Err(e),
        }
    }

    Ok(json!({
        "arc_volume": arc,
        "weyl": weyl,
        "bridge": bridge,
    }))
}

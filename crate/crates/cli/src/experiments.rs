//! Registered experiments and the custom per-seed pipeline.
//!
//! Each experiment writes per-seed CSV records plus an aggregate
//! summary.json, enough to redraw the figures externally; nothing is
//! plotted here.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dplab_core::attacks::{mse_max_attack, stealthy_attack, BudgetSpec, PoisonDelta, StealthyConstraintSpec, StealthyOptions};
use dplab_core::detection::{
    correlations, leverage_outliers, partial_f_test, portmanteau_test, residual_variance_test,
    SigmaSpec,
};
use dplab_core::io::{atomic_write, write_json};
use dplab_core::lti::{
    example_benchmark_plant, example_scalar_with_noise, gaussian_input, simulate, Dataset,
    DisturbanceSet, LtiSystem,
};
use dplab_core::numerics::{derive_seed, seeded_rng, spectral_norm, vec_col};
use dplab_core::regression::{ls_fit, LsFit};
use dplab_core::{Error, Matrix, Vector};
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::commands::{build_attack, run_detection};
use crate::config::{identity, ExperimentConfig};

const ALPHA: f64 = 0.05;

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) }
}

/// Nearest-rank quartiles (q25, median, q75) of the finite entries.
fn quartiles(v: &[f64]) -> (f64, f64, f64) {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if s.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
    (rank(0.25), median(s.clone()), rank(0.75))
}

/// Angle between the clean estimate and the estimate shift, in radians.
fn alignment_angle(clean: &LsFit, poisoned: &LsFit) -> f64 {
    let anchor = vec_col(&clean.theta());
    let shift = vec_col(&(poisoned.theta() - clean.theta()));
    if shift.norm() == 0.0 || anchor.norm() == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    (anchor.dot(&shift) / (anchor.norm() * shift.norm())).abs().min(1.0).acos()
}

fn simulate_gaussian(sys: &LtiSystem, t: usize, seed: u64) -> dplab_core::Result<Dataset> {
    let u = gaussian_input(sys.m(), t, &identity(sys.m()), derive_seed(seed, 0))?;
    Ok(simulate(sys, &u, &Vector::zeros(sys.n()), derive_seed(seed, 1))?.0)
}

pub fn cmd_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    base_seed: u64,
    paper_scale: bool,
) -> Result<i32> {
    match cfg.name.as_str() {
        "ex1-input-poisoning" | "ex1" => ex1(cfg, out, base_seed),
        "ex2-mse-max" | "ex2" => ex2(cfg, out, base_seed),
        "ex3-stealthy" | "ex3" => ex3(cfg, out, base_seed, paper_scale),
        "custom" => custom(cfg, out, base_seed, paper_scale),
        other => bail!(
            "unknown experiment '{other}' (expected ex1-input-poisoning, ex2-mse-max, \
             ex3-stealthy, or custom)"
        ),
    }
}

fn seeds_or(cfg: &ExperimentConfig, n: usize) -> Vec<u64> {
    cfg.seeds.clone().unwrap_or_else(|| (0..n as u64).collect())
}

/// Input-replacement attack across a noise-level / horizon grid: the clean
/// model-fit statistic stays huge while the poisoned one drops below its
/// critical value once the noise is small enough to identify B at all.
fn ex1(cfg: &ExperimentConfig, out: &Path, base_seed: u64) -> Result<i32> {
    const SIGMAS: [f64; 3] = [0.1, 1.0, 10.0];
    const TS: [usize; 3] = [30, 100, 1000];
    let seeds = seeds_or(cfg, 20);

    let mut items = Vec::new();
    for (ci, &sigma) in SIGMAS.iter().enumerate() {
        for (ti, &t) in TS.iter().enumerate() {
            for &seed in &seeds {
                items.push((ci * TS.len() + ti, sigma, t, seed));
            }
        }
    }
    let rows: Vec<(f64, usize, u64, Vec<f64>, bool, bool)> = items
        .par_iter()
        .map(|&(cell, sigma, t, seed)| -> Result<_> {
            let sys = LtiSystem::new(
                Matrix::from_element(1, 1, 0.7),
                Matrix::from_element(1, 1, 0.5),
                Matrix::from_element(1, 1, sigma * sigma),
                DisturbanceSet::Unbounded,
            )?;
            let run = derive_seed(derive_seed(base_seed, cell as u64), seed);
            let d = simulate_gaussian(&sys, t, run)?;
            let clean_fit = ls_fit(&d)?;
            let clean = partial_f_test(&d, ALPHA)?;
            let delta = dplab_core::attacks::indistinguishable_input(
                &d,
                &identity(1),
                derive_seed(run, 2),
            )?;
            let pd = delta.apply(&d)?;
            let pois_fit = ls_fit(&pd)?;
            let pois = partial_f_test(&pd, ALPHA)?;
            let vals = vec![
                clean_fit.a_hat[(0, 0)],
                clean_fit.b_hat[(0, 0)],
                clean.statistic,
                pois_fit.a_hat[(0, 0)],
                pois_fit.b_hat[(0, 0)],
                pois.statistic,
            ];
            Ok((sigma, t, seed, vals, clean.reject, pois.reject))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut csv = String::from(
        "sigma,T,seed,a_hat_clean,b_hat_clean,z_clean,reject_clean,\
         a_hat_poisoned,b_hat_poisoned,z_poisoned,reject_poisoned\n",
    );
    for (sigma, t, seed, v, rc, rp) in &rows {
        csv.push_str(&format!(
            "{sigma},{t},{seed},{},{},{},{rc},{},{},{},{rp}\n",
            v[0], v[1], v[2], v[3], v[4], v[5]
        ));
    }
    atomic_write(&out.join("ex1_records.csv"), csv.as_bytes())?;

    let mut cells = Vec::new();
    for &sigma in &SIGMAS {
        for &t in &TS {
            let cell: Vec<_> = rows.iter().filter(|r| r.0 == sigma && r.1 == t).collect();
            let z_clean = median(cell.iter().map(|r| r.3[2]).collect());
            let z_pois = median(cell.iter().map(|r| r.3[5]).collect());
            cells.push(json!({
                "sigma": sigma,
                "T": t,
                "median_z_clean": z_clean,
                "median_z_poisoned": z_pois,
                "rejects_clean": cell.iter().filter(|r| r.4).count(),
                "rejects_poisoned": cell.iter().filter(|r| r.5).count(),
                "clean_dominates": z_clean > z_pois,
            }));
        }
    }
    let expected = seeds.len() * SIGMAS.len() * TS.len();
    assert_eq!(rows.len(), expected, "record count must equal seeds x grid cells");
    write_json(
        &out.join("summary.json"),
        &json!({
            "name": "ex1-input-poisoning",
            "seeds": seeds,
            "records": rows.len(),
            "cells": cells,
        }),
    )?;
    println!("wrote {} and {}", out.join("ex1_records.csv").display(), out.join("summary.json").display());
    Ok(0)
}

/// Best-of-`draws` random perturbation at the budget boundary, measured by
/// poisoned residual energy.
fn best_oblivious(
    d: &Dataset,
    delta_rel: f64,
    uniform: bool,
    draws: usize,
    seed: u64,
) -> dplab_core::Result<PoisonDelta> {
    let (rx, ru) = (delta_rel * d.x.norm(), delta_rel * d.u.norm());
    let mut best: Option<(f64, PoisonDelta)> = None;
    for k in 0..draws {
        let s = derive_seed(seed, k as u64);
        let mut delta = if uniform {
            let mut rng = seeded_rng(s);
            let mut delta = PoisonDelta::new(
                Matrix::from_fn(d.m(), d.t(), |_, _| rng.random_range(-1.0..1.0)),
                Matrix::from_fn(d.n(), d.t() + 1, |_, _| rng.random_range(-1.0..1.0)),
            )?;
            delta.scale_to_radii(rx, ru);
            delta
        } else {
            PoisonDelta::gaussian_scaled(d, delta_rel, delta_rel, s)?
        };
        delta.scale_to_radii(rx, ru);
        let energy = ls_fit(&delta.apply(d)?)?.r.norm_squared();
        if best.as_ref().map_or(true, |(b, _)| energy > *b) {
            best = Some((energy, delta));
        }
    }
    Ok(best.expect("draws >= 1").1)
}

/// Residual-energy maximizer versus boundary-sampled oblivious baselines on
/// the scalar example plant, swept over the relative budget.
fn ex2(cfg: &ExperimentConfig, out: &Path, base_seed: u64) -> Result<i32> {
    const DELTAS: [f64; 5] = [0.01, 0.025, 0.05, 0.075, 0.1];
    const T: usize = 200;
    const DRAWS: usize = 100;
    let seeds = seeds_or(cfg, 10);
    let sys = example_scalar_with_noise(0.1);
    let sigma = SigmaSpec::Known(Matrix::from_element(1, 1, 0.01));

    let mut items = Vec::new();
    for (di, &delta) in DELTAS.iter().enumerate() {
        for &seed in &seeds {
            items.push((di, delta, seed));
        }
    }
    struct Row {
        delta: f64,
        seed: u64,
        attack: &'static str,
        mse_clean: f64,
        mse_poisoned: f64,
        shift_fro: f64,
        shift_spec: f64,
        angle: f64,
        rv_statistic: f64,
        rv_reject: bool,
    }
    let rows: Vec<Row> = items
        .par_iter()
        .map(|&(di, delta, seed)| -> Result<Vec<Row>> {
            let run = derive_seed(derive_seed(base_seed, di as u64), seed);
            let d = simulate_gaussian(&sys, T, run)?;
            let clean = ls_fit(&d)?;

            let budget = BudgetSpec::new(delta, delta)?;
            let adaptive =
                mse_max_attack(&d, &budget, 80, 1e-9, 2, derive_seed(run, 2))?.delta;
            let gaussian = best_oblivious(&d, delta, false, DRAWS, derive_seed(run, 3))?;
            let uniform = best_oblivious(&d, delta, true, DRAWS, derive_seed(run, 4))?;

            [("adaptive", adaptive), ("oblivious_gaussian", gaussian), ("oblivious_uniform", uniform)]
                .into_iter()
                .map(|(name, delta_p)| {
                    let fit = ls_fit(&delta_p.apply(&d)?)?;
                    let rv = residual_variance_test(&fit, &sigma, ALPHA, 50_000, 0)?;
                    let shift = fit.theta() - clean.theta();
                    Ok(Row {
                        delta,
                        seed,
                        attack: name,
                        mse_clean: clean.mse,
                        mse_poisoned: fit.mse,
                        shift_fro: shift.norm(),
                        shift_spec: spectral_norm(&shift),
                        angle: alignment_angle(&clean, &fit),
                        rv_statistic: rv.statistic,
                        rv_reject: rv.reject,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<Row>>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut csv = String::from(
        "delta,seed,attack,mse_clean,mse_poisoned,shift_fro,shift_spec,angle,\
         rv_statistic,rv_reject\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.delta,
            r.seed,
            r.attack,
            r.mse_clean,
            r.mse_poisoned,
            r.shift_fro,
            r.shift_spec,
            r.angle,
            r.rv_statistic,
            r.rv_reject
        ));
    }
    atomic_write(&out.join("ex2_records.csv"), csv.as_bytes())?;

    let mut levels = Vec::new();
    for &delta in &DELTAS {
        let of = |name: &str, f: &dyn Fn(&Row) -> f64| -> f64 {
            median(rows.iter().filter(|r| r.delta == delta && r.attack == name).map(f).collect())
        };
        let med_adaptive = of("adaptive", &|r| r.mse_poisoned);
        let med_gaussian = of("oblivious_gaussian", &|r| r.mse_poisoned);
        let med_uniform = of("oblivious_uniform", &|r| r.mse_poisoned);
        levels.push(json!({
            "delta": delta,
            "median_mse": {
                "adaptive": med_adaptive,
                "oblivious_gaussian": med_gaussian,
                "oblivious_uniform": med_uniform,
            },
            "median_angle": {
                "adaptive": of("adaptive", &|r| r.angle),
                "oblivious_gaussian": of("oblivious_gaussian", &|r| r.angle),
                "oblivious_uniform": of("oblivious_uniform", &|r| r.angle),
            },
            "rv_rejects_adaptive": rows
                .iter()
                .filter(|r| r.delta == delta && r.attack == "adaptive" && r.rv_reject)
                .count(),
            "adaptive_dominates": med_adaptive >= med_gaussian && med_adaptive >= med_uniform,
        }));
    }
    assert_eq!(rows.len(), seeds.len() * DELTAS.len() * 3, "record count must equal seeds x levels x attacks");
    write_json(
        &out.join("summary.json"),
        &json!({
            "name": "ex2-mse-max",
            "seeds": seeds,
            "records": rows.len(),
            "levels": levels,
        }),
    )?;
    println!("wrote {} and {}", out.join("ex2_records.csv").display(), out.join("summary.json").display());
    Ok(0)
}

/// Stealthy attack on the fourth-order benchmark plant across budget levels,
/// with a matched-budget residual-energy maximizer for comparison.
fn ex3(cfg: &ExperimentConfig, out: &Path, base_seed: u64, paper_scale: bool) -> Result<i32> {
    const DELTAS: [f64; 5] = [0.01, 0.025, 0.05, 0.075, 0.1];
    const T: usize = 500;
    const LAGS: usize = 5;
    let seeds = seeds_or(cfg, 10);
    let restarts = if paper_scale { 10 } else { 5 };
    let sys = example_benchmark_plant();
    let sigma = SigmaSpec::Known(Matrix::identity(4, 4) * 0.01);

    let mut items = Vec::new();
    for (di, &delta) in DELTAS.iter().enumerate() {
        for &seed in &seeds {
            items.push((di, delta, seed));
        }
    }
    struct Row {
        delta: f64,
        seed: u64,
        feasible: bool,
        max_constraint: f64,
        shift_stealthy: f64,
        shift_matched: f64,
        pm_statistic: f64,
        pm_reject: bool,
        rv_statistic: f64,
        rv_reject: bool,
        lev_clean: usize,
        lev_poisoned: usize,
        series: Option<(Vec<f64>, Vec<f64>)>,
    }
    let series_key = (DELTAS.iter().position(|&d| d == 0.05).unwrap(), seeds[0]);
    let rows: Vec<Row> = items
        .par_iter()
        .map(|&(di, delta, seed)| -> Result<Row> {
            let run = derive_seed(derive_seed(base_seed, di as u64), seed);
            let d = simulate_gaussian(&sys, T, run)?;
            let clean = ls_fit(&d)?;
            let spec = StealthyConstraintSpec::uniform(delta, LAGS)?;
            let opts = StealthyOptions {
                max_iters: 300,
                n_restarts: restarts,
                seed: derive_seed(run, 2),
                ..Default::default()
            };
            let res = match stealthy_attack(&d, &spec, &opts) {
                Ok(r) => r,
                Err(Error::Infeasible { constraint_values, worst_violation }) => {
                    return Ok(Row {
                        delta,
                        seed,
                        feasible: false,
                        max_constraint: constraint_values
                            .iter()
                            .fold(worst_violation, |a, &b| a.max(b)),
                        shift_stealthy: f64::NAN,
                        shift_matched: f64::NAN,
                        pm_statistic: f64::NAN,
                        pm_reject: false,
                        rv_statistic: f64::NAN,
                        rv_reject: false,
                        lev_clean: 0,
                        lev_poisoned: 0,
                        series: None,
                    });
                }
                Err(e) => return Err(e.into()),
            };
            let pd = res.delta.apply(&d)?;
            let fit_p = ls_fit(&pd)?;
            let shift_stealthy = spectral_norm(&(fit_p.theta() - clean.theta()));

            let budget = BudgetSpec::new(
                res.delta.dx.norm() / d.x.norm(),
                res.delta.du.norm() / d.u.norm(),
            )?;
            let matched = mse_max_attack(&d, &budget, 60, 1e-9, 2, derive_seed(run, 3))?;
            let fit_m = ls_fit(&matched.delta.apply(&d)?)?;

            let cs = correlations(&fit_p.r, LAGS)?;
            let pm = portmanteau_test(&cs, T, LAGS, ALPHA)?;
            let rv = residual_variance_test(&fit_p, &sigma, ALPHA, 100_000, 0)?;
            let series = if (di, seed) == series_key {
                let norms = |f: &LsFit| (0..f.r.ncols()).map(|t| f.r.column(t).norm()).collect();
                Some((norms(&clean), norms(&fit_p)))
            } else {
                None
            };
            Ok(Row {
                delta,
                seed,
                feasible: true,
                max_constraint: res.constraint_values.iter().fold(0.0f64, |a, &b| a.max(b)),
                shift_stealthy,
                shift_matched: spectral_norm(&(fit_m.theta() - clean.theta())),
                pm_statistic: pm.statistic,
                pm_reject: pm.reject,
                rv_statistic: rv.statistic,
                rv_reject: rv.reject,
                lev_clean: leverage_outliers(&clean, 2.0).len(),
                lev_poisoned: leverage_outliers(&fit_p, 2.0).len(),
                series,
            })
        })
        .collect::<Result<Vec<Row>>>()?;

    let mut csv = String::from(
        "delta,seed,feasible,max_constraint,shift_stealthy,shift_matched_mse,\
         pm_statistic,pm_reject,rv_statistic,rv_reject,lev_clean,lev_poisoned\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.delta,
            r.seed,
            r.feasible,
            r.max_constraint,
            r.shift_stealthy,
            r.shift_matched,
            r.pm_statistic,
            r.pm_reject,
            r.rv_statistic,
            r.rv_reject,
            r.lev_clean,
            r.lev_poisoned
        ));
    }
    atomic_write(&out.join("ex3_records.csv"), csv.as_bytes())?;

    if let Some((rc, rp)) = rows.iter().find_map(|r| r.series.as_ref()) {
        let mut csv = String::from("t,residual_norm_clean,residual_norm_poisoned\n");
        for t in 0..rc.len() {
            csv.push_str(&format!("{t},{},{}\n", rc[t], rp[t]));
        }
        atomic_write(&out.join("ex3_residual_series.csv"), csv.as_bytes())?;
    }

    let mut levels = Vec::new();
    for &delta in &DELTAS {
        let level: Vec<_> = rows.iter().filter(|r| r.delta == delta).collect();
        let med_stealthy = median(level.iter().map(|r| r.shift_stealthy).collect());
        let med_matched = median(level.iter().map(|r| r.shift_matched).collect());
        levels.push(json!({
            "delta": delta,
            "feasible": level.iter().filter(|r| r.feasible).count(),
            "median_shift_stealthy": med_stealthy,
            "median_shift_matched_mse": med_matched,
            "stealthy_dominates": med_stealthy > med_matched,
            "pm_rejects": level.iter().filter(|r| r.pm_reject).count(),
            "rv_rejects": level.iter().filter(|r| r.rv_reject).count(),
            "leverage_flags": {
                "clean": level.iter().map(|r| r.lev_clean).sum::<usize>(),
                "poisoned": level.iter().map(|r| r.lev_poisoned).sum::<usize>(),
            },
        }));
    }
    assert_eq!(rows.len(), seeds.len() * DELTAS.len(), "record count must equal seeds x levels");
    write_json(
        &out.join("summary.json"),
        &json!({
            "name": "ex3-stealthy",
            "seeds": seeds,
            "restarts": restarts,
            "records": rows.len(),
            "levels": levels,
        }),
    )?;
    println!("wrote {} and {}", out.join("ex3_records.csv").display(), out.join("summary.json").display());
    Ok(0)
}

/// Fully configured simulate -> attack -> detect pipeline, one record per
/// seed, with median/IQR aggregates.
fn custom(cfg: &ExperimentConfig, out: &Path, base_seed: u64, paper_scale: bool) -> Result<i32> {
    let system = cfg.system.as_ref().context("custom experiment needs a system")?;
    let t = cfg.t.context("custom experiment needs T")?;
    let attack = cfg.attack.as_ref().context("custom experiment needs an attack")?;
    let detection = cfg.detection.as_ref().context("custom experiment needs a detection block")?;
    detection.validate()?;
    let seeds = cfg.seeds.clone().context("custom experiment needs a seed list")?;
    if seeds.is_empty() {
        bail!("custom experiment needs at least one seed");
    }
    let sys = system.build()?;

    struct Row {
        seed: u64,
        feasible: bool,
        mse_clean: f64,
        mse_poisoned: f64,
        shift_fro: f64,
        shift_spec: f64,
        outcomes: Vec<(String, f64, bool)>,
    }
    let rows: Vec<Row> = seeds
        .par_iter()
        .map(|&seed| -> Result<Row> {
            let run = derive_seed(base_seed, seed);
            let d = simulate_gaussian(&sys, t, run)?;
            let clean = ls_fit(&d)?;
            let res = match build_attack(&d, attack, derive_seed(run, 2), paper_scale) {
                Ok(r) => r,
                Err(Error::Infeasible { .. }) => {
                    return Ok(Row {
                        seed,
                        feasible: false,
                        mse_clean: clean.mse,
                        mse_poisoned: f64::NAN,
                        shift_fro: f64::NAN,
                        shift_spec: f64::NAN,
                        outcomes: vec![],
                    });
                }
                Err(e) => return Err(e.into()),
            };
            let pd = res.delta.apply(&d)?;
            let fit_p = ls_fit(&pd)?;
            let shift = fit_p.theta() - clean.theta();
            let outcomes = run_detection(&pd, detection)?
                .into_iter()
                .map(|o| (o.name, o.statistic, o.reject))
                .collect();
            Ok(Row {
                seed,
                feasible: true,
                mse_clean: clean.mse,
                mse_poisoned: fit_p.mse,
                shift_fro: shift.norm(),
                shift_spec: spectral_norm(&shift),
                outcomes,
            })
        })
        .collect::<Result<Vec<Row>>>()?;

    let mut csv = String::from("seed,feasible,mse_clean,mse_poisoned,shift_fro,shift_spec");
    for name in &detection.tests {
        csv.push_str(&format!(",{name}_statistic,{name}_reject"));
    }
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}",
            r.seed, r.feasible, r.mse_clean, r.mse_poisoned, r.shift_fro, r.shift_spec
        ));
        for name in &detection.tests {
            match r.outcomes.iter().find(|(n, _, _)| n == name) {
                Some((_, stat, reject)) => csv.push_str(&format!(",{stat},{reject}")),
                None => csv.push_str(",NaN,false"),
            }
        }
        csv.push('\n');
    }
    atomic_write(&out.join("records.csv"), csv.as_bytes())?;

    let agg = |f: &dyn Fn(&Row) -> f64| {
        let (q25, med, q75) = quartiles(&rows.iter().map(f).collect::<Vec<_>>());
        json!({ "q25": q25, "median": med, "q75": q75 })
    };
    let mut reject_counts = serde_json::Map::new();
    for name in &detection.tests {
        let count = rows
            .iter()
            .filter(|r| r.outcomes.iter().any(|(n, _, rej)| n == name && *rej))
            .count();
        reject_counts.insert(name.clone(), json!(count));
    }
    assert_eq!(rows.len(), seeds.len(), "record count must equal seed count");
    write_json(
        &out.join("summary.json"),
        &json!({
            "name": "custom",
            "seeds": seeds,
            "records": rows.len(),
            "feasible": rows.iter().filter(|r| r.feasible).count(),
            "aggregates": {
                "shift_spec": agg(&|r| r.shift_spec),
                "shift_fro": agg(&|r| r.shift_fro),
                "mse_poisoned": agg(&|r| r.mse_poisoned),
            },
            "reject_counts": reject_counts,
        }),
    )?;
    println!("wrote {} and {}", out.join("records.csv").display(), out.join("summary.json").display());
    Ok(0)
}

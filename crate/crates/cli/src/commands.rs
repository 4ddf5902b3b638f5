//! The simulate, attack, and detect subcommands.

use std::path::Path;

use anyhow::{bail, Context, Result};
use dplab_core::attacks::{
    indistinguishable_input, mse_max_attack, stealthy_attack, AttackResult, BudgetSpec,
    PoisonDelta, StealthyConstraintSpec, StealthyOptions,
};
use dplab_core::detection::{run_suite, SuiteConfig, TestOutcome};
use dplab_core::io::{
    load_dataset, save_attack_result, save_dataset, save_dataset_csv, save_suite_csv,
    save_suite_report, write_json, DatasetBundle,
};
use dplab_core::lti::{gaussian_input, simulate, Dataset};
use dplab_core::numerics::{derive_seed, rng_gaussian};
use dplab_core::{Error, Matrix, Vector};

use crate::config::{
    identity, AttackConfig, AttackSpecConfig, DetectConfig, DetectionSpec, SimulateConfig,
};

fn unix_timestamp() -> String {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_else(|_| "0".into())
}

pub fn cmd_simulate(cfg: &SimulateConfig, out: &Path, seed: u64) -> Result<i32> {
    let sys = cfg.system.build()?;
    let (n, m) = (sys.n(), sys.m());
    let sigma_u = match &cfg.sigma_u {
        Some(rows) => dplab_core::io::matrix_from_rows(rows, "sigma_u")?,
        None => identity(m),
    };
    let x0 = match &cfg.x0 {
        Some(v) => {
            if v.len() != n {
                bail!("x0 has length {}, state dimension is {n}", v.len());
            }
            Vector::from_column_slice(v)
        }
        None => Vector::zeros(n),
    };
    let u = gaussian_input(m, cfg.t, &sigma_u, derive_seed(seed, 0))?;
    let (dataset, noise) = simulate(&sys, &u, &x0, derive_seed(seed, 1))?;
    let bundle = DatasetBundle {
        dataset,
        noise: Some(noise.w),
        system: Some(sys),
        seed: Some(seed),
        created: Some(unix_timestamp()),
    };
    save_dataset(&out.join("dataset.json"), &bundle)?;
    if cfg.csv {
        save_dataset_csv(&out.join("dataset.csv"), &bundle.dataset)?;
    }
    println!("wrote {}", out.join("dataset.json").display());
    Ok(0)
}

/// Runs the configured attack on a dataset. Shared with the experiment
/// runner; `paper_scale` lifts scaled-down restart counts.
pub fn build_attack(
    d: &Dataset,
    spec: &AttackSpecConfig,
    seed: u64,
    paper_scale: bool,
) -> dplab_core::Result<AttackResult> {
    match spec {
        AttackSpecConfig::MseMax { delta_x, delta_u, max_iters, restarts } => {
            let budget = BudgetSpec::new(*delta_x, *delta_u)?;
            mse_max_attack(d, &budget, *max_iters, 1e-9, *restarts, derive_seed(seed, 2))
        }
        AttackSpecConfig::Stealthy { delta, lags, max_iters, restarts, stat_margin } => {
            let spec = StealthyConstraintSpec::uniform(*delta, *lags)?;
            let restarts = if paper_scale { (*restarts).max(10) } else { *restarts };
            let opts = StealthyOptions {
                max_iters: *max_iters,
                n_restarts: restarts,
                stat_margin: *stat_margin,
                seed: derive_seed(seed, 2),
                ..Default::default()
            };
            stealthy_attack(d, &spec, &opts)
        }
        AttackSpecConfig::Oblivious { sigma_x, sigma_u } => {
            let (n, m, t) = (d.n(), d.m(), d.t());
            let dx = rng_gaussian(
                n,
                t + 1,
                &(Matrix::identity(n, n) * (sigma_x * sigma_x)),
                derive_seed(seed, 3),
            )?;
            let du = rng_gaussian(
                m,
                t,
                &(Matrix::identity(m, m) * (sigma_u * sigma_u)),
                derive_seed(seed, 4),
            )?;
            Ok(AttackResult {
                delta: PoisonDelta::new(du, dx)?,
                objective_trace: vec![],
                constraint_values: vec![],
                converged: true,
                iterations: 0,
                seed,
            })
        }
        AttackSpecConfig::Indistinguishable {} => {
            let delta = indistinguishable_input(d, &identity(d.m()), derive_seed(seed, 5))?;
            Ok(AttackResult {
                delta,
                objective_trace: vec![],
                constraint_values: vec![],
                converged: true,
                iterations: 0,
                seed,
            })
        }
    }
}

pub fn cmd_attack(cfg: &AttackConfig, out: &Path, seed: u64, paper_scale: bool) -> Result<i32> {
    let bundle = load_dataset(&cfg.dataset)
        .with_context(|| format!("cannot load dataset {}", cfg.dataset.display()))?;
    let res = match build_attack(&bundle.dataset, &cfg.attack, seed, paper_scale) {
        Ok(r) => r,
        Err(Error::Infeasible { constraint_values, worst_violation }) => {
            let path = out.join("diagnostics.json");
            write_json(
                &path,
                &serde_json::json!({
                    "error": "no feasible attack found",
                    "constraint_values": constraint_values,
                    "worst_violation": worst_violation,
                }),
            )?;
            bail!("no feasible attack found; diagnostics written to {}", path.display());
        }
        Err(e) => return Err(e.into()),
    };
    let poisoned = res.delta.apply(&bundle.dataset)?;
    save_attack_result(&out.join("attack.json"), &res)?;
    let poisoned_bundle = DatasetBundle {
        dataset: poisoned,
        noise: None,
        system: bundle.system,
        seed: Some(seed),
        created: Some(unix_timestamp()),
    };
    save_dataset(&out.join("poisoned.json"), &poisoned_bundle)?;
    if cfg.csv {
        save_dataset_csv(&out.join("poisoned.csv"), &poisoned_bundle.dataset)?;
    }
    println!("wrote {} and {}", out.join("attack.json").display(), out.join("poisoned.json").display());
    Ok(0)
}

/// Runs the suite and keeps the configured tests, in suite order.
pub fn run_detection(d: &Dataset, spec: &DetectionSpec) -> Result<Vec<TestOutcome>> {
    spec.validate()?;
    if spec.tests.is_empty() {
        return Ok(vec![]);
    }
    let suite = SuiteConfig {
        alpha: spec.alpha,
        sigma_w: match &spec.sigma_w {
            Some(s) => Some(s.build()?),
            None => None,
        },
        lags: spec.lags,
        mc_draws: spec.mc_draws,
        mc_seed: spec.mc_seed,
        input_identity: spec.input_identity,
    };
    let outcomes = run_suite(d, &suite);
    Ok(outcomes.into_iter().filter(|o| spec.tests.iter().any(|t| t == &o.name)).collect())
}

pub fn cmd_detect(cfg: &DetectConfig, out: &Path) -> Result<i32> {
    let bundle = load_dataset(&cfg.dataset)
        .with_context(|| format!("cannot load dataset {}", cfg.dataset.display()))?;
    let kept = run_detection(&bundle.dataset, &cfg.spec)?;
    save_suite_report(&out.join("report.json"), &kept)?;
    save_suite_csv(&out.join("report.csv"), &kept)?;
    let alarms = kept.iter().filter(|o| o.flags_poisoning()).count();
    println!(
        "{} of {} tests flag poisoning; wrote {}",
        alarms,
        kept.len(),
        out.join("report.json").display()
    );
    Ok(if alarms > 0 { 2 } else { 0 })
}

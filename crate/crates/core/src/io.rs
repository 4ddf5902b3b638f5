//! On-disk formats: datasets and attack results round-trip through JSON
//! (matrices as nested row arrays); fit and test reports are write-only JSON;
//! CSV exports exist for plotting. All writes go through a temporary file in
//! the target directory and an atomic rename, so readers never observe a
//! partially written file.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackResult, PoisonDelta};
use crate::detection::TestOutcome;
use crate::error::{Error, Result};
use crate::lti::{Dataset, DisturbanceSet, LtiSystem};
use crate::regression::LsFit;
use crate::Matrix;

/// A dataset plus whatever side information was recorded with it.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub dataset: Dataset,
    /// Realized process noise over the horizon (n x T), when recorded.
    pub noise: Option<Matrix>,
    /// Generating system, when recorded. The disturbance set is not part of
    /// the file format; loaded systems default to an unbounded set.
    pub system: Option<LtiSystem>,
    pub seed: Option<u64>,
    pub created: Option<String>,
}

impl DatasetBundle {
    pub fn bare(dataset: Dataset) -> Self {
        Self { dataset, noise: None, system: None, seed: None, created: None }
    }
}

/// Row-major nested-vec view of a matrix, the JSON wire format.
pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Parses the row-major wire format, rejecting ragged or non-finite input.
/// `what` names the field in error messages.
pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::invalid(format!("{what}: no rows")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid(format!("{what}: ragged or empty rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite entry")));
    }
    Ok(Matrix::from_row_slice(rows.len(), ncols, &flat))
}

#[derive(Serialize, Deserialize)]
struct SystemFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    sigma_w: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    created: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    n: usize,
    m: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "U")]
    u: Vec<Vec<f64>>,
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    #[serde(rename = "W", skip_serializing_if = "Option::is_none")]
    w: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    system: Option<SystemFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<MetaFile>,
}

/// Writes `bytes` to `path` via a temp file in the same directory plus a
/// rename, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serializes `value` as pretty-printed JSON and writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn save_dataset(path: &Path, bundle: &DatasetBundle) -> Result<()> {
    let d = &bundle.dataset;
    let file = DatasetFile {
        n: d.n(),
        m: d.m(),
        t: d.t(),
        u: matrix_to_rows(&d.u),
        x: matrix_to_rows(&d.x),
        w: bundle.noise.as_ref().map(matrix_to_rows),
        system: bundle.system.as_ref().map(|s| SystemFile {
            a: matrix_to_rows(&s.a),
            b: matrix_to_rows(&s.b),
            sigma_w: matrix_to_rows(&s.sigma_w),
        }),
        meta: if bundle.seed.is_some() || bundle.created.is_some() {
            Some(MetaFile { seed: bundle.seed, created: bundle.created.clone() })
        } else {
            None
        },
    };
    write_json(path, &file)
}

pub fn load_dataset(path: &Path) -> Result<DatasetBundle> {
    let text = std::fs::read_to_string(path)?;
    let file: DatasetFile = serde_json::from_str(&text)?;
    let u = matrix_from_rows(&file.u, "U")?;
    let x = matrix_from_rows(&file.x, "X")?;
    if u.shape() != (file.m, file.t) {
        return Err(Error::dim(format!("U must be {} x {}", file.m, file.t)));
    }
    if x.shape() != (file.n, file.t + 1) {
        return Err(Error::dim(format!("X must be {} x {}", file.n, file.t + 1)));
    }
    let dataset = Dataset::new(u, x)?;
    let noise = match &file.w {
        Some(rows) => {
            let w = matrix_from_rows(rows, "W")?;
            if w.shape() != (file.n, file.t) {
                return Err(Error::dim(format!("W must be {} x {}", file.n, file.t)));
            }
            Some(w)
        }
        None => None,
    };
    let system = match &file.system {
        Some(s) => Some(LtiSystem::new(
            matrix_from_rows(&s.a, "A")?,
            matrix_from_rows(&s.b, "B")?,
            matrix_from_rows(&s.sigma_w, "sigma_w")?,
            DisturbanceSet::Unbounded,
        )?),
        None => None,
    };
    let (seed, created) = match file.meta {
        Some(m) => (m.seed, m.created),
        None => (None, None),
    };
    Ok(DatasetBundle { dataset, noise, system, seed, created })
}

/// CSV export: header `t,x_0..,u_0..`, one row per time step. The final row
/// holds the terminal state with empty input fields.
pub fn save_dataset_csv(path: &Path, d: &Dataset) -> Result<()> {
    let (n, m, t) = (d.n(), d.m(), d.t());
    let mut out = String::from("t");
    for i in 0..n {
        out.push_str(&format!(",x_{i}"));
    }
    for i in 0..m {
        out.push_str(&format!(",u_{i}"));
    }
    out.push('\n');
    for step in 0..=t {
        out.push_str(&step.to_string());
        for i in 0..n {
            out.push_str(&format!(",{}", d.x[(i, step)]));
        }
        for i in 0..m {
            if step < t {
                out.push_str(&format!(",{}", d.u[(i, step)]));
            } else {
                out.push(',');
            }
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

#[derive(Serialize, Deserialize)]
struct FitFile {
    #[serde(rename = "A_hat")]
    a_hat: Vec<Vec<f64>>,
    #[serde(rename = "B_hat")]
    b_hat: Vec<Vec<f64>>,
    /// None when the fit has no residual degrees of freedom.
    mse: Option<f64>,
    leverage: Vec<f64>,
    rank_ok: bool,
}

pub fn save_fit_report(path: &Path, fit: &LsFit) -> Result<()> {
    let file = FitFile {
        a_hat: matrix_to_rows(&fit.a_hat),
        b_hat: matrix_to_rows(&fit.b_hat),
        mse: if fit.mse.is_finite() { Some(fit.mse) } else { None },
        leverage: fit.leverage.iter().copied().collect(),
        rank_ok: fit.rank_ok,
    };
    write_json(path, &file)
}

#[derive(Serialize, Deserialize)]
struct AttackFile {
    #[serde(rename = "dU")]
    du: Vec<Vec<f64>>,
    #[serde(rename = "dX")]
    dx: Vec<Vec<f64>>,
    objective_trace: Vec<f64>,
    constraints: Vec<f64>,
    converged: bool,
    seed: u64,
}

pub fn save_attack_result(path: &Path, r: &AttackResult) -> Result<()> {
    let file = AttackFile {
        du: matrix_to_rows(&r.delta.du),
        dx: matrix_to_rows(&r.delta.dx),
        objective_trace: r.objective_trace.clone(),
        constraints: r.constraint_values.clone(),
        converged: r.converged,
        seed: r.seed,
    };
    write_json(path, &file)
}

/// Loads an attack result. The iteration count is not part of the file
/// format; it is reconstructed as the objective-trace length.
pub fn load_attack_result(path: &Path) -> Result<AttackResult> {
    let text = std::fs::read_to_string(path)?;
    let file: AttackFile = serde_json::from_str(&text)?;
    let du = matrix_from_rows(&file.du, "dU")?;
    let dx = matrix_from_rows(&file.dx, "dX")?;
    let delta = PoisonDelta::new(du, dx)?;
    Ok(AttackResult {
        delta,
        iterations: file.objective_trace.len(),
        objective_trace: file.objective_trace,
        constraint_values: file.constraints,
        converged: file.converged,
        seed: file.seed,
    })
}

pub fn save_suite_report(path: &Path, outcomes: &[TestOutcome]) -> Result<()> {
    write_json(path, &outcomes)
}

/// CSV with one row per test: name, statistic, p_value, reject. Free-form
/// fields stay in the JSON report to keep the CSV unquoted.
pub fn save_suite_csv(path: &Path, outcomes: &[TestOutcome]) -> Result<()> {
    let mut out = String::from("name,statistic,p_value,reject,flags_poisoning\n");
    for o in outcomes {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            o.name,
            o.statistic,
            o.p_value,
            o.reject,
            o.flags_poisoning()
        ));
    }
    atomic_write(path, out.as_bytes())
}

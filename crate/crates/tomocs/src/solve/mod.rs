//! Estimation of χ from tomographic data: constrained least squares and
//! compressed-sensing ℓ1 minimization, plus the ε diagnostics used to
//! choose and judge the noise level.

mod admm;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::OperatorBasis;
use crate::channel::{check_cptp, gate_library, ideal_chi, Gate, ProcessMatrix, TpConstraint};
use crate::design::{select_configurations, ConfigurationSubset, SensingMatrix};
use crate::error::{Result, TomocsError};
use crate::linalg::{coords_to_herm, herm_to_coords};
use crate::metrics::process_fidelity;
use crate::rng::derive_seed;
use crate::simulate::ProbabilityDataset;

use admm::l1_norm_coords;

/// Which estimator to run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Ls,
    Cs,
}

impl FromStr for Method {
    type Err = TomocsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(Method::Ls),
            "cs" => Ok(Method::Cs),
            other => Err(TomocsError::InvalidArgument(format!(
                "unknown method '{other}' (expected 'ls' or 'cs')"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ls => "ls",
            Method::Cs => "cs",
        })
    }
}

fn default_max_iterations() -> usize {
    50_000
}
fn default_tolerance() -> f64 {
    1e-7
}
fn default_rho() -> f64 {
    1.0
}
fn default_over_relaxation() -> f64 {
    1.7
}
fn default_true() -> bool {
    true
}

/// Solver configuration. Every field has a default, so a config file may
/// specify only what it overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub method: Method,
    /// Noise level ε for the CS constraint, in per-probability RMS
    /// units. Ignored by LS.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub primal_tolerance: f64,
    #[serde(default = "default_tolerance")]
    pub dual_tolerance: f64,
    /// Initial ADMM penalty.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Rebalance the penalty against the primal/dual residual ratio.
    #[serde(default = "default_true")]
    pub adapt_rho: bool,
    #[serde(default = "default_over_relaxation")]
    pub over_relaxation: f64,
    /// When set, sweeps derive every subset seed from the master seed so
    /// a run is bitwise reproducible; when cleared, subset seeds come
    /// from OS entropy (each still recorded in the report).
    #[serde(default = "default_true")]
    pub deterministic: bool,
}

impl EstimatorConfig {
    /// Defaults tuned per problem size and method. Small least-squares
    /// problems are cheap enough to push the residuals near roundoff,
    /// which the exact noiseless-recovery bounds require; ball-constrained
    /// runs stop at 1e-6 and get a larger iteration budget, since
    /// certification near the feasibility boundary converges slowly.
    pub fn for_method(method: Method, num_qubits: usize) -> Self {
        let tol = match (method, num_qubits >= 3) {
            (_, true) => 1e-6,
            (Method::Ls, false) => 1e-10,
            (Method::Cs, false) => 1e-6,
        };
        let max_iterations = match (method, num_qubits >= 3) {
            (Method::Cs, false) => 200_000,
            _ => default_max_iterations(),
        };
        EstimatorConfig {
            method,
            epsilon: 0.0,
            max_iterations,
            primal_tolerance: tol,
            dual_tolerance: tol,
            rho: default_rho(),
            adapt_rho: true,
            over_relaxation: default_over_relaxation(),
            deterministic: true,
        }
    }

    /// Reads a config from a `.json` or `.toml` file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        let cfg: EstimatorConfig = match ext.as_str() {
            "json" => serde_json::from_str(&text)?,
            "toml" => toml::from_str(&text).map_err(|e| {
                TomocsError::Format(format!("{}: {e}", path.display()))
            })?,
            other => {
                return Err(TomocsError::InvalidArgument(format!(
                    "config file must be .json or .toml, got '.{other}'"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(TomocsError::InvalidArgument(format!(
                "epsilon must be finite and ≥ 0, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(TomocsError::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        for (name, tol) in [
            ("primal_tolerance", self.primal_tolerance),
            ("dual_tolerance", self.dual_tolerance),
        ] {
            if !tol.is_finite() || tol <= 0.0 {
                return Err(TomocsError::InvalidArgument(format!(
                    "{name} must be finite and > 0, got {tol}"
                )));
            }
        }
        if !self.rho.is_finite() || self.rho <= 0.0 {
            return Err(TomocsError::InvalidArgument(format!(
                "rho must be finite and > 0, got {}",
                self.rho
            )));
        }
        if !(self.over_relaxation > 0.0 && self.over_relaxation < 2.0) {
            return Err(TomocsError::InvalidArgument(format!(
                "over_relaxation must lie in (0, 2), got {}",
                self.over_relaxation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// ℓ1 norm of χ for CS; the squared data residual for LS.
    pub objective: f64,
    /// `‖Φ·coords(χ) − P‖₂ / √m` at the returned χ.
    pub epsilon_num: f64,
}

#[derive(Debug)]
pub struct SolverResult {
    pub chi: ProcessMatrix,
    pub diagnostics: Diagnostics,
    pub status: SolverStatus,
}

#[derive(Serialize)]
struct SolverResultJson<'a> {
    status: SolverStatus,
    diagnostics: &'a Diagnostics,
    chi_file: &'a str,
}

impl SolverResult {
    /// Writes `{status, diagnostics, chi_file}`; the χ itself is saved
    /// separately (see [`ProcessMatrix::save_json`]) under `chi_file`.
    pub fn save_json(&self, path: &Path, chi_file: &str) -> Result<()> {
        let doc = SolverResultJson {
            status: self.status,
            diagnostics: &self.diagnostics,
            chi_file,
        };
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

fn check_inputs(
    phi: &SensingMatrix,
    p_exp: &Array1<f64>,
    basis: &Arc<OperatorBasis>,
) -> Result<()> {
    if phi.basis_fingerprint() != basis.fingerprint() {
        return Err(TomocsError::BasisMismatch(format!(
            "sensing matrix was assembled in basis '{}', which is not the basis passed in",
            phi.basis_label()
        )));
    }
    if phi.num_rows() != p_exp.len() {
        return Err(TomocsError::DimensionMismatch(format!(
            "sensing matrix has {} rows, probability vector {}",
            phi.num_rows(),
            p_exp.len()
        )));
    }
    Ok(())
}

fn run_admm(
    phi: &SensingMatrix,
    p_exp: &Array1<f64>,
    basis: &Arc<OperatorBasis>,
    cfg: &EstimatorConfig,
    data: admm::DataTerm,
    use_l1: bool,
) -> Result<SolverResult> {
    cfg.validate()?;
    check_inputs(phi, p_exp, basis)?;
    let tp = TpConstraint::new(basis)?;
    let side = basis.len();
    let knobs = admm::Knobs {
        max_iterations: cfg.max_iterations,
        primal_tolerance: cfg.primal_tolerance,
        dual_tolerance: cfg.dual_tolerance,
        rho: cfg.rho,
        adapt_rho: cfg.adapt_rho,
        over_relaxation: cfg.over_relaxation,
        check_every: if side <= 16 { 1 } else { 5 },
        epsilon: cfg.epsilon,
    };
    let problem = admm::AdmmProblem {
        phi: phi.phi_real(),
        p: p_exp,
        tp: &tp,
        side,
        data,
        use_l1,
    };
    let out = admm::solve(&problem, &knobs)?;

    let m = p_exp.len() as f64;
    let residual = phi.phi_real().dot(&out.x) - p_exp;
    let epsilon_num = residual.dot(&residual).sqrt() / m.sqrt();
    let objective = if use_l1 {
        l1_norm_coords(&out.x.view(), side)
    } else {
        residual.dot(&residual)
    };
    let chi_mat = coords_to_herm(&out.x.view(), side);
    let chi = ProcessMatrix::new(Arc::clone(basis), chi_mat)?;

    let status = match out.status {
        admm::RawStatus::Converged => {
            let physical = check_cptp(&chi)?.passes(1e-6);
            let within_ball = !matches!(data, admm::DataTerm::Ball { .. })
                || epsilon_num <= cfg.epsilon + 1e-6;
            if physical && within_ball {
                SolverStatus::Converged
            } else {
                SolverStatus::MaxIterations
            }
        }
        admm::RawStatus::MaxIterations => SolverStatus::MaxIterations,
        admm::RawStatus::Infeasible => SolverStatus::Infeasible,
    };

    Ok(SolverResult {
        chi,
        diagnostics: Diagnostics {
            iterations: out.iterations,
            primal_residual: out.primal_residual,
            dual_residual: out.dual_residual,
            objective,
            epsilon_num,
        },
        status,
    })
}

/// Least-squares estimation: minimizes `‖Φ·coords(χ) − P^exp‖²` over the
/// CPTP set.
pub fn ls_estimate(
    phi: &SensingMatrix,
    p_exp: &Array1<f64>,
    basis: &Arc<OperatorBasis>,
    cfg: &EstimatorConfig,
) -> Result<SolverResult> {
    run_admm(phi, p_exp, basis, cfg, admm::DataTerm::LeastSquares, false)
}

/// Compressed-sensing estimation: minimizes `Σ|χ_αβ|` over the CPTP set
/// subject to `‖Φ·coords(χ) − P^exp‖₂/√m ≤ ε`.
///
/// A value of ε below the feasible minimum yields status `Infeasible`
/// rather than a silently relaxed constraint.
pub fn cs_estimate(
    phi: &SensingMatrix,
    p_exp: &Array1<f64>,
    basis: &Arc<OperatorBasis>,
    cfg: &EstimatorConfig,
) -> Result<SolverResult> {
    let m = phi.num_rows() as f64;
    let radius = cfg.epsilon * m.sqrt();
    run_admm(phi, p_exp, basis, cfg, admm::DataTerm::Ball { radius }, true)
}

/// Dispatches on `cfg.method`.
pub fn estimate(
    phi: &SensingMatrix,
    p_exp: &Array1<f64>,
    basis: &Arc<OperatorBasis>,
    cfg: &EstimatorConfig,
) -> Result<SolverResult> {
    match cfg.method {
        Method::Ls => ls_estimate(phi, p_exp, basis, cfg),
        Method::Cs => cs_estimate(phi, p_exp, basis, cfg),
    }
}

/// The optimal noise level: the RMS residual left by the least-squares
/// fit, `ε_opt = ‖P^exp − Φ·coords(χ_LS)‖₂/√M`. The natural input is the
/// full dataset.
pub fn epsilon_opt(
    phi: &SensingMatrix,
    p_exp: &Array1<f64>,
    basis: &Arc<OperatorBasis>,
) -> Result<f64> {
    let num_qubits = phi.dim().trailing_zeros() as usize;
    let cfg = EstimatorConfig::for_method(Method::Ls, num_qubits);
    let result = ls_estimate(phi, p_exp, basis, &cfg)?;
    Ok(result.diagnostics.epsilon_num)
}

/// `ε_num = ‖Φ·coords(χ) − P^exp‖₂/√m` for an arbitrary χ.
pub fn residual_noise(
    phi: &SensingMatrix,
    p_exp: &Array1<f64>,
    chi: &ProcessMatrix,
) -> Result<f64> {
    if phi.basis_fingerprint() != chi.basis().fingerprint() {
        return Err(TomocsError::BasisMismatch(
            "residual_noise: χ is expressed in a different basis than the sensing matrix".into(),
        ));
    }
    if phi.num_rows() != p_exp.len() {
        return Err(TomocsError::DimensionMismatch(format!(
            "residual_noise: {} rows vs {} probabilities",
            phi.num_rows(),
            p_exp.len()
        )));
    }
    let coords = herm_to_coords(&chi.chi().view());
    let r = phi.phi_real().dot(&coords) - p_exp;
    Ok(r.dot(&r).sqrt() / (p_exp.len() as f64).sqrt())
}

/// The three scalar costs of a candidate χ against experimental data.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostReport {
    pub c_ls: f64,
    pub c_ml: f64,
    pub c_weighted: f64,
    /// False when some predicted probability vanishes where the data
    /// does not, making the ML cost infinite.
    pub ml_finite: bool,
}

/// Evaluates `C_LS = Σ(P_j − P^exp_j)²`,
/// `C_ML = −Σ P^exp_j ln P_j`, and
/// `C_W = Σ(P_j − P^exp_j)²/(P^exp_j + a)`.
pub fn cost_evaluators(
    chi: &ProcessMatrix,
    phi: &SensingMatrix,
    p_exp: &Array1<f64>,
    a: f64,
) -> Result<CostReport> {
    if !a.is_finite() || a <= 0.0 {
        return Err(TomocsError::InvalidArgument(format!(
            "weighted-cost parameter a must be finite and > 0, got {a}"
        )));
    }
    if phi.num_rows() != p_exp.len() {
        return Err(TomocsError::DimensionMismatch(format!(
            "cost_evaluators: {} rows vs {} probabilities",
            phi.num_rows(),
            p_exp.len()
        )));
    }
    let pred = phi.predicted_probabilities(chi)?;
    let mut c_ls = 0.0;
    let mut c_ml = 0.0;
    let mut c_weighted = 0.0;
    let mut ml_finite = true;
    for (p, e) in pred.iter().zip(p_exp.iter()) {
        let diff = p - e;
        c_ls += diff * diff;
        c_weighted += diff * diff / (e + a);
        if *e > 0.0 {
            if *p > 0.0 {
                c_ml -= e * p.ln();
            } else {
                ml_finite = false;
            }
        }
    }
    if !ml_finite {
        c_ml = f64::INFINITY;
    }
    Ok(CostReport {
        c_ls,
        c_ml,
        c_weighted,
        ml_finite,
    })
}

/// A noise level given either absolutely or as a multiple of ε_opt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSpec {
    Absolute(f64),
    OptMultiple(f64),
}

impl EpsilonSpec {
    /// Whether resolving this spec requires ε_opt (and hence a full
    /// least-squares pass).
    pub fn needs_opt(&self) -> bool {
        matches!(self, EpsilonSpec::OptMultiple(_))
    }

    pub fn resolve(&self, eps_opt: Option<f64>) -> Result<f64> {
        match self {
            EpsilonSpec::Absolute(v) => Ok(*v),
            EpsilonSpec::OptMultiple(k) => {
                let base = eps_opt.ok_or_else(|| {
                    TomocsError::InvalidArgument(
                        "epsilon given relative to 'opt' but no optimal noise level is available"
                            .into(),
                    )
                })?;
                Ok(base * k)
            }
        }
    }
}

impl FromStr for EpsilonSpec {
    type Err = TomocsError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("opt") {
            return Ok(EpsilonSpec::OptMultiple(1.0));
        }
        if let Some(rest) = s
            .strip_prefix("opt*")
            .or_else(|| s.strip_prefix("OPT*"))
        {
            let k: f64 = rest.parse().map_err(|_| {
                TomocsError::InvalidArgument(format!("cannot parse '{rest}' as a multiplier"))
            })?;
            if !k.is_finite() || k <= 0.0 {
                return Err(TomocsError::InvalidArgument(format!(
                    "epsilon multiplier must be finite and > 0, got {k}"
                )));
            }
            return Ok(EpsilonSpec::OptMultiple(k));
        }
        let v: f64 = s.parse().map_err(|_| {
            TomocsError::InvalidArgument(format!(
                "cannot parse epsilon '{s}' (expected a number, 'opt', or 'opt*K')"
            ))
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(TomocsError::InvalidArgument(format!(
                "epsilon must be finite and ≥ 0, got {v}"
            )));
        }
        Ok(EpsilonSpec::Absolute(v))
    }
}

impl fmt::Display for EpsilonSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonSpec::Absolute(v) => write!(f, "{v}"),
            EpsilonSpec::OptMultiple(k) if *k == 1.0 => f.write_str("opt"),
            EpsilonSpec::OptMultiple(k) => write!(f, "opt*{k}"),
        }
    }
}

/// One estimation run inside a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub m_conf: usize,
    pub repeat: usize,
    pub seed: u64,
    pub f_vs_full: f64,
    pub f_vs_ideal: f64,
    pub eps_num: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
}

/// Mean/σ statistics over the successful repeats at one m_conf.
#[derive(Debug, Clone, Serialize)]
pub struct SweepAggregate {
    pub m_conf: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub mean_f_full: f64,
    pub std_f_full: f64,
    pub mean_f_ideal: f64,
    pub std_f_ideal: f64,
}

#[derive(Debug)]
pub struct SweepReport {
    rows: Vec<SweepRow>,
    aggregates: Vec<SweepAggregate>,
}

impl SweepReport {
    pub fn rows(&self) -> &[SweepRow] {
        &self.rows
    }

    pub fn aggregates(&self) -> &[SweepAggregate] {
        &self.aggregates
    }

    /// CSV columns: `m_conf, repeat, seed, F_vs_full, F_vs_ideal,
    /// eps_num, iterations, wall_time_s`. Failed repeats carry `nan`
    /// fidelities.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut text =
            String::from("m_conf,repeat,seed,F_vs_full,F_vs_ideal,eps_num,iterations,wall_time_s\n");
        for row in &self.rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{:.3}\n",
                row.m_conf,
                row.repeat,
                row.seed,
                csv_f64(row.f_vs_full),
                csv_f64(row.f_vs_ideal),
                csv_f64(row.eps_num),
                row.iterations,
                row.wall_time_s,
            ));
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    /// CSV columns: `m_conf, succeeded, failed, mean_F_vs_full,
    /// std_F_vs_full, mean_F_vs_ideal, std_F_vs_ideal` — one row per
    /// m_conf, statistics over the successful repeats only.
    pub fn save_aggregate_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from(
            "m_conf,succeeded,failed,mean_F_vs_full,std_F_vs_full,mean_F_vs_ideal,std_F_vs_ideal\n",
        );
        for agg in &self.aggregates {
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                agg.m_conf,
                agg.succeeded,
                agg.failed,
                csv_f64(agg.mean_f_full),
                csv_f64(agg.std_f_full),
                csv_f64(agg.mean_f_ideal),
                csv_f64(agg.std_f_ideal),
            ));
        }
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn csv_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.10e}")
    } else {
        "nan".to_string()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Repeated estimation on random configuration subsets, scored against
/// the full-data LS reconstruction and the ideal gate.
///
/// A deterministic config derives each subset seed from the master seed
/// and the (m_conf, repeat) labels; otherwise seeds come from entropy
/// and are recorded per row. Failed repeats (solver error or an
/// infeasible ε) appear as rows with `nan` fidelities and are excluded
/// from the aggregates.
pub fn sweep_reduced_data(
    dataset: &ProbabilityDataset,
    basis: &Arc<OperatorBasis>,
    m_conf_list: &[usize],
    repeats: usize,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<SweepReport> {
    cfg.validate()?;
    if repeats == 0 {
        return Err(TomocsError::InvalidArgument(
            "sweep requires at least one repeat".into(),
        ));
    }
    let design = dataset.design();
    for &m_conf in m_conf_list {
        if m_conf == 0 || m_conf > design.num_configurations() {
            return Err(TomocsError::InvalidArgument(format!(
                "m_conf must be in 1..={}, got {m_conf}",
                design.num_configurations()
            )));
        }
    }

    let gate = gate_library(Gate::parse(dataset.gate_name())?)?;
    let chi_ideal = ideal_chi(&gate, basis)?;
    let full = ConfigurationSubset::full(design);
    let phi_full = SensingMatrix::assemble(design, basis, &full)?;
    let ls_cfg = EstimatorConfig {
        method: Method::Ls,
        ..cfg.clone()
    };
    let chi_full = ls_estimate(&phi_full, dataset.probabilities(), basis, &ls_cfg)?.chi;

    struct Job {
        m_conf: usize,
        repeat: usize,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for &m_conf in m_conf_list {
        for repeat in 0..repeats {
            let job_seed = if cfg.deterministic {
                derive_seed(seed, &[m_conf as u64, repeat as u64])
            } else {
                rand::random()
            };
            jobs.push(Job {
                m_conf,
                repeat,
                seed: job_seed,
            });
        }
    }

    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|job| {
            let start = Instant::now();
            let outcome = (|| -> Result<(SolverResult, f64, f64)> {
                let subset = select_configurations(design, job.m_conf, job.seed)?;
                let rows_idx = subset.row_indices(design);
                let p_sub = dataset.gather(&rows_idx);
                let phi_sub = SensingMatrix::assemble(design, basis, &subset)?;
                let result = estimate(&phi_sub, &p_sub, basis, cfg)?;
                let f_full = process_fidelity(&result.chi, &chi_full)?;
                let f_ideal = process_fidelity(&result.chi, &chi_ideal)?;
                Ok((result, f_full, f_ideal))
            })();
            let wall_time_s = start.elapsed().as_secs_f64();
            match outcome {
                Ok((result, f_full, f_ideal)) => {
                    let solved = result.status != SolverStatus::Infeasible;
                    SweepRow {
                        m_conf: job.m_conf,
                        repeat: job.repeat,
                        seed: job.seed,
                        f_vs_full: if solved { f_full } else { f64::NAN },
                        f_vs_ideal: if solved { f_ideal } else { f64::NAN },
                        eps_num: result.diagnostics.epsilon_num,
                        iterations: result.diagnostics.iterations,
                        wall_time_s,
                    }
                }
                Err(_) => SweepRow {
                    m_conf: job.m_conf,
                    repeat: job.repeat,
                    seed: job.seed,
                    f_vs_full: f64::NAN,
                    f_vs_ideal: f64::NAN,
                    eps_num: f64::NAN,
                    iterations: 0,
                    wall_time_s,
                },
            }
        })
        .collect();

    let aggregates = m_conf_list
        .iter()
        .map(|&m_conf| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.m_conf == m_conf).collect();
            let ok: Vec<&SweepRow> = group
                .iter()
                .copied()
                .filter(|r| r.f_vs_full.is_finite())
                .collect();
            let f_full: Vec<f64> = ok.iter().map(|r| r.f_vs_full).collect();
            let f_ideal: Vec<f64> = ok.iter().map(|r| r.f_vs_ideal).collect();
            let (mean_f_full, std_f_full) = mean_std(&f_full);
            let (mean_f_ideal, std_f_ideal) = mean_std(&f_ideal);
            SweepAggregate {
                m_conf,
                succeeded: ok.len(),
                failed: group.len() - ok.len(),
                mean_f_full,
                std_f_full,
                mean_f_ideal,
                std_f_ideal,
            }
        })
        .collect();

    Ok(SweepReport { rows, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::pauli_basis;
    use crate::channel::UnitaryGate;
    use crate::design::standard_design;
    use crate::linalg::{C64, CMat};
    use crate::simulate::{add_noise, ideal_dataset};
    use ndarray::Array2;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn hadamard() -> UnitaryGate {
        let mut m: CMat = Array2::zeros((2, 2));
        m[[0, 0]] = C64::new(FRAC_1_SQRT_2, 0.0);
        m[[0, 1]] = C64::new(FRAC_1_SQRT_2, 0.0);
        m[[1, 0]] = C64::new(FRAC_1_SQRT_2, 0.0);
        m[[1, 1]] = C64::new(-FRAC_1_SQRT_2, 0.0);
        UnitaryGate::new("hadamard", m).unwrap()
    }

    struct Setup {
        basis: Arc<OperatorBasis>,
        phi: SensingMatrix,
        p_ideal: Array1<f64>,
        dataset_ideal: crate::simulate::ProbabilityDataset,
        chi_ideal: ProcessMatrix,
    }

    fn one_qubit_setup() -> Setup {
        let design = Arc::new(standard_design(1).unwrap());
        let basis = Arc::new(pauli_basis(1).unwrap());
        let gate = hadamard();
        let dataset_ideal = ideal_dataset(&gate, Arc::clone(&design)).unwrap();
        let full = ConfigurationSubset::full(&design);
        let phi = SensingMatrix::assemble(&design, &basis, &full).unwrap();
        let chi_ideal = ideal_chi(&gate, &basis).unwrap();
        Setup {
            basis,
            p_ideal: dataset_ideal.probabilities().clone(),
            phi,
            dataset_ideal,
            chi_ideal,
        }
    }

    #[test]
    fn ls_noiseless_recovers_the_ideal_chi() {
        let s = one_qubit_setup();
        let cfg = EstimatorConfig::for_method(Method::Ls, 1);
        let result = ls_estimate(&s.phi, &s.p_ideal, &s.basis, &cfg).unwrap();
        assert_eq!(result.status, SolverStatus::Converged);
        let f = process_fidelity(&result.chi, &s.chi_ideal).unwrap();
        assert!(f >= 1.0 - 1e-8, "F = {f}");
        assert!(result.diagnostics.epsilon_num < 1e-7);
        assert!(check_cptp(&result.chi).unwrap().passes(1e-6));
    }

    #[test]
    fn cs_noiseless_recovery_is_exact() {
        let s = one_qubit_setup();
        let mut cfg = EstimatorConfig::for_method(Method::Cs, 1);
        cfg.epsilon = 1e-6;
        let result = cs_estimate(&s.phi, &s.p_ideal, &s.basis, &cfg).unwrap();
        assert_eq!(result.status, SolverStatus::Converged);
        let f = process_fidelity(&result.chi, &s.chi_ideal).unwrap();
        assert!(f >= 0.999, "F = {f}");
        assert!(result.diagnostics.epsilon_num <= cfg.epsilon + 1e-6);
    }

    #[test]
    fn cs_below_the_optimum_is_infeasible() {
        let s = one_qubit_setup();
        let noisy = add_noise(&s.dataset_ideal, 0.05, 7).unwrap();
        let p = noisy.probabilities();
        let eps_opt = epsilon_opt(&s.phi, p, &s.basis).unwrap();
        assert!(eps_opt > 1e-3, "eps_opt = {eps_opt}");
        let mut cfg = EstimatorConfig::for_method(Method::Cs, 1);
        cfg.epsilon = 0.4 * eps_opt;
        let result = cs_estimate(&s.phi, p, &s.basis, &cfg).unwrap();
        assert_eq!(result.status, SolverStatus::Infeasible);
    }

    #[test]
    fn cs_objective_is_monotone_in_epsilon() {
        let s = one_qubit_setup();
        let noisy = add_noise(&s.dataset_ideal, 0.05, 11).unwrap();
        let p = noisy.probabilities();
        let eps_opt = epsilon_opt(&s.phi, p, &s.basis).unwrap();
        let mut objectives = Vec::new();
        for mult in [1.05, 1.3, 1.6] {
            let mut cfg = EstimatorConfig::for_method(Method::Cs, 1);
            cfg.epsilon = mult * eps_opt;
            let result = cs_estimate(&s.phi, p, &s.basis, &cfg).unwrap();
            assert_eq!(result.status, SolverStatus::Converged, "ε = {}", cfg.epsilon);
            assert!(result.diagnostics.epsilon_num <= cfg.epsilon + 1e-6);
            objectives.push(result.diagnostics.objective);
        }
        assert!(
            objectives[0] >= objectives[1] - 1e-7 && objectives[1] >= objectives[2] - 1e-7,
            "objectives {objectives:?}"
        );
    }

    #[test]
    fn epsilon_opt_vanishes_on_noiseless_data() {
        let s = one_qubit_setup();
        let eps = epsilon_opt(&s.phi, &s.p_ideal, &s.basis).unwrap();
        assert!(eps < 1e-9, "eps_opt = {eps}");
    }

    #[test]
    fn epsilon_opt_equals_residual_of_the_ls_solution() {
        let s = one_qubit_setup();
        let noisy = add_noise(&s.dataset_ideal, 0.04, 3).unwrap();
        let p = noisy.probabilities();
        let cfg = EstimatorConfig::for_method(Method::Ls, 1);
        let ls = ls_estimate(&s.phi, p, &s.basis, &cfg).unwrap();
        let eps_opt = epsilon_opt(&s.phi, p, &s.basis).unwrap();
        let resid = residual_noise(&s.phi, p, &ls.chi).unwrap();
        assert!((eps_opt - resid).abs() < 1e-12);
        assert!((ls.diagnostics.epsilon_num - resid).abs() < 1e-12);
    }

    #[test]
    fn residual_noise_is_zero_for_the_exact_generator() {
        let s = one_qubit_setup();
        let r = residual_noise(&s.phi, &s.p_ideal, &s.chi_ideal).unwrap();
        assert!(r < 1e-12, "residual {r}");
    }

    #[test]
    fn cost_evaluators_hand_checks() {
        let s = one_qubit_setup();
        let exact = cost_evaluators(&s.chi_ideal, &s.phi, &s.p_ideal, 0.01).unwrap();
        assert!(exact.c_ls < 1e-18);
        assert!(exact.c_weighted < 1e-16);
        assert!(exact.ml_finite);

        // One probability perturbed by δ raises C_LS by exactly δ².
        let mut p = s.p_ideal.clone();
        let delta = 1e-3;
        p[1] += delta;
        let perturbed = cost_evaluators(&s.chi_ideal, &s.phi, &p, 0.01).unwrap();
        assert!((perturbed.c_ls - delta * delta).abs() < 1e-12);

        // Large a: C_W → C_LS/a.
        let big_a = 1e6;
        let w = cost_evaluators(&s.chi_ideal, &s.phi, &p, big_a).unwrap();
        let ratio = w.c_weighted * big_a / perturbed.c_ls;
        assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");

        // A zero prediction under nonzero data makes ML infinite: the
        // ideal Hadamard sends |0⟩ to |+⟩, so the Z-basis row with
        // predicted probability zero exists in the design.
        let zero_rows: Vec<usize> = s
            .p_ideal
            .iter()
            .enumerate()
            .filter(|(_, v)| **v < 1e-15)
            .map(|(i, _)| i)
            .collect();
        assert!(!zero_rows.is_empty());
        let mut p_bad = s.p_ideal.clone();
        p_bad[zero_rows[0]] = 0.1;
        let ml = cost_evaluators(&s.chi_ideal, &s.phi, &p_bad, 0.01).unwrap();
        assert!(!ml.ml_finite);
        assert!(ml.c_ml.is_infinite());

        assert!(cost_evaluators(&s.chi_ideal, &s.phi, &p, 0.0).is_err());
    }

    #[test]
    fn epsilon_spec_parses_and_resolves() {
        assert_eq!("0.02".parse::<EpsilonSpec>().unwrap(), EpsilonSpec::Absolute(0.02));
        assert_eq!("opt".parse::<EpsilonSpec>().unwrap(), EpsilonSpec::OptMultiple(1.0));
        assert_eq!(
            "opt*1.2".parse::<EpsilonSpec>().unwrap(),
            EpsilonSpec::OptMultiple(1.2)
        );
        assert!("".parse::<EpsilonSpec>().is_err());
        assert!("-0.1".parse::<EpsilonSpec>().is_err());
        assert!("opt*0".parse::<EpsilonSpec>().is_err());
        assert!("opt*-2".parse::<EpsilonSpec>().is_err());
        assert!("foo".parse::<EpsilonSpec>().is_err());

        assert_eq!(EpsilonSpec::Absolute(0.05).resolve(None).unwrap(), 0.05);
        let rel = EpsilonSpec::OptMultiple(1.5);
        assert!(rel.needs_opt());
        assert!((rel.resolve(Some(0.01)).unwrap() - 0.015).abs() < 1e-15);
        assert!(rel.resolve(None).is_err());
        assert_eq!(format!("{}", EpsilonSpec::OptMultiple(1.0)), "opt");
        assert_eq!(format!("{}", EpsilonSpec::OptMultiple(1.2)), "opt*1.2");
    }

    #[test]
    fn config_files_round_trip_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let json_path = dir.path().join("cfg.json");
        std::fs::write(&json_path, r#"{"method": "cs", "epsilon": 0.0115}"#).unwrap();
        let cfg = EstimatorConfig::from_file(&json_path).unwrap();
        assert_eq!(cfg.method, Method::Cs);
        assert!((cfg.epsilon - 0.0115).abs() < 1e-15);
        assert_eq!(cfg.max_iterations, 50_000);
        assert!(cfg.adapt_rho);
        assert!(cfg.deterministic);

        let toml_path = dir.path().join("cfg.toml");
        std::fs::write(
            &toml_path,
            "method = \"ls\"\nmax_iterations = 1000\nrho = 0.5\n",
        )
        .unwrap();
        let cfg2 = EstimatorConfig::from_file(&toml_path).unwrap();
        assert_eq!(cfg2.method, Method::Ls);
        assert_eq!(cfg2.max_iterations, 1000);
        assert!((cfg2.rho - 0.5).abs() < 1e-15);

        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, r#"{"method": "cs", "unknown_knob": 1}"#).unwrap();
        assert!(EstimatorConfig::from_file(&bad).is_err());

        let wrong_ext = dir.path().join("cfg.yaml");
        std::fs::write(&wrong_ext, "method: cs").unwrap();
        assert!(EstimatorConfig::from_file(&wrong_ext).is_err());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = EstimatorConfig::for_method(Method::Cs, 1);
        cfg.epsilon = -0.1;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 0.01;
        cfg.primal_tolerance = 0.0;
        assert!(cfg.validate().is_err());
        cfg.primal_tolerance = 1e-7;
        cfg.over_relaxation = 2.5;
        assert!(cfg.validate().is_err());
        cfg.over_relaxation = 1.7;
        cfg.max_iterations = 0;
        assert!(cfg.validate().is_err());
        cfg.max_iterations = 10;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn method_parse_and_display() {
        assert_eq!("ls".parse::<Method>().unwrap(), Method::Ls);
        assert_eq!("CS".parse::<Method>().unwrap(), Method::Cs);
        assert!("mle".parse::<Method>().is_err());
        assert_eq!(Method::Ls.to_string(), "ls");
    }

    #[test]
    fn solver_result_json_has_the_contracted_shape() {
        let s = one_qubit_setup();
        let cfg = EstimatorConfig::for_method(Method::Ls, 1);
        let result = ls_estimate(&s.phi, &s.p_ideal, &s.basis, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("result.json");
        result.save_json(&path, "chi.json").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["status"], "converged");
        assert_eq!(doc["chi_file"], "chi.json");
        assert!(doc["diagnostics"]["iterations"].as_u64().unwrap() > 0);
        assert!(doc["diagnostics"]["epsilon_num"].as_f64().is_some());
        assert!(doc["diagnostics"]["objective"].as_f64().is_some());
    }

    #[test]
    fn sweep_full_subset_with_ls_reproduces_the_full_point() {
        // The sweep parses the dataset's gate name, so it needs a
        // library gate rather than the local Hadamard helper.
        let s = one_qubit_setup();
        let design = Arc::new(standard_design(1).unwrap());
        let id_gate = gate_library(Gate::Identity(1)).unwrap();
        let id_ideal = ideal_dataset(&id_gate, Arc::clone(&design)).unwrap();
        let id_noisy = add_noise(&id_ideal, 0.03, 5).unwrap();
        let cfg = EstimatorConfig::for_method(Method::Ls, 1);
        let report =
            sweep_reduced_data(&id_noisy, &s.basis, &[12], 1, &cfg, 123).unwrap();
        assert_eq!(report.rows().len(), 1);
        let row = &report.rows()[0];
        assert!(row.f_vs_full >= 1.0 - 1e-8, "F_vs_full = {}", row.f_vs_full);
        assert_eq!(report.aggregates()[0].succeeded, 1);
    }

    #[test]
    fn sweep_is_deterministic_and_records_failures() {
        let design = Arc::new(standard_design(1).unwrap());
        let basis = Arc::new(pauli_basis(1).unwrap());
        let gate = gate_library(Gate::Identity(1)).unwrap();
        let ideal = ideal_dataset(&gate, Arc::clone(&design)).unwrap();
        let noisy = add_noise(&ideal, 0.05, 2).unwrap();
        let full = ConfigurationSubset::full(&design);
        let phi = SensingMatrix::assemble(&design, &basis, &full).unwrap();
        let eps_opt = epsilon_opt(&phi, noisy.probabilities(), &basis).unwrap();

        let mut cfg = EstimatorConfig::for_method(Method::Cs, 1);
        cfg.epsilon = 1.2 * eps_opt;
        let report1 =
            sweep_reduced_data(&noisy, &basis, &[6, 12], 3, &cfg, 99).unwrap();
        let report2 =
            sweep_reduced_data(&noisy, &basis, &[6, 12], 3, &cfg, 99).unwrap();
        assert_eq!(report1.rows().len(), 6);
        for (a, b) in report1.rows().iter().zip(report2.rows().iter()) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.f_vs_full.to_bits(), b.f_vs_full.to_bits());
            assert_eq!(a.f_vs_ideal.to_bits(), b.f_vs_ideal.to_bits());
        }

        // An infeasible ε shows up as nan rows, not an error.
        let mut cfg_bad = cfg.clone();
        cfg_bad.epsilon = 0.3 * eps_opt;
        let report3 =
            sweep_reduced_data(&noisy, &basis, &[12], 2, &cfg_bad, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("sweep.csv");
        report3.save_csv(&csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with(
            "m_conf,repeat,seed,F_vs_full,F_vs_ideal,eps_num,iterations,wall_time_s"
        ));
        assert!(text.contains("nan"), "csv:\n{text}");
        assert_eq!(report3.aggregates()[0].failed, 2);
    }
}

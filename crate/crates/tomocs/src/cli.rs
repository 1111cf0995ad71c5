//! Command-line front end: `simulate`, `estimate`, `sweep`, and `report`
//! subcommands over the library pipeline.
//!
//! Every command writes a JSON run manifest next to its outputs recording
//! the resolved parameters, the seeds, and SHA-256 hashes of every input
//! and output file, so a run can be reproduced bit-exactly from its
//! manifest. Exit codes: 0 success, 2 validation error, 3 solver declared
//! the ε-ball infeasible, 4 iteration budget exhausted, 5 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bases::{
    natural_basis, pauli_basis, pauli_error_basis, svd_basis, BasisLabel, OperatorBasis,
};
use crate::channel::{gate_library, Gate, ProcessMatrix, UnitaryGate};
use crate::design::{
    select_configurations, ConfigurationSubset, SensingMatrix, TomographyDesign,
};
use crate::error::{Result, TomocsError};
use crate::metrics::{process_fidelity, FidelityReport};
use crate::rng::derive_seed;
use crate::simulate::{noisy_gate_dataset, ProbabilityDataset};
use crate::solve::{
    epsilon_opt, estimate, sweep_reduced_data, EpsilonSpec, EstimatorConfig, Method,
    SolverStatus,
};

/// Process-matrix tomography toolbox: simulate tomographic data, estimate
/// χ by least squares or compressed sensing, sweep reduced-data designs,
/// and score fidelities.
#[derive(Debug, Parser)]
#[command(name = "tomocs", version, arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Directory for cached sensing matrices (overrides TOMOCS_CACHE).
    #[arg(long, global = true, value_name = "DIR")]
    pub phi_cache: Option<PathBuf>,

    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a tomographic probability dataset for a library gate.
    Simulate(SimulateArgs),
    /// Estimate a process matrix from a dataset.
    Estimate(EstimateArgs),
    /// Repeat reduced-data estimates over a grid of m_conf values.
    Sweep(SweepArgs),
    /// Score a stored process matrix: fidelity, moments, bar-chart data.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Gate name: cz, toffoli, or identity1..identity3.
    #[arg(long)]
    pub gate: String,

    /// Gaussian noise level σ (0 = ideal probabilities).
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,

    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output dataset CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input dataset CSV (written by `simulate`).
    #[arg(long)]
    pub dataset: PathBuf,

    /// Operator basis: pauli, pauli-error, natural, or svd.
    #[arg(long, default_value = "pauli-error")]
    pub basis: String,

    /// Estimation method: ls or cs.
    #[arg(long, default_value = "ls")]
    pub method: String,

    /// Noise bound for cs: a number, "opt", or "opt*K".
    #[arg(long)]
    pub epsilon: Option<String>,

    /// Number of randomly selected configurations (default: all).
    #[arg(long)]
    pub mconf: Option<usize>,

    /// Seed for configuration selection.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Solver config file (.json or .toml) overriding the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// A previously estimated χ JSON to compare against.
    #[arg(long)]
    pub chi_full: Option<PathBuf>,

    /// Output directory (chi.json, result.json, report.json, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Input dataset CSV (written by `simulate`).
    #[arg(long)]
    pub dataset: PathBuf,

    /// Operator basis: pauli, pauli-error, natural, or svd.
    #[arg(long, default_value = "pauli-error")]
    pub basis: String,

    /// Estimation method: ls or cs.
    #[arg(long, default_value = "ls")]
    pub method: String,

    /// Noise bound for cs: a number, "opt", or "opt*K".
    #[arg(long)]
    pub epsilon: Option<String>,

    /// Comma-separated m_conf grid, e.g. 36,72,144.
    #[arg(long, value_delimiter = ',', required = true)]
    pub mconf: Vec<usize>,

    /// Random configuration selections per m_conf.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,

    /// Master seed; per-repeat seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Solver config file (.json or .toml) overriding the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output CSV path (aggregates go to *.aggregate.csv alongside).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// χ JSON file to score.
    #[arg(long)]
    pub chi: PathBuf,

    /// Target gate name; defaults to the basis anchor unitary.
    #[arg(long)]
    pub gate: Option<String>,

    /// A second χ JSON for a mutual-fidelity column.
    #[arg(long)]
    pub chi_full: Option<PathBuf>,

    /// Monte Carlo sample count for the moments (default: closed form).
    #[arg(long)]
    pub samples: Option<usize>,

    /// Monte Carlo seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory (report.json, chi_bars.csv, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

/// Reproducibility record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_cache: Option<FileStamp>,
}

/// A path plus the SHA-256 of the file's bytes.
#[derive(Debug, Serialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

impl FileStamp {
    fn new(path: &Path) -> Result<Self> {
        Ok(FileStamp {
            path: path.display().to_string(),
            sha256: sha256_hex(path)?,
        })
    }
}

impl RunManifest {
    fn new(command: &str, parameters: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
            phi_cache: None,
        }
    }

    fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileStamp::new(path)?);
        Ok(())
    }

    fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileStamp::new(path)?);
        Ok(())
    }

    fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Maps a library error to the CLI exit code (validation 2, I/O 5).
pub fn exit_code_for(err: &TomocsError) -> u8 {
    match err {
        TomocsError::Io(_) => 5,
        _ => 2,
    }
}

/// Parses the process arguments and runs the selected command.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let cache = cli
        .phi_cache
        .clone()
        .or_else(|| std::env::var_os("TOMOCS_CACHE").map(PathBuf::from));
    let outcome = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args, cache.as_deref()),
        Command::Sweep(args) => cmd_sweep(args, cache.as_deref()),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Fidelity report plus an optional mutual fidelity against a second χ.
#[derive(Debug, Serialize)]
struct ReportDocument {
    #[serde(flatten)]
    fidelity: FidelityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    process_fidelity_vs_full: Option<f64>,
}

fn build_basis(label: BasisLabel, gate: &UnitaryGate) -> Result<Arc<OperatorBasis>> {
    let basis = match label {
        BasisLabel::Pauli => pauli_basis(gate.num_qubits())?,
        BasisLabel::PauliError => pauli_error_basis(gate.matrix())?,
        BasisLabel::Natural => natural_basis(gate.dim())?,
        BasisLabel::Svd => svd_basis(gate.matrix())?,
    };
    Ok(Arc::new(basis))
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n).map(|b| format!("{b:02x}")).collect()
}

/// Full-data sensing matrix, served from the cache directory when one is
/// configured (key: qubit count + basis label + fingerprint prefix).
fn full_sensing_matrix(
    design: &Arc<TomographyDesign>,
    basis: &Arc<OperatorBasis>,
    cache: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<SensingMatrix> {
    let full = ConfigurationSubset::full(design);
    let Some(dir) = cache else {
        return SensingMatrix::assemble(design, basis, &full);
    };
    std::fs::create_dir_all(dir)?;
    let key = format!(
        "phi_n{}_{}_{}.bin",
        design.num_qubits(),
        basis.label(),
        hex_prefix(basis.fingerprint(), 8),
    );
    let path = dir.join(key);
    let phi = if path.is_file() {
        SensingMatrix::load_cache(&path, basis)?
    } else {
        let phi = SensingMatrix::assemble(design, basis, &full)?;
        phi.save_cache(&path)?;
        phi
    };
    manifest.phi_cache = Some(FileStamp::new(&path)?);
    Ok(phi)
}

fn load_config(
    config: Option<&Path>,
    method: Method,
    num_qubits: usize,
) -> Result<EstimatorConfig> {
    let mut cfg = match config {
        Some(path) => EstimatorConfig::from_file(path)?,
        None => EstimatorConfig::for_method(method, num_qubits),
    };
    cfg.method = method;
    Ok(cfg)
}

/// Resolves an --epsilon string into a number, assembling the full-data
/// sensing matrix for ε_opt only when the spec asks for it.
fn resolve_epsilon(
    spec_text: Option<&str>,
    method: Method,
    dataset: &ProbabilityDataset,
    basis: &Arc<OperatorBasis>,
    cache: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<(f64, Option<String>)> {
    if method == Method::Ls {
        return Ok((0.0, None));
    }
    let text = spec_text.ok_or_else(|| {
        TomocsError::InvalidArgument("--epsilon is required for method cs".into())
    })?;
    let spec: EpsilonSpec = text.parse()?;
    let opt = if spec.needs_opt() {
        let phi_full = full_sensing_matrix(dataset.design(), basis, cache, manifest)?;
        Some(epsilon_opt(&phi_full, dataset.probabilities(), basis)?)
    } else {
        None
    };
    Ok((spec.resolve(opt)?, Some(spec.to_string())))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<u8> {
    let gate = Gate::parse(&args.gate)?;
    let dataset = noisy_gate_dataset(gate, args.sigma, args.seed)?;
    dataset.save_csv(&args.out)?;

    let mut manifest = RunManifest::new(
        "simulate",
        serde_json::json!({
            "gate": args.gate,
            "sigma": args.sigma,
            "seed": args.seed,
            "out": args.out.display().to_string(),
        }),
    );
    manifest.add_output(&args.out)?;
    manifest.save(&args.out.with_extension("manifest.json"))?;
    println!(
        "wrote {} ({} probabilities)",
        args.out.display(),
        dataset.probabilities().len()
    );
    Ok(0)
}

pub fn cmd_estimate(args: &EstimateArgs, cache: Option<&Path>) -> Result<u8> {
    let dataset = ProbabilityDataset::load_csv(&args.dataset)?;
    let gate = gate_library(Gate::parse(dataset.gate_name())?)?;
    let design = Arc::clone(dataset.design());
    let label = BasisLabel::parse(&args.basis)?;
    let basis = build_basis(label, &gate)?;
    let method: Method = args.method.parse()?;
    let cfg_defaults = load_config(args.config.as_deref(), method, gate.num_qubits())?;

    std::fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new("estimate", serde_json::Value::Null);
    manifest.add_input(&args.dataset)?;
    if let Some(path) = &args.config {
        manifest.add_input(path)?;
    }
    if let Some(path) = &args.chi_full {
        manifest.add_input(path)?;
    }

    let mut cfg = cfg_defaults;
    let spec: Option<EpsilonSpec> = match method {
        Method::Cs => {
            let text = args.epsilon.as_deref().ok_or_else(|| {
                TomocsError::InvalidArgument("--epsilon is required for method cs".into())
            })?;
            Some(text.parse()?)
        }
        Method::Ls => None,
    };
    let needs_full = args.mconf.is_none() || spec.as_ref().is_some_and(|s| s.needs_opt());
    let mut phi_full = if needs_full {
        Some(full_sensing_matrix(&design, &basis, cache, &mut manifest)?)
    } else {
        None
    };
    let epsilon = match &spec {
        Some(s) => {
            let opt = match s.needs_opt() {
                true => Some(epsilon_opt(
                    phi_full.as_ref().expect("needs_opt implies needs_full"),
                    dataset.probabilities(),
                    &basis,
                )?),
                false => None,
            };
            s.resolve(opt)?
        }
        None => 0.0,
    };
    cfg.epsilon = epsilon;
    let epsilon_spec = spec.as_ref().map(|s| s.to_string());

    // A subset estimate with repeat index 0 matches the first row of a
    // sweep run from the same master seed.
    let (phi, p_exp, subset_seed) = match args.mconf {
        None => {
            let phi = phi_full.take().expect("full data implies needs_full");
            (phi, dataset.probabilities().clone(), None)
        }
        Some(m_conf) => {
            let sel_seed = derive_seed(args.seed, &[m_conf as u64, 0]);
            let subset = select_configurations(&design, m_conf, sel_seed)?;
            let rows = subset.row_indices(&design);
            let p = dataset.gather(&rows);
            let phi = SensingMatrix::assemble(&design, &basis, &subset)?;
            (phi, p, Some(sel_seed))
        }
    };
    drop(phi_full);

    manifest.parameters = serde_json::json!({
        "dataset": args.dataset.display().to_string(),
        "gate": dataset.gate_name(),
        "basis": label.as_str(),
        "method": method.to_string(),
        "epsilon": epsilon,
        "epsilon_spec": epsilon_spec,
        "mconf": args.mconf,
        "seed": args.seed,
        "subset_seed": subset_seed,
        "out": args.out.display().to_string(),
    });

    let result = estimate(&phi, &p_exp, &basis, &cfg)?;

    let chi_path = args.out.join("chi.json");
    result.chi.save_json(&chi_path)?;
    manifest.add_output(&chi_path)?;
    let result_path = args.out.join("result.json");
    result.save_json(&result_path, "chi.json")?;
    manifest.add_output(&result_path)?;

    if result.status == SolverStatus::Converged {
        let fidelity = FidelityReport::closed_form(&result.chi, &gate)?;
        let process_fidelity_vs_full = match &args.chi_full {
            Some(path) => {
                let chi_full = ProcessMatrix::load_json(path)?;
                Some(process_fidelity(&result.chi, &chi_full)?)
            }
            None => None,
        };
        let doc = ReportDocument {
            fidelity,
            process_fidelity_vs_full,
        };
        let report_path = args.out.join("report.json");
        std::fs::write(&report_path, serde_json::to_string_pretty(&doc)?)?;
        manifest.add_output(&report_path)?;
    }

    manifest.save(&args.out.join("manifest.json"))?;

    match result.status {
        SolverStatus::Converged => {
            println!(
                "converged in {} iterations, eps_num = {:.6e}",
                result.diagnostics.iterations, result.diagnostics.epsilon_num
            );
            Ok(0)
        }
        SolverStatus::Infeasible => {
            eprintln!(
                "infeasible: no CPTP matrix fits within epsilon = {:.6e} (best residual {:.6e})",
                cfg.epsilon, result.diagnostics.epsilon_num
            );
            Ok(3)
        }
        SolverStatus::MaxIterations => {
            eprintln!(
                "iteration budget ({}) exhausted before the tolerances were met",
                cfg.max_iterations
            );
            Ok(4)
        }
    }
}

pub fn cmd_sweep(args: &SweepArgs, cache: Option<&Path>) -> Result<u8> {
    let dataset = ProbabilityDataset::load_csv(&args.dataset)?;
    let gate = gate_library(Gate::parse(dataset.gate_name())?)?;
    let label = BasisLabel::parse(&args.basis)?;
    let basis = build_basis(label, &gate)?;
    let method: Method = args.method.parse()?;
    let mut cfg = load_config(args.config.as_deref(), method, gate.num_qubits())?;

    let mut manifest = RunManifest::new("sweep", serde_json::Value::Null);
    manifest.add_input(&args.dataset)?;
    if let Some(path) = &args.config {
        manifest.add_input(path)?;
    }

    let (epsilon, epsilon_spec) = resolve_epsilon(
        args.epsilon.as_deref(),
        method,
        &dataset,
        &basis,
        cache,
        &mut manifest,
    )?;
    cfg.epsilon = epsilon;

    manifest.parameters = serde_json::json!({
        "dataset": args.dataset.display().to_string(),
        "gate": dataset.gate_name(),
        "basis": label.as_str(),
        "method": method.to_string(),
        "epsilon": epsilon,
        "epsilon_spec": epsilon_spec,
        "mconf": args.mconf,
        "repeats": args.repeats,
        "seed": args.seed,
        "out": args.out.display().to_string(),
    });

    let report = sweep_reduced_data(&dataset, &basis, &args.mconf, args.repeats, &cfg, args.seed)?;
    report.save_csv(&args.out)?;
    manifest.add_output(&args.out)?;
    let agg_path = args.out.with_extension("aggregate.csv");
    report.save_aggregate_csv(&agg_path)?;
    manifest.add_output(&agg_path)?;
    manifest.save(&args.out.with_extension("manifest.json"))?;

    let failed: usize = report.aggregates().iter().map(|a| a.failed).sum();
    println!(
        "wrote {} ({} rows, {} failed)",
        args.out.display(),
        report.rows().len(),
        failed
    );
    Ok(0)
}

pub fn cmd_report(args: &ReportArgs) -> Result<u8> {
    let chi = ProcessMatrix::load_json(&args.chi)?;
    let target = match &args.gate {
        Some(name) => gate_library(Gate::parse(name)?)?,
        None => match chi.basis().anchor_unitary() {
            Some(u) => UnitaryGate::new("anchor", u.clone())?,
            None => {
                return Err(TomocsError::InvalidArgument(
                    "the stored basis carries no anchor unitary; pass --gate".into(),
                ))
            }
        },
    };

    std::fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new(
        "report",
        serde_json::json!({
            "chi": args.chi.display().to_string(),
            "gate": args.gate,
            "chi_full": args.chi_full.as_ref().map(|p| p.display().to_string()),
            "samples": args.samples,
            "seed": args.seed,
            "out": args.out.display().to_string(),
        }),
    );
    manifest.add_input(&args.chi)?;
    if let Some(path) = &args.chi_full {
        manifest.add_input(path)?;
    }

    let fidelity = match args.samples {
        Some(samples) => FidelityReport::monte_carlo(&chi, &target, samples, args.seed)?,
        None => FidelityReport::closed_form(&chi, &target)?,
    };
    let process_fidelity_vs_full = match &args.chi_full {
        Some(path) => {
            let chi_full = ProcessMatrix::load_json(path)?;
            Some(process_fidelity(&chi, &chi_full)?)
        }
        None => None,
    };
    let doc = ReportDocument {
        fidelity,
        process_fidelity_vs_full,
    };

    let report_path = args.out.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&doc)?)?;
    manifest.add_output(&report_path)?;
    let bars_path = args.out.join("chi_bars.csv");
    chi.save_bar_csv(&bars_path)?;
    manifest.add_output(&bars_path)?;
    manifest.save(&args.out.join("manifest.json"))?;

    println!(
        "process fidelity {:.6}, mean state fidelity {:.6}",
        doc.fidelity.process_fidelity, doc.fidelity.avg_state_fidelity
    );
    Ok(0)
}

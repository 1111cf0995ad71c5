//! Quantum process tomography of few-qubit gates, with compressed sensing.
//!
//! `tomocs` reconstructs the process matrix χ of a 1–3 qubit gate from the
//! outcome probabilities of a standard preparation/measurement tomography
//! design. Two estimators are provided — constrained least squares and
//! compressed-sensing ℓ1 minimization over the CPTP set — together with
//! process-fidelity and state-fidelity-moment metrics for scoring the
//! reconstruction.
//!
//! The primary interface is the library plus the runnable programs under
//! `examples/`:
//!
//! - `noiseless_recovery` — exact CS recovery from ideal data
//! - `simulate_noise` — dataset generation, truncated-Gaussian noise, CSV
//! - `reduced_data_sweep` — fidelity vs. number of measured configurations
//! - `epsilon_tradeoff` — the ε trade-off curve and infeasibility detection
//! - `basis_toolbox` — operator bases, transforms, ideal-χ structure
//! - `fidelity_moments` — state-fidelity moments, three independent routes
//!
//! A thin batch CLI (`tomocs`) wraps the same pipeline; see the README for
//! subcommands, flags, file formats, and exit codes.
//!
//! # Pipeline sketch
//!
//! ```no_run
//! use std::sync::Arc;
//! use tomocs::prelude::*;
//!
//! let gate = gate_library(Gate::Cz)?;
//! let design = Arc::new(standard_design(2)?);
//! let dataset = noisy_gate_dataset(Gate::Cz, 0.02, 7)?;
//! let basis = Arc::new(pauli_error_basis(gate.matrix())?);
//! let full = ConfigurationSubset::full(&design);
//! let phi = SensingMatrix::assemble(&design, &basis, &full)?;
//! let mut cfg = EstimatorConfig::for_method(Method::Cs, 2);
//! cfg.epsilon = 0.02;
//! let result = cs_estimate(&phi, dataset.probabilities(), &basis, &cfg)?;
//! let ideal = ideal_chi(&gate, &basis)?;
//! let f = process_fidelity(&result.chi, &ideal)?;
//! println!("fidelity vs ideal: {f:.4}");
//! # Ok::<(), tomocs::TomocsError>(())
//! ```

// Pulls in the BLAS/LAPACK backend for ndarray's matrix products.
extern crate blas_src;

pub mod bases;
pub mod channel;
pub mod cli;
pub mod design;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod simulate;
pub mod solve;

pub use error::{Result, TomocsError};

/// One-stop imports for the common pipeline.
pub mod prelude {
    pub use crate::bases::{
        basis_transform, natural_basis, pauli_basis, pauli_error_basis, svd_basis, BasisLabel,
        BasisTransform, OperatorBasis,
    };
    pub use crate::channel::{
        apply_map, check_cptp, gate_library, ideal_chi, kraus_from_chi, DensityMatrix, Gate,
        KrausSet, PhysicalityReport, ProcessMatrix, UnitaryGate,
    };
    pub use crate::design::{
        select_configurations, standard_design, ConfigurationSubset, SensingMatrix,
        TomographyDesign,
    };
    pub use crate::error::{Result, TomocsError};
    pub use crate::metrics::{
        avg_state_fidelity, avg_state_fidelity_sq, mc_state_fidelity_moments, process_fidelity,
        state_fidelity_std, FidelityReport, MomentMethod,
    };
    pub use crate::simulate::{
        add_noise, ideal_dataset, noisy_gate_dataset, ProbabilityDataset, Provenance,
    };
    pub use crate::solve::{
        cost_evaluators, cs_estimate, epsilon_opt, estimate, ls_estimate, residual_noise,
        sweep_reduced_data, Diagnostics, EpsilonSpec, EstimatorConfig, Method, SolverResult,
        SolverStatus, SweepReport,
    };
}

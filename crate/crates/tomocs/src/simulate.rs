//! Simulated tomography datasets: ideal outcome probabilities and a
//! truncated-Gaussian noise model.
//!
//! Noise is applied per probability: `p ← p + η` with `η ~ N(0, σ²)`
//! resampled until the result stays in `[0, 1]`, then each
//! configuration's outcome block is renormalized to sum to one. Every
//! probability index uses its own counter-mode RNG stream, so the noise
//! at index `j` depends only on `(seed, j)` — not on traversal order.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::channel::{gate_library, Gate, UnitaryGate};
use crate::design::{standard_design, TomographyDesign};
use crate::error::{Result, TomocsError};
use crate::rng::standard_normal;

/// Maximum supported noise level.
pub const MAX_SIGMA: f64 = 0.25;

/// How a dataset was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Ideal,
    Noisy { sigma: f64, seed: u64 },
}

/// A full vector of outcome probabilities over a tomography design.
#[derive(Debug, Clone)]
pub struct ProbabilityDataset {
    design: Arc<TomographyDesign>,
    gate_name: String,
    probabilities: Array1<f64>,
    provenance: Provenance,
}

impl ProbabilityDataset {
    pub fn design(&self) -> &Arc<TomographyDesign> {
        &self.design
    }

    pub fn gate_name(&self) -> &str {
        &self.gate_name
    }

    /// Flat probability vector, indexed by
    /// [`TomographyDesign::row_index`](crate::design::TomographyDesign::row_index).
    pub fn probabilities(&self) -> &Array1<f64> {
        &self.probabilities
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// The probabilities of one configuration's outcome block.
    pub fn block(&self, config: usize) -> &[f64] {
        let d = self.design.dim();
        let start = config * d;
        &self.probabilities.as_slice().unwrap()[start..start + d]
    }

    /// Restricts the flat vector to the rows of a configuration subset
    /// (as produced by `ConfigurationSubset::row_indices`).
    pub fn gather(&self, rows: &[usize]) -> Array1<f64> {
        Array1::from(rows.iter().map(|&r| self.probabilities[r]).collect::<Vec<_>>())
    }

    /// Writes the dataset as CSV: a two-line provenance header
    /// (`gate,n_qubits,sigma,seed`), a column header, then one row per
    /// probability with full `f64` precision.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let (sigma, seed) = match self.provenance {
            Provenance::Ideal => (0.0, 0),
            Provenance::Noisy { sigma, seed } => (sigma, seed),
        };
        let mut out = String::new();
        out.push_str("gate,n_qubits,sigma,seed\n");
        out.push_str(&format!(
            "{},{},{:.16e},{}\n",
            self.gate_name,
            self.design.num_qubits(),
            sigma,
            seed
        ));
        out.push_str("config_id,outcome_id,probability\n");
        let d = self.design.dim();
        for c in 0..self.design.num_configurations() {
            for i in 0..d {
                out.push_str(&format!(
                    "{c},{i},{:.16e}\n",
                    self.probabilities[self.design.row_index(c, i)]
                ));
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a dataset written by [`ProbabilityDataset::save_csv`].
    pub fn load_csv(path: &Path) -> Result<ProbabilityDataset> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let bad = |msg: &str| TomocsError::Format(format!("{}: {msg}", path.display()));
        if lines.next() != Some("gate,n_qubits,sigma,seed") {
            return Err(bad("missing dataset header"));
        }
        let meta = lines.next().ok_or_else(|| bad("missing metadata line"))?;
        let fields: Vec<&str> = meta.split(',').collect();
        if fields.len() != 4 {
            return Err(bad("metadata line must have 4 fields"));
        }
        let gate_name = fields[0].to_string();
        let n_qubits: usize = fields[1]
            .parse()
            .map_err(|_| bad("n_qubits is not an integer"))?;
        let sigma: f64 = fields[2].parse().map_err(|_| bad("sigma is not a number"))?;
        let seed: u64 = fields[3].parse().map_err(|_| bad("seed is not an integer"))?;
        if lines.next() != Some("config_id,outcome_id,probability") {
            return Err(bad("missing column header"));
        }
        let design = Arc::new(standard_design(n_qubits)?);
        let total = design.num_probabilities();
        let mut probabilities = Array1::zeros(total);
        let mut seen = 0usize;
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(bad("data rows must have 3 fields"));
            }
            let c: usize = cols[0].parse().map_err(|_| bad("bad config_id"))?;
            let i: usize = cols[1].parse().map_err(|_| bad("bad outcome_id"))?;
            let p: f64 = cols[2].parse().map_err(|_| bad("bad probability"))?;
            if c >= design.num_configurations() || i >= design.dim() {
                return Err(bad("row index out of range"));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(bad("probability outside [0, 1]"));
            }
            probabilities[design.row_index(c, i)] = p;
            seen += 1;
        }
        if seen != total {
            return Err(bad(&format!("expected {total} rows, found {seen}")));
        }
        let provenance = if sigma == 0.0 {
            Provenance::Ideal
        } else {
            Provenance::Noisy { sigma, seed }
        };
        Ok(ProbabilityDataset {
            design,
            gate_name,
            probabilities,
            provenance,
        })
    }
}

/// Exact outcome probabilities of a unitary gate over a design:
/// `P_{k,r,i} = |(R_r · U · ψ_k)_i|²`.
pub fn ideal_dataset(
    gate: &UnitaryGate,
    design: Arc<TomographyDesign>,
) -> Result<ProbabilityDataset> {
    if gate.dim() != design.dim() {
        return Err(TomocsError::DimensionMismatch(format!(
            "ideal_dataset: gate dim {} vs design dim {}",
            gate.dim(),
            design.dim()
        )));
    }
    let d = design.dim();
    let mut probabilities = Array1::zeros(design.num_probabilities());
    for k in 0..design.num_inputs() {
        let evolved = gate.matrix().dot(design.input(k));
        for r in 0..design.num_rotations() {
            let out = design.rotation(r).dot(&evolved);
            let config = design.config_id(k, r);
            for i in 0..d {
                probabilities[design.row_index(config, i)] = out[i].norm_sqr();
            }
        }
    }
    Ok(ProbabilityDataset {
        design,
        gate_name: gate.name().to_string(),
        probabilities,
        provenance: Provenance::Ideal,
    })
}

/// Adds truncated-Gaussian noise and renormalizes each configuration
/// block. `sigma = 0` returns the input unchanged; `sigma` outside
/// `[0, 0.25]` is an error.
pub fn add_noise(
    dataset: &ProbabilityDataset,
    sigma: f64,
    seed: u64,
) -> Result<ProbabilityDataset> {
    if !(0.0..=MAX_SIGMA).contains(&sigma) {
        return Err(TomocsError::InvalidArgument(format!(
            "sigma must be in [0, {MAX_SIGMA}], got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(dataset.clone());
    }
    let design = &dataset.design;
    let d = design.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut noisy = dataset.probabilities.clone();
    for j in 0..noisy.len() {
        rng.set_stream(j as u64);
        rng.set_word_pos(0);
        noisy[j] = noised_probability(&mut rng, noisy[j], sigma);
    }
    for c in 0..design.num_configurations() {
        let start = c * d;
        let total: f64 = (0..d).map(|i| noisy[start + i]).sum();
        if total < 0.1 {
            return Err(TomocsError::Nonphysical(format!(
                "noisy outcome block {c} sums to {total:.3e}; noise model broke down"
            )));
        }
        for i in 0..d {
            noisy[start + i] /= total;
        }
    }
    Ok(ProbabilityDataset {
        design: Arc::clone(design),
        gate_name: dataset.gate_name.clone(),
        probabilities: noisy,
        provenance: Provenance::Noisy { sigma, seed },
    })
}

/// One draw of `p + N(0, σ²)`, resampled until it lands in `[0, 1]`.
fn noised_probability<R: rand::RngCore>(rng: &mut R, p: f64, sigma: f64) -> f64 {
    loop {
        let candidate = p + sigma * standard_normal(rng);
        if (0.0..=1.0).contains(&candidate) {
            return candidate;
        }
    }
}

/// Convenience pipeline: library gate → standard design → ideal
/// probabilities → noise.
pub fn noisy_gate_dataset(gate: Gate, sigma: f64, seed: u64) -> Result<ProbabilityDataset> {
    let u = gate_library(gate)?;
    let design = Arc::new(standard_design(u.num_qubits())?);
    let ideal = ideal_dataset(&u, design)?;
    add_noise(&ideal, sigma, seed)
}

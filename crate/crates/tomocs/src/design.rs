//! The tomographic experiment design: input states, measurement-rotation
//! settings, and the sensing map from process matrices to outcome
//! probabilities.
//!
//! Each qubit is prepared in one of the four states
//! `{|0⟩, |1⟩, |+⟩, |+i⟩}` and read out in one of three settings: the
//! computational basis directly, or after `R_y^{−π/2}` (X readout) or
//! `R_x^{π/2}` (Y readout). A *configuration* is one (input, rotation)
//! pair; the probability of outcome `i` is
//!
//! ```text
//! P = Tr[ Π ℰ(ρ) ],   Π = R† |i⟩⟨i| R
//!   = Σ_αβ Φ_{row,(α,β)} χ_αβ,   Φ_{row,(α,β)} = b_α b_β*,
//! ```
//!
//! with `b_α = (R · E_α · |ψ⟩)_i` — every sensing row is a rank-1 form in
//! the basis expansion, which is what makes assembly cheap.

use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::bases::OperatorBasis;
use crate::error::{Result, TomocsError};
use crate::linalg::{kron, pair_offset, CMat, CVec, C64, ONE, ZERO};
use crate::rng::sample_subset;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Sensing rows per byte-identical cache check.
const CACHE_MAGIC: &[u8; 8] = b"TOMOCSPH";
const CACHE_VERSION: u32 = 1;

/// Single-qubit input kets: `|0⟩, |1⟩, |+⟩, |+i⟩`.
fn single_qubit_inputs() -> Vec<CVec> {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let ih = C64::new(0.0, FRAC_1_SQRT_2);
    vec![
        Array1::from(vec![ONE, ZERO]),
        Array1::from(vec![ZERO, ONE]),
        Array1::from(vec![h, h]),
        Array1::from(vec![h, ih]),
    ]
}

/// Single-qubit readout rotations: identity (Z), `R_y^{−π/2}` (X),
/// `R_x^{π/2}` (Y).
fn single_qubit_rotations() -> Vec<CMat> {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let mih = C64::new(0.0, -FRAC_1_SQRT_2);
    let identity = Array2::from_shape_vec((2, 2), vec![ONE, ZERO, ZERO, ONE]).unwrap();
    let ry = Array2::from_shape_vec((2, 2), vec![h, h, -h, h]).unwrap();
    let rx = Array2::from_shape_vec((2, 2), vec![h, mih, mih, h]).unwrap();
    vec![identity, ry, rx]
}

/// The full experiment design for `n` qubits: all `4^n` product inputs ×
/// `3^n` rotation settings, each with `2^n` outcomes.
#[derive(Debug)]
pub struct TomographyDesign {
    num_qubits: usize,
    dim: usize,
    inputs: Vec<CVec>,
    rotations: Vec<CMat>,
}

impl TomographyDesign {
    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of input states, `4^n`.
    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    /// Number of rotation settings, `3^n`.
    pub fn num_rotations(&self) -> usize {
        self.rotations.len()
    }

    /// Number of configurations, `12^n`.
    pub fn num_configurations(&self) -> usize {
        self.inputs.len() * self.rotations.len()
    }

    /// Total number of probabilities, `24^n`.
    pub fn num_probabilities(&self) -> usize {
        self.num_configurations() * self.dim
    }

    pub fn input(&self, k: usize) -> &CVec {
        &self.inputs[k]
    }

    pub fn rotation(&self, r: usize) -> &CMat {
        &self.rotations[r]
    }

    /// Configuration id of the (input, rotation) pair: `k·3^n + r`.
    pub fn config_id(&self, input: usize, rotation: usize) -> usize {
        input * self.rotations.len() + rotation
    }

    /// Inverse of [`TomographyDesign::config_id`].
    pub fn split_config(&self, config: usize) -> (usize, usize) {
        (
            config / self.rotations.len(),
            config % self.rotations.len(),
        )
    }

    /// Flat probability index of `(config, outcome)`: `config·2^n + i`.
    pub fn row_index(&self, config: usize, outcome: usize) -> usize {
        config * self.dim + outcome
    }
}

/// Builds the standard `n`-qubit design (`n` in 1..=3).
pub fn standard_design(num_qubits: usize) -> Result<TomographyDesign> {
    if !(1..=3).contains(&num_qubits) {
        return Err(TomocsError::UnsupportedDimension(format!(
            "design supports 1..=3 qubits, got {num_qubits}"
        )));
    }
    let dim = 1 << num_qubits;
    let singles_in = single_qubit_inputs();
    let singles_rot = single_qubit_rotations();

    // Tensor products with the first factor most significant, matching
    // the bit order of computational-basis outcomes.
    let mut inputs = Vec::with_capacity(4usize.pow(num_qubits as u32));
    for code in 0..4usize.pow(num_qubits as u32) {
        let mut digits = Vec::with_capacity(num_qubits);
        let mut c = code;
        for _ in 0..num_qubits {
            digits.push(c % 4);
            c /= 4;
        }
        digits.reverse();
        let mut ket = singles_in[digits[0]].clone();
        for &d in &digits[1..] {
            let mut next = Array1::zeros(ket.len() * 2);
            for (i, a) in ket.iter().enumerate() {
                for (j, b) in singles_in[d].iter().enumerate() {
                    next[i * 2 + j] = a * b;
                }
            }
            ket = next;
        }
        inputs.push(ket);
    }

    let mut rotations = Vec::with_capacity(3usize.pow(num_qubits as u32));
    for code in 0..3usize.pow(num_qubits as u32) {
        let mut digits = Vec::with_capacity(num_qubits);
        let mut c = code;
        for _ in 0..num_qubits {
            digits.push(c % 3);
            c /= 3;
        }
        digits.reverse();
        let mut rot = singles_rot[digits[0]].clone();
        for &d in &digits[1..] {
            rot = kron(&rot.view(), &singles_rot[d].view());
        }
        rotations.push(rot);
    }

    Ok(TomographyDesign {
        num_qubits,
        dim,
        inputs,
        rotations,
    })
}

/// A subset of configuration ids (sorted, unique) drawn from a design.
#[derive(Debug, Clone)]
pub struct ConfigurationSubset {
    configs: Vec<usize>,
    total: usize,
}

impl ConfigurationSubset {
    /// All configurations, in order.
    pub fn full(design: &TomographyDesign) -> Self {
        ConfigurationSubset {
            configs: (0..design.num_configurations()).collect(),
            total: design.num_configurations(),
        }
    }

    pub fn configs(&self) -> &[usize] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.configs.len() == self.total
    }

    /// Flat probability indices covered by this subset, in row order.
    pub fn row_indices(&self, design: &TomographyDesign) -> Vec<usize> {
        let d = design.dim();
        let mut rows = Vec::with_capacity(self.configs.len() * d);
        for &c in &self.configs {
            for i in 0..d {
                rows.push(design.row_index(c, i));
            }
        }
        rows
    }
}

/// Draws `m_conf` distinct configurations uniformly at random.
pub fn select_configurations(
    design: &TomographyDesign,
    m_conf: usize,
    seed: u64,
) -> Result<ConfigurationSubset> {
    let total = design.num_configurations();
    if m_conf == 0 || m_conf > total {
        return Err(TomocsError::InvalidArgument(format!(
            "m_conf must be in 1..={total}, got {m_conf}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let configs = sample_subset(&mut rng, total, m_conf);
    Ok(ConfigurationSubset {
        configs,
        total,
    })
}

/// Is the linear system underdetermined for trace-preserving χ? Each
/// configuration yields `2^n − 1` independent rows (outcomes sum to one),
/// and trace preservation already fixes `d²` of the `d⁴` real degrees of
/// freedom.
pub fn is_underdetermined(design: &TomographyDesign, m_conf: usize) -> bool {
    let d = design.dim();
    let independent_rows = (d - 1) * m_conf;
    let free_parameters = d * d * d * d - d * d;
    independent_rows < free_parameters
}

/// The sensing map for one (design, basis, subset) triple, stored in the
/// real Hermitian coordinates of χ so that
/// `P = phi_real · coords(χ)` exactly.
///
/// Row `r` corresponds to `subset.row_indices(design)[r]`.
#[derive(Debug)]
pub struct SensingMatrix {
    basis_fingerprint: [u8; 32],
    basis_label: String,
    dim: usize,
    rows: Vec<usize>,
    phi_real: Array2<f64>,
}

impl SensingMatrix {
    /// Assembles the sensing matrix for the given subset.
    pub fn assemble(
        design: &TomographyDesign,
        basis: &Arc<OperatorBasis>,
        subset: &ConfigurationSubset,
    ) -> Result<Self> {
        if basis.dim() != design.dim() {
            return Err(TomocsError::DimensionMismatch(format!(
                "sensing assembly: design dim {} vs basis dim {}",
                design.dim(),
                basis.dim()
            )));
        }
        let d = design.dim();
        let n = basis.len();
        let ncoords = n * n;
        let rows = subset.row_indices(design);
        let m = rows.len();

        // Per configuration: W = R · [E_α ψ columns]; outcome i's sensing
        // row is the rank-1 form of b = W[i, ·].
        let blocks: Vec<Vec<f64>> = subset
            .configs()
            .par_iter()
            .map(|&config| {
                let (k, r) = design.split_config(config);
                let psi = design.input(k);
                let rot = design.rotation(r);
                let mut w = Array2::zeros((d, n));
                for (alpha, e) in basis.elements().iter().enumerate() {
                    let col = rot.dot(&e.dot(psi));
                    w.column_mut(alpha).assign(&col);
                }
                let mut block = vec![0.0; d * ncoords];
                for i in 0..d {
                    let b = w.row(i);
                    let row = &mut block[i * ncoords..(i + 1) * ncoords];
                    fill_real_row(row, &b.to_vec(), n);
                }
                block
            })
            .collect();

        let mut phi_real = Array2::zeros((m, ncoords));
        for (c, block) in blocks.iter().enumerate() {
            for i in 0..d {
                let target = c * d + i;
                phi_real
                    .row_mut(target)
                    .assign(&Array1::from(block[i * ncoords..(i + 1) * ncoords].to_vec()));
            }
        }

        Ok(SensingMatrix {
            basis_fingerprint: *basis.fingerprint(),
            basis_label: basis.label().as_str().to_string(),
            dim: d,
            rows,
            phi_real,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.phi_real.nrows()
    }

    pub fn num_coords(&self) -> usize {
        self.phi_real.ncols()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis_label(&self) -> &str {
        &self.basis_label
    }

    pub fn basis_fingerprint(&self) -> &[u8; 32] {
        &self.basis_fingerprint
    }

    /// Flat probability indices (into the design's full vector) that the
    /// rows of this matrix measure, in row order.
    pub fn probability_indices(&self) -> &[usize] {
        &self.rows
    }

    /// The real sensing matrix acting on Hermitian coordinates of χ.
    pub fn phi_real(&self) -> &Array2<f64> {
        &self.phi_real
    }

    /// The complex sensing tensor entry `Φ_{row,(α,β)}`, reconstructed
    /// from the real storage.
    pub fn complex_entry(&self, row: usize, alpha: usize, beta: usize) -> C64 {
        let n = (self.num_coords() as f64).sqrt() as usize;
        let s = std::f64::consts::SQRT_2;
        if alpha == beta {
            C64::new(self.phi_real[[row, alpha]], 0.0)
        } else if alpha < beta {
            let k = pair_offset(n, alpha, beta);
            C64::new(
                self.phi_real[[row, k]] / s,
                -self.phi_real[[row, k + 1]] / s,
            )
        } else {
            self.complex_entry(row, beta, alpha).conj()
        }
    }

    /// Predicted probabilities `P = Φ·coords(χ)` for a process matrix in
    /// the same basis. Values are clamped to `[0, 1]`; the imaginary dust
    /// of `Σ Φ χ` is already exactly zero by construction of the real
    /// coordinates.
    pub fn predicted_probabilities(
        &self,
        chi: &crate::channel::ProcessMatrix,
    ) -> Result<Array1<f64>> {
        if chi.basis().fingerprint() != &self.basis_fingerprint {
            return Err(TomocsError::BasisMismatch(
                "sensing matrix and chi use different bases".into(),
            ));
        }
        let coords = crate::linalg::herm_to_coords(&chi.chi().view());
        let mut p = self.phi_real.dot(&coords);
        p.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Ok(p)
    }

    /// Writes the matrix to a binary cache file.
    ///
    /// Layout: magic, version, `n_qubits`, basis label (length-prefixed
    /// UTF-8), basis fingerprint, row count, coordinate count, row
    /// indices, then the matrix entries as little-endian `f64`.
    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        let n_qubits = self.dim.trailing_zeros() as u32;
        w.write_all(&n_qubits.to_le_bytes())?;
        let label = self.basis_label.as_bytes();
        w.write_all(&(label.len() as u32).to_le_bytes())?;
        w.write_all(label)?;
        w.write_all(&self.basis_fingerprint)?;
        w.write_all(&(self.phi_real.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.phi_real.ncols() as u64).to_le_bytes())?;
        for &r in &self.rows {
            w.write_all(&(r as u64).to_le_bytes())?;
        }
        for v in self.phi_real.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a matrix written by [`SensingMatrix::save_cache`], verifying
    /// magic, version, and the expected basis fingerprint.
    pub fn load_cache(path: &Path, basis: &OperatorBasis) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut r = std::io::BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(TomocsError::Format(format!(
                "{}: not a sensing cache file",
                path.display()
            )));
        }
        let version = read_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(TomocsError::Format(format!(
                "{}: cache version {version}, expected {CACHE_VERSION}",
                path.display()
            )));
        }
        let n_qubits = read_u32(&mut r)? as usize;
        let label_len = read_u32(&mut r)? as usize;
        if label_len > 64 {
            return Err(TomocsError::Format(format!(
                "{}: basis label length {label_len} out of range",
                path.display()
            )));
        }
        let mut label_bytes = vec![0u8; label_len];
        r.read_exact(&mut label_bytes)?;
        let label = String::from_utf8(label_bytes)
            .map_err(|_| TomocsError::Format("cache basis label is not UTF-8".into()))?;
        let mut fingerprint = [0u8; 32];
        r.read_exact(&mut fingerprint)?;
        if &fingerprint != basis.fingerprint() {
            return Err(TomocsError::BasisMismatch(format!(
                "{}: cached sensing matrix was built for a different basis",
                path.display()
            )));
        }
        let m = read_u64(&mut r)? as usize;
        let ncoords = read_u64(&mut r)? as usize;
        let n = basis.len();
        if ncoords != n * n {
            return Err(TomocsError::Format(format!(
                "{}: cache has {ncoords} coordinates, expected {}",
                path.display(),
                n * n
            )));
        }
        let mut rows = Vec::with_capacity(m);
        for _ in 0..m {
            rows.push(read_u64(&mut r)? as usize);
        }
        let mut data = vec![0.0f64; m * ncoords];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        // Reject trailing garbage.
        let mut probe = [0u8; 1];
        match r.read(&mut probe)? {
            0 => {}
            _ => {
                return Err(TomocsError::Format(format!(
                    "{}: trailing bytes after cache payload",
                    path.display()
                )))
            }
        }
        let phi_real = Array2::from_shape_vec((m, ncoords), data)
            .map_err(|e| TomocsError::Format(format!("cache shape: {e}")))?;
        Ok(SensingMatrix {
            basis_fingerprint: fingerprint,
            basis_label: label,
            dim: 1 << n_qubits,
            rows,
            phi_real,
        })
    }

    /// A stable file name component for this matrix's provenance:
    /// qubit count, basis, and the subset of configurations.
    pub fn cache_key(
        design: &TomographyDesign,
        basis: &OperatorBasis,
        subset: &ConfigurationSubset,
    ) -> String {
        let mut hasher = Sha256::new();
        hasher.update((design.num_qubits() as u64).to_le_bytes());
        hasher.update(basis.fingerprint());
        for &c in subset.configs() {
            hasher.update((c as u64).to_le_bytes());
        }
        let digest = hasher.finalize();
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        format!(
            "phi_n{}_{}_m{}_{hex}.bin",
            design.num_qubits(),
            basis.label().as_str(),
            subset.len()
        )
    }
}

/// Writes one sensing row in real Hermitian coordinates from the rank-1
/// complex form `M_{αβ} = b_α b_β*`: diagonal `|b_α|²`, then per pair
/// `(√2·Re M_{ij}, −√2·Im M_{ij})`.
///
/// The sign flip on the imaginary part makes the real dot product equal
/// `Σ_αβ M_αβ χ_αβ` for Hermitian χ.
fn fill_real_row(row: &mut [f64], b: &[C64], n: usize) {
    let s = std::f64::consts::SQRT_2;
    for alpha in 0..n {
        row[alpha] = b[alpha].norm_sqr();
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let m = b[i] * b[j].conj();
            row[k] = s * m.re;
            row[k + 1] = -s * m.im;
            k += 2;
        }
    }
}

fn read_u32<R: IoRead>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: IoRead>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

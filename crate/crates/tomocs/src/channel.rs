//! Quantum states, gates, process matrices, and Kraus decompositions.
//!
//! A process matrix χ in an operator basis `{E_α}` represents the
//! completely positive map
//!
//! ```text
//! ℰ(ρ) = Σ_αβ χ_αβ · E_α ρ E_β†
//! ```
//!
//! Physicality means χ is Hermitian, positive semidefinite, and satisfies
//! the trace-preservation identity `Σ_αβ χ_αβ E_β† E_α = I`. With basis
//! normalization `Q`, trace preservation fixes `Tr χ = d/Q` (so `Tr χ = 1`
//! in the Pauli and Pauli-error bases and `Tr χ = d` in the natural and
//! SVD bases).

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Cholesky, UPLO};
use serde::{Deserialize, Serialize};

use crate::bases::{
    basis_transform, natural_basis, pauli_basis, pauli_error_basis, svd_basis, BasisLabel,
    OperatorBasis,
};
use crate::error::{Result, TomocsError};
use crate::linalg::{
    self, coords_to_herm, dagger, eigh, eye, frob_norm, herm_to_coords, hermitian_part,
    hermiticity_residual, is_unitary, pair_offset, trace, CMat, CVec, C64, ONE, ZERO,
};

/// A density matrix: Hermitian, unit trace, PSD (all within 1e-10).
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    dim: usize,
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        Self::with_tolerance(mat, 1e-10)
    }

    pub(crate) fn with_tolerance(mat: CMat, tol: f64) -> Result<Self> {
        let dim = mat.nrows();
        if mat.ncols() != dim {
            return Err(TomocsError::DimensionMismatch(
                "density matrix must be square".into(),
            ));
        }
        if hermiticity_residual(&mat.view()) > tol {
            return Err(TomocsError::Nonphysical(
                "density matrix is not Hermitian".into(),
            ));
        }
        let tr = trace(&mat.view());
        if (tr - ONE).norm() > tol {
            return Err(TomocsError::Nonphysical(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        let min_eig = linalg::min_eigenvalue(&hermitian_part(&mat.view()).view())?;
        if min_eig < -tol {
            return Err(TomocsError::Nonphysical(format!(
                "density matrix has eigenvalue {min_eig}"
            )));
        }
        Ok(DensityMatrix { dim, mat })
    }

    /// Pure state `|ψ⟩⟨ψ|` from a normalized ket.
    pub fn from_pure(psi: &CVec) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(TomocsError::Nonphysical(format!(
                "ket norm {norm} is not 1"
            )));
        }
        let d = psi.len();
        let mut mat = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                mat[[i, j]] = psi[i] * psi[j].conj();
            }
        }
        Ok(DensityMatrix { dim: d, mat })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }
}

/// A named unitary gate.
#[derive(Debug, Clone)]
pub struct UnitaryGate {
    dim: usize,
    mat: CMat,
    name: String,
}

impl UnitaryGate {
    pub fn new(name: impl Into<String>, mat: CMat) -> Result<Self> {
        let dim = mat.nrows();
        if mat.ncols() != dim {
            return Err(TomocsError::InvalidGate("gate matrix must be square".into()));
        }
        if !is_unitary(&mat.view(), 1e-10) {
            return Err(TomocsError::InvalidGate(
                "gate matrix is not unitary within 1e-10".into(),
            ));
        }
        Ok(UnitaryGate {
            dim,
            mat,
            name: name.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Gates known to the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Cz,
    Toffoli,
    /// Identity on `n` qubits.
    Identity(usize),
}

impl Gate {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cz" => Ok(Gate::Cz),
            "toffoli" => Ok(Gate::Toffoli),
            "identity1" => Ok(Gate::Identity(1)),
            "identity2" => Ok(Gate::Identity(2)),
            "identity3" => Ok(Gate::Identity(3)),
            other => Err(TomocsError::InvalidGate(format!(
                "unknown gate '{other}' (expected cz, toffoli, or identity1..identity3)"
            ))),
        }
    }
}

/// Returns the standard matrix for a named gate.
pub fn gate_library(gate: Gate) -> Result<UnitaryGate> {
    match gate {
        Gate::Cz => {
            let mut m = eye(4);
            m[[3, 3]] = -ONE;
            UnitaryGate::new("cz", m)
        }
        Gate::Toffoli => {
            let mut m = eye(8);
            m[[6, 6]] = ZERO;
            m[[7, 7]] = ZERO;
            m[[6, 7]] = ONE;
            m[[7, 6]] = ONE;
            UnitaryGate::new("toffoli", m)
        }
        Gate::Identity(n) => {
            if !(1..=3).contains(&n) {
                return Err(TomocsError::UnsupportedDimension(format!(
                    "identity gate supports 1..=3 qubits, got {n}"
                )));
            }
            UnitaryGate::new(format!("identity{n}"), eye(1 << n))
        }
    }
}

/// A process matrix χ tagged with the operator basis it is expressed in.
#[derive(Debug, Clone)]
pub struct ProcessMatrix {
    basis: Arc<OperatorBasis>,
    chi: CMat,
}

impl ProcessMatrix {
    pub fn new(basis: Arc<OperatorBasis>, chi: CMat) -> Result<Self> {
        let n = basis.len();
        if chi.nrows() != n || chi.ncols() != n {
            return Err(TomocsError::DimensionMismatch(format!(
                "chi is {}×{} but the basis has {} elements",
                chi.nrows(),
                chi.ncols(),
                n
            )));
        }
        Ok(ProcessMatrix { basis, chi })
    }

    pub fn basis(&self) -> &Arc<OperatorBasis> {
        &self.basis
    }

    pub fn chi(&self) -> &CMat {
        &self.chi
    }

    /// Hilbert-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Re-expresses this process matrix in another basis. The represented
    /// map — and every predicted probability — is unchanged.
    pub fn change_basis(&self, to: &Arc<OperatorBasis>) -> Result<ProcessMatrix> {
        if to.fingerprint() == self.basis.fingerprint() {
            return Ok(self.clone());
        }
        let t = basis_transform(&self.basis, to)?;
        Ok(ProcessMatrix {
            basis: Arc::clone(to),
            chi: t.apply(&self.chi),
        })
    }

    /// Writes the JSON document
    /// `{basis_label, dim, normalization, anchor_unitary?, chi}` with
    /// full-precision `[re, im]` pairs, row-major.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let doc = ChiJson::from_process_matrix(self);
        let text = serde_json::to_string_pretty(&doc)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Reads a process matrix written by [`ProcessMatrix::save_json`],
    /// reconstructing its basis from the label, dimension, and anchor.
    pub fn load_json(path: &Path) -> Result<ProcessMatrix> {
        let text = std::fs::read_to_string(path)?;
        let doc: ChiJson = serde_json::from_str(&text)
            .map_err(|e| TomocsError::Format(format!("{}: {e}", path.display())))?;
        doc.into_process_matrix()
    }

    /// Writes a `(row, col, re, im)` CSV of χ entries for plotting.
    pub fn save_bar_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("row,col,re,im\n");
        let n = self.chi.nrows();
        for r in 0..n {
            for c in 0..n {
                let z = self.chi[[r, c]];
                out.push_str(&format!("{r},{c},{:.16e},{:.16e}\n", z.re, z.im));
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ChiJson {
    basis_label: String,
    dim: usize,
    normalization: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    anchor_unitary: Option<Vec<[f64; 2]>>,
    chi: Vec<[f64; 2]>,
}

impl ChiJson {
    fn from_process_matrix(pm: &ProcessMatrix) -> Self {
        ChiJson {
            basis_label: pm.basis.label().as_str().to_string(),
            dim: pm.basis.dim(),
            normalization: pm.basis.normalization(),
            anchor_unitary: pm
                .basis
                .anchor_unitary()
                .map(|u| u.iter().map(|z| [z.re, z.im]).collect()),
            chi: pm.chi.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    fn into_process_matrix(self) -> Result<ProcessMatrix> {
        let label = BasisLabel::parse(&self.basis_label)?;
        let d = self.dim;
        let anchor: Option<CMat> = match &self.anchor_unitary {
            Some(entries) => {
                if entries.len() != d * d {
                    return Err(TomocsError::Format(format!(
                        "anchor_unitary has {} entries, expected {}",
                        entries.len(),
                        d * d
                    )));
                }
                let mut m = Array2::zeros((d, d));
                for (k, [re, im]) in entries.iter().enumerate() {
                    m[[k / d, k % d]] = C64::new(*re, *im);
                }
                Some(m)
            }
            None => None,
        };
        let basis = match label {
            BasisLabel::Pauli => pauli_basis(d.trailing_zeros() as usize)?,
            BasisLabel::Natural => natural_basis(d)?,
            BasisLabel::PauliError => pauli_error_basis(anchor.as_ref().ok_or_else(|| {
                TomocsError::Format("pauli-error basis requires anchor_unitary".into())
            })?)?,
            BasisLabel::Svd => svd_basis(anchor.as_ref().ok_or_else(|| {
                TomocsError::Format("svd basis requires anchor_unitary".into())
            })?)?,
        };
        if (basis.normalization() - self.normalization).abs() > 1e-12 {
            return Err(TomocsError::Format(format!(
                "normalization {} does not match basis '{}'",
                self.normalization, self.basis_label
            )));
        }
        let n = basis.len();
        if self.chi.len() != n * n {
            return Err(TomocsError::Format(format!(
                "chi has {} entries, expected {}",
                self.chi.len(),
                n * n
            )));
        }
        let mut chi = Array2::zeros((n, n));
        for (k, [re, im]) in self.chi.iter().enumerate() {
            chi[[k / n, k % n]] = C64::new(*re, *im);
        }
        ProcessMatrix::new(Arc::new(basis), chi)
    }
}

/// Residuals of the physicality conditions on a process matrix.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhysicalityReport {
    pub min_eigenvalue: f64,
    pub tp_residual: f64,
    pub hermiticity_residual: f64,
}

impl PhysicalityReport {
    /// All three conditions within `tol`?
    pub fn passes(&self, tol: f64) -> bool {
        self.min_eigenvalue >= -tol
            && self.tp_residual <= tol
            && self.hermiticity_residual <= tol
    }
}

/// Computes exact physicality residuals: the minimum eigenvalue of the
/// Hermitian part, the Frobenius norm of `Σ χ_αβ E_β†E_α − I`, and the
/// Frobenius norm of `χ − χ†`.
pub fn check_cptp(chi: &ProcessMatrix) -> Result<PhysicalityReport> {
    let herm_res = hermiticity_residual(&chi.chi.view());
    let h = hermitian_part(&chi.chi.view());
    let min_eig = linalg::min_eigenvalue(&h.view())?;
    let tp_residual = tp_map_residual(chi);
    Ok(PhysicalityReport {
        min_eigenvalue: min_eig,
        tp_residual,
        hermiticity_residual: herm_res,
    })
}

/// `‖Σ_αβ χ_αβ E_β† E_α − I‖_F`.
fn tp_map_residual(chi: &ProcessMatrix) -> f64 {
    let basis = chi.basis();
    let d = basis.dim();
    let n = basis.len();
    // W = Σ_β E_β† M_β with M_β = Σ_α χ_αβ E_α.
    let mut w: CMat = Array2::zeros((d, d));
    for beta in 0..n {
        let mut m_beta: CMat = Array2::zeros((d, d));
        for alpha in 0..n {
            let c = chi.chi[[alpha, beta]];
            if c != ZERO {
                m_beta.scaled_add(c, basis.element(alpha));
            }
        }
        w = w + dagger(&basis.element(beta).view()).dot(&m_beta);
    }
    for i in 0..d {
        w[[i, i]] -= ONE;
    }
    frob_norm(&w.view())
}

/// Applies the map: `ℰ(ρ) = Σ_αβ χ_αβ E_α ρ E_β†`.
///
/// The input χ must be physical within 1e-6; the output is a valid
/// density matrix within 1e-8.
pub fn apply_map(chi: &ProcessMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let basis = chi.basis();
    let d = basis.dim();
    if rho.dim() != d {
        return Err(TomocsError::DimensionMismatch(format!(
            "apply_map: chi acts on dim {d}, rho has dim {}",
            rho.dim()
        )));
    }
    let report = check_cptp(chi)?;
    if !report.passes(1e-6) {
        return Err(TomocsError::Nonphysical(format!(
            "apply_map input fails physicality: min_eig {:.3e}, tp {:.3e}, herm {:.3e}",
            report.min_eigenvalue, report.tp_residual, report.hermiticity_residual
        )));
    }
    let n = basis.len();
    // Σ_β W_β E_β† with W_β = Σ_α χ_αβ (E_α ρ).
    let products: Vec<CMat> = basis
        .elements()
        .iter()
        .map(|e| e.dot(rho.matrix()))
        .collect();
    let mut out: CMat = Array2::zeros((d, d));
    for beta in 0..n {
        let mut w_beta: CMat = Array2::zeros((d, d));
        for alpha in 0..n {
            let c = chi.chi[[alpha, beta]];
            if c != ZERO {
                w_beta.scaled_add(c, &products[alpha]);
            }
        }
        out = out + w_beta.dot(&dagger(&basis.element(beta).view()));
    }
    DensityMatrix::with_tolerance(out, 1e-8)
}

/// The process matrix of an ideal unitary `U` in the given basis: the
/// rank-1 outer product `χ = c c†` of the expansion coefficients
/// `c_α = Tr(E_α† U)/Q`.
pub fn ideal_chi(u: &UnitaryGate, basis: &Arc<OperatorBasis>) -> Result<ProcessMatrix> {
    if u.dim() != basis.dim() {
        return Err(TomocsError::DimensionMismatch(format!(
            "ideal_chi: gate dim {} vs basis dim {}",
            u.dim(),
            basis.dim()
        )));
    }
    let c = basis.expand(u.matrix())?;
    let n = c.len();
    let mut chi = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            chi[[a, b]] = c[a] * c[b].conj();
        }
    }
    ProcessMatrix::new(Arc::clone(basis), chi)
}

/// Operator-sum representation `{A_n}` of an error channel, with the
/// eigenvalue weights `λ_n` retained (largest first).
#[derive(Debug, Clone)]
pub struct KrausSet {
    dim: usize,
    ops: Vec<CMat>,
    weights: Vec<f64>,
}

impl KrausSet {
    pub fn new(dim: usize, ops: Vec<CMat>, weights: Vec<f64>) -> Self {
        KrausSet { dim, ops, weights }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `‖Σ A_n† A_n − I‖_F`.
    pub fn tp_residual(&self) -> f64 {
        let mut s: CMat = Array2::zeros((self.dim, self.dim));
        for a in &self.ops {
            s = s + dagger(&a.view()).dot(a);
        }
        for i in 0..self.dim {
            s[[i, i]] -= ONE;
        }
        frob_norm(&s.view())
    }
}

/// Extracts the Kraus operators of the *error* channel `U⁻¹ ∘ ℰ` from a
/// process matrix: with `χ = V diag(λ) V†`,
/// `A_n = √λ_n · U† Σ_α E_α V_αn`.
///
/// The input must be physical within 1e-6 (eigenvalues below `−1e-6`
/// are an error). Internally the matrix is polished onto the CPTP set so
/// the returned set satisfies `Σ A_n†A_n = I` within 1e-8 even when the
/// input carries solver-level dust; weights below 1e-12 are dropped.
pub fn kraus_from_chi(chi: &ProcessMatrix, target: &UnitaryGate) -> Result<KrausSet> {
    let basis = chi.basis();
    let d = basis.dim();
    if target.dim() != d {
        return Err(TomocsError::DimensionMismatch(format!(
            "kraus_from_chi: chi dim {d} vs target dim {}",
            target.dim()
        )));
    }
    if hermiticity_residual(&chi.chi.view()) > 1e-6 {
        return Err(TomocsError::Nonphysical(
            "kraus_from_chi input is not Hermitian within 1e-6".into(),
        ));
    }
    let h = hermitian_part(&chi.chi.view());
    let min_eig = linalg::min_eigenvalue(&h.view())?;
    if min_eig < -1e-6 {
        return Err(TomocsError::Nonphysical(format!(
            "kraus_from_chi input has eigenvalue {min_eig:.3e} below -1e-6"
        )));
    }

    let tp = TpConstraint::new(basis)?;
    let polished = polish_to_cptp(&h, &tp, 1e-9, 200)?;

    let (vals, vecs) = eigh(&polished.view())?;
    let n = basis.len();
    let ud = dagger(&target.matrix().view());
    let mut ops = Vec::new();
    let mut weights = Vec::new();
    // Largest eigenvalue first.
    for k in (0..n).rev() {
        let lam = vals[k];
        if lam < -1e-8 {
            return Err(TomocsError::Nonphysical(format!(
                "kraus_from_chi: eigenvalue {lam:.3e} survived polishing"
            )));
        }
        if lam < 1e-12 {
            continue;
        }
        // K_n = √λ · Σ_α V_αn E_α ; A_n = U† K_n.
        let mut k_n: CMat = Array2::zeros((d, d));
        for alpha in 0..n {
            let v = vecs[[alpha, k]];
            if v != ZERO {
                k_n.scaled_add(v, basis.element(alpha));
            }
        }
        let scale = C64::new(lam.sqrt(), 0.0);
        ops.push(ud.dot(&k_n).mapv(|z| z * scale));
        weights.push(lam);
    }
    let set = KrausSet::new(d, ops, weights);
    let residual = set.tp_residual();
    if residual > 1e-8 {
        return Err(TomocsError::Linalg(format!(
            "kraus_from_chi: trace-preservation residual {residual:.3e} after polishing"
        )));
    }
    Ok(set)
}

/// Alternates exact TP projection with PSD clipping until the matrix is
/// trace-preserving within `tp_tol` and PSD within ~1e-12.
fn polish_to_cptp(h: &CMat, tp: &TpConstraint, tp_tol: f64, max_passes: usize) -> Result<CMat> {
    let n = h.nrows();
    let mut x = herm_to_coords(&h.view());
    for _ in 0..max_passes {
        x = tp.project(&x);
        let m = coords_to_herm(&x.view(), n);
        let (vals, vecs) = eigh(&m.view())?;
        if vals[0] >= -1e-12 && tp.residual(&x) <= tp_tol {
            return Ok(m);
        }
        let clipped = vals.mapv(|v| v.max(0.0));
        let m = linalg::from_eigh(&clipped.view(), &vecs.view());
        x = herm_to_coords(&m.view());
    }
    // Finish on a TP projection so the Kraus trace-preservation identity
    // holds exactly; any residual negative dust is clipped by the caller.
    x = tp.project(&x);
    if tp.residual(&x) <= tp_tol {
        Ok(coords_to_herm(&x.view(), n))
    } else {
        Err(TomocsError::Linalg(
            "could not polish process matrix onto the CPTP set".into(),
        ))
    }
}

/// The trace-preservation equalities of a basis, as a real affine
/// constraint `A·coords(χ) = b` on the Hermitian coordinates of χ, with a
/// cached factorization for exact orthogonal projection onto `Ax = b`.
#[derive(Debug, Clone)]
pub struct TpConstraint {
    /// `d² × n²` constraint matrix.
    a: Array2<f64>,
    /// Right-hand side: the Hermitian coordinates of `I_d`.
    b: Array1<f64>,
    /// Cholesky factor (lower) of `A·Aᵀ`.
    aat_chol: Array2<f64>,
    n: usize,
}

impl TpConstraint {
    pub fn new(basis: &OperatorBasis) -> Result<Self> {
        let d = basis.dim();
        let n = basis.len();
        let ncoords = n * n;
        let nrows = d * d;
        // Products P_ij = E_j† E_i for the coordinate directions of χ.
        let mut a = Array2::zeros((nrows, ncoords));
        let s = std::f64::consts::SQRT_2;
        for i in 0..n {
            let p_ii = dagger(&basis.element(i).view()).dot(basis.element(i));
            a.column_mut(i).assign(&herm_to_coords(&p_ii.view()));
            for j in (i + 1)..n {
                let p = dagger(&basis.element(j).view()).dot(basis.element(i));
                let pd = dagger(&p.view());
                // χ-direction (√2·Re pair): (P + P†)/√2.
                let re_dir = (&p + &pd).mapv(|z| z / C64::new(s, 0.0));
                // χ-direction (√2·Im pair): i(P − P†)/√2.
                let im_dir = (&p - &pd).mapv(|z| z * C64::new(0.0, 1.0) / C64::new(s, 0.0));
                let k = pair_offset(n, i, j);
                a.column_mut(k).assign(&herm_to_coords(&re_dir.view()));
                a.column_mut(k + 1).assign(&herm_to_coords(&im_dir.view()));
            }
        }
        let b = herm_to_coords(&eye(d).view());
        let aat = a.dot(&a.t());
        let aat_chol = aat
            .cholesky(UPLO::Lower)
            .map_err(|e| TomocsError::Linalg(format!("TP constraint factorization: {e}")))?;
        Ok(TpConstraint {
            a,
            b,
            aat_chol,
            n,
        })
    }

    /// Number of χ-space real coordinates, `n² = d⁴`.
    pub fn coord_len(&self) -> usize {
        self.n * self.n
    }

    /// The constraint matrix `A`.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    /// The right-hand side `b`.
    pub fn rhs(&self) -> &Array1<f64> {
        &self.b
    }

    /// `‖A x − b‖₂`.
    pub fn residual(&self, x: &Array1<f64>) -> f64 {
        let r = self.a.dot(x) - &self.b;
        r.dot(&r).sqrt()
    }

    /// Orthogonal projection onto the affine subspace `Ax = b`.
    pub fn project(&self, x: &Array1<f64>) -> Array1<f64> {
        let r = self.a.dot(x) - &self.b;
        let lam = self.solve_aat(&r);
        x - &self.a.t().dot(&lam)
    }

    /// Solves `(A Aᵀ) y = r` using the cached Cholesky factor.
    pub fn solve_aat(&self, r: &Array1<f64>) -> Array1<f64> {
        let l = &self.aat_chol;
        let m = r.len();
        let mut y = r.to_owned();
        // Forward substitution L y = r.
        for i in 0..m {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        // Back substitution Lᵀ z = y.
        for i in (0..m).rev() {
            let mut s = y[i];
            for k in (i + 1)..m {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }
}

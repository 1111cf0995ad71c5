//! Operator bases for expressing process matrices, and transforms between
//! them.
//!
//! Four families are supported for `d = 2^N`, `N ≤ 3`:
//!
//! - **Pauli**: `{I, X, Y, Z}^⊗N` in lexicographic order (first qubit is
//!   the most significant factor), normalization `Q = d`.
//! - **Pauli-error**: `E_α = U·𝒫_α` for an anchor unitary `U`; the ideal
//!   gate's process matrix is a single entry at `(0, 0)` in this basis.
//!   `Q = d`.
//! - **Natural**: single-entry matrices `|i⟩⟨j|` in column-stacking order
//!   (`α = i + j·d`), `Q = 1`.
//! - **SVD**: first element `U/√d`, remainder a deterministic orthonormal
//!   completion; the ideal gate's process matrix is `diag(d, 0, …, 0)`.
//!   `Q = 1`.
//!
//! All bases satisfy `Tr(E_α† E_β) = Q·δ_αβ`. A [`BasisTransform`] maps a
//! process matrix between two bases of the same dimension while preserving
//! every predicted probability.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TomocsError};
use crate::linalg::{
    dagger, eye, frob_inner, is_unitary, kron, unvec_col, vec_col, CMat, C64, ONE, ZERO,
};

/// Which family a basis belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisLabel {
    Pauli,
    PauliError,
    Natural,
    Svd,
}

impl BasisLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisLabel::Pauli => "pauli",
            BasisLabel::PauliError => "pauli-error",
            BasisLabel::Natural => "natural",
            BasisLabel::Svd => "svd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pauli" => Ok(BasisLabel::Pauli),
            "pauli-error" => Ok(BasisLabel::PauliError),
            "natural" => Ok(BasisLabel::Natural),
            "svd" => Ok(BasisLabel::Svd),
            other => Err(TomocsError::InvalidArgument(format!(
                "unknown basis label '{other}' (expected pauli, pauli-error, natural, or svd)"
            ))),
        }
    }
}

impl std::fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An ordered, orthogonal set of `d²` operators spanning the `d×d`
/// operator space, with `Tr(E_α† E_β) = Q·δ_αβ`.
///
/// Immutable after construction; cheap to share behind an `Arc`.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    label: BasisLabel,
    dim: usize,
    normalization: f64,
    elements: Vec<CMat>,
    anchor_unitary: Option<CMat>,
    fingerprint: [u8; 32],
}

impl OperatorBasis {
    fn new(
        label: BasisLabel,
        dim: usize,
        normalization: f64,
        elements: Vec<CMat>,
        anchor_unitary: Option<CMat>,
    ) -> Self {
        let fingerprint = fingerprint_elements(label, dim, &elements);
        OperatorBasis {
            label,
            dim,
            normalization,
            elements,
            anchor_unitary,
            fingerprint,
        }
    }

    pub fn label(&self) -> BasisLabel {
        self.label
    }

    /// Hilbert-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of elements, `d²`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Orthogonality constant `Q`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn element(&self, alpha: usize) -> &CMat {
        &self.elements[alpha]
    }

    pub fn elements(&self) -> &[CMat] {
        &self.elements
    }

    pub fn anchor_unitary(&self) -> Option<&CMat> {
        self.anchor_unitary.as_ref()
    }

    /// Content hash identifying this exact basis (label, dim, elements).
    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    /// Expansion coefficients of `m` in this basis: `m = Σ_α c_α E_α`,
    /// `c_α = Tr(E_α† m)/Q`.
    pub fn expand(&self, m: &CMat) -> Result<Array1<C64>> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(TomocsError::DimensionMismatch(format!(
                "cannot expand a {}×{} matrix in a dim-{} basis",
                m.nrows(),
                m.ncols(),
                self.dim
            )));
        }
        let mut c = Array1::zeros(self.len());
        for (alpha, e) in self.elements.iter().enumerate() {
            c[alpha] = frob_inner(&e.view(), &m.view()) / C64::new(self.normalization, 0.0);
        }
        Ok(c)
    }

    /// Gram matrix `G_αβ = Tr(E_α† E_β)`; equals `Q·I` for a valid basis.
    pub fn gram(&self) -> CMat {
        let n = self.len();
        let mut g = Array2::zeros((n, n));
        for a in 0..n {
            for b in 0..n {
                g[[a, b]] = frob_inner(&self.elements[a].view(), &self.elements[b].view());
            }
        }
        g
    }

    /// Serializes to the debugging JSON document
    /// `{label, dim, normalization, elements}`.
    pub fn to_json(&self) -> Result<String> {
        let elements: Vec<Vec<[f64; 2]>> = self
            .elements
            .iter()
            .map(|e| e.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        let doc = BasisJson {
            label: self.label.as_str().to_string(),
            dim: self.dim,
            normalization: self.normalization,
            elements,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

#[derive(Serialize, Deserialize)]
struct BasisJson {
    label: String,
    dim: usize,
    normalization: f64,
    elements: Vec<Vec<[f64; 2]>>,
}

fn fingerprint_elements(label: BasisLabel, dim: usize, elements: &[CMat]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(label.as_str().as_bytes());
    h.update((dim as u64).to_le_bytes());
    for e in elements {
        for z in e.iter() {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
    }
    h.finalize().into()
}

fn qubits_for_dim(d: usize) -> Result<usize> {
    match d {
        2 => Ok(1),
        4 => Ok(2),
        8 => Ok(3),
        other => Err(TomocsError::UnsupportedDimension(format!(
            "dimension {other} is not 2^N for N in 1..=3"
        ))),
    }
}

fn single_qubit_paulis() -> [CMat; 4] {
    let i2 = eye(2);
    let x = ndarray::array![[ZERO, ONE], [ONE, ZERO]];
    let y = ndarray::array![
        [ZERO, C64::new(0.0, -1.0)],
        [C64::new(0.0, 1.0), ZERO]
    ];
    let z = ndarray::array![[ONE, ZERO], [ZERO, -ONE]];
    [i2, x, y, z]
}

/// The `N`-qubit Pauli basis `{I, X, Y, Z}^⊗N`, lexicographic with the
/// first qubit as the most significant factor; `Q = 2^N`.
pub fn pauli_basis(num_qubits: usize) -> Result<OperatorBasis> {
    if !(1..=3).contains(&num_qubits) {
        return Err(TomocsError::UnsupportedDimension(format!(
            "pauli_basis supports 1..=3 qubits, got {num_qubits}"
        )));
    }
    let singles = single_qubit_paulis();
    let d = 1usize << num_qubits;
    let count = d * d;
    let mut elements = Vec::with_capacity(count);
    for idx in 0..count {
        // Base-4 digits of idx, most significant digit = first qubit.
        let mut m = eye(1);
        for q in 0..num_qubits {
            let digit = (idx >> (2 * (num_qubits - 1 - q))) & 3;
            m = kron(&m.view(), &singles[digit].view());
        }
        elements.push(m);
    }
    Ok(OperatorBasis::new(
        BasisLabel::Pauli,
        d,
        d as f64,
        elements,
        None,
    ))
}

/// The Pauli-error basis `E_α = U·𝒫_α` anchored at a unitary `U`;
/// `E_0 = U` and `Q = d`.
pub fn pauli_error_basis(u: &CMat) -> Result<OperatorBasis> {
    let d = u.nrows();
    let n = qubits_for_dim(d)?;
    if !is_unitary(&u.view(), 1e-10) {
        return Err(TomocsError::InvalidGate(
            "pauli_error_basis anchor is not unitary within 1e-10".into(),
        ));
    }
    let pauli = pauli_basis(n)?;
    let elements: Vec<CMat> = pauli.elements().iter().map(|p| u.dot(p)).collect();
    Ok(OperatorBasis::new(
        BasisLabel::PauliError,
        d,
        d as f64,
        elements,
        Some(u.clone()),
    ))
}

/// The natural basis of single-entry matrices `|i⟩⟨j|` in column-stacking
/// order (`α = i + j·d`); `Q = 1`.
pub fn natural_basis(dim: usize) -> Result<OperatorBasis> {
    qubits_for_dim(dim)?;
    let mut elements = Vec::with_capacity(dim * dim);
    for alpha in 0..dim * dim {
        let (i, j) = (alpha % dim, alpha / dim);
        let mut e = Array2::zeros((dim, dim));
        e[[i, j]] = ONE;
        elements.push(e);
    }
    Ok(OperatorBasis::new(
        BasisLabel::Natural,
        dim,
        1.0,
        elements,
        None,
    ))
}

/// The SVD basis anchored at a unitary `U`: element 0 is `U/√d`, and the
/// remaining `d²−1` elements are a deterministic orthonormal completion
/// (Gram–Schmidt of the natural basis against `U/√d`, in natural order);
/// `Q = 1`.
///
/// In this basis the ideal gate's process matrix is `diag(d, 0, …, 0)`:
/// the natural-basis process matrix of `U` is the rank-1 outer product
/// `u u†` of `u = vec(U)` (trace `d`), and element 0 is its only
/// eigenvector with a nonzero eigenvalue.
pub fn svd_basis(u: &CMat) -> Result<OperatorBasis> {
    let d = u.nrows();
    qubits_for_dim(d)?;
    if !is_unitary(&u.view(), 1e-10) {
        return Err(TomocsError::InvalidGate(
            "svd_basis anchor is not unitary within 1e-10".into(),
        ));
    }
    let n2 = d * d;
    let sqrt_d = (d as f64).sqrt();
    let u_vec = vec_col(&u.view()).mapv(|z| z / C64::new(sqrt_d, 0.0));

    let mut kept: Vec<Array1<C64>> = Vec::with_capacity(n2);
    kept.push(u_vec);
    for idx in 0..n2 {
        if kept.len() == n2 {
            break;
        }
        let mut v: Array1<C64> = Array1::zeros(n2);
        v[idx] = ONE;
        // Two modified Gram–Schmidt sweeps for orthogonality near machine
        // precision.
        for _ in 0..2 {
            for k in &kept {
                let overlap: C64 = k.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                for (vi, ki) in v.iter_mut().zip(k.iter()) {
                    *vi -= overlap * ki;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            kept.push(v.mapv(|z| z / C64::new(norm, 0.0)));
        }
    }
    if kept.len() != n2 {
        return Err(TomocsError::Linalg(format!(
            "svd_basis completion produced {} of {} elements",
            kept.len(),
            n2
        )));
    }
    let elements: Vec<CMat> = kept.iter().map(|v| unvec_col(&v.view(), d)).collect();
    Ok(OperatorBasis::new(
        BasisLabel::Svd,
        d,
        1.0,
        elements,
        Some(u.clone()),
    ))
}

/// A unitary change of basis for process matrices.
///
/// For source basis `E` (normalization `Q_E`) and target basis `F`
/// (normalization `Q_F`), `V_αβ = Tr(F_α† E_β)/√(Q_F·Q_E)` is unitary and
/// the process matrix transforms as `χ_F = (Q_E/Q_F)·V χ_E V†`. The scale
/// factor keeps the represented map — and hence every predicted
/// probability — unchanged.
#[derive(Debug, Clone)]
pub struct BasisTransform {
    source_label: BasisLabel,
    target_label: BasisLabel,
    v: CMat,
    scale: f64,
}

impl BasisTransform {
    pub fn source_label(&self) -> BasisLabel {
        self.source_label
    }

    pub fn target_label(&self) -> BasisLabel {
        self.target_label
    }

    /// The unitary matrix `V`.
    pub fn matrix(&self) -> &CMat {
        &self.v
    }

    /// The normalization ratio `Q_source/Q_target` applied along with `V`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Applies the transform to a raw χ matrix:
    /// `χ' = scale · V χ V†`.
    pub fn apply(&self, chi: &CMat) -> CMat {
        let vd = dagger(&self.v.view());
        let t = self.v.dot(chi).dot(&vd);
        t.mapv(|z| z * self.scale)
    }

    /// Composition: `other ∘ self` (apply `self` first).
    pub fn then(&self, other: &BasisTransform) -> BasisTransform {
        BasisTransform {
            source_label: self.source_label,
            target_label: other.target_label,
            v: other.v.dot(&self.v),
            scale: self.scale * other.scale,
        }
    }
}

/// Builds the [`BasisTransform`] taking process matrices from `from` to
/// `to`. Both bases must share the same dimension.
pub fn basis_transform(from: &OperatorBasis, to: &OperatorBasis) -> Result<BasisTransform> {
    if from.dim() != to.dim() {
        return Err(TomocsError::DimensionMismatch(format!(
            "basis_transform: source dim {} vs target dim {}",
            from.dim(),
            to.dim()
        )));
    }
    let n = from.len();
    let denom = C64::new((to.normalization() * from.normalization()).sqrt(), 0.0);
    let mut v: CMat = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            v[[a, b]] = frob_inner(&to.element(a).view(), &from.element(b).view()) / denom;
        }
    }
    if !is_unitary(&v.view(), 1e-9) {
        return Err(TomocsError::Linalg(
            "basis_transform produced a non-unitary V; are both bases complete?".into(),
        ));
    }
    Ok(BasisTransform {
        source_label: from.label(),
        target_label: to.label(),
        v,
        scale: from.normalization() / to.normalization(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob_norm;

    fn cz() -> CMat {
        let mut m = eye(4);
        m[[3, 3]] = -ONE;
        m
    }

    fn assert_gram_is_q_identity(basis: &OperatorBasis, tol: f64) {
        let g = basis.gram();
        let n = basis.len();
        let q = basis.normalization();
        for a in 0..n {
            for b in 0..n {
                let expect = if a == b { C64::new(q, 0.0) } else { ZERO };
                assert!(
                    (g[[a, b]] - expect).norm() <= tol,
                    "Gram[{a},{b}] = {:?} (basis {})",
                    g[[a, b]],
                    basis.label()
                );
            }
        }
    }

    #[test]
    fn single_qubit_pauli_basis() {
        let b = pauli_basis(1).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b.normalization(), 2.0);
        assert_eq!(b.element(0), &eye(2));
        // X, Y, Z in order.
        assert_eq!(b.element(1)[[0, 1]], ONE);
        assert_eq!(b.element(2)[[0, 1]], C64::new(0.0, -1.0));
        assert_eq!(b.element(3)[[1, 1]], -ONE);
        assert_gram_is_q_identity(&b, 1e-12);
    }

    #[test]
    fn two_qubit_pauli_basis_orthogonality() {
        let b = pauli_basis(2).unwrap();
        assert_eq!(b.len(), 16);
        assert_eq!(b.element(0), &eye(4));
        assert_gram_is_q_identity(&b, 1e-10);
    }

    #[test]
    fn three_qubit_pauli_gram_is_8_identity() {
        let b = pauli_basis(3).unwrap();
        assert_eq!(b.len(), 64);
        assert_eq!(b.normalization(), 8.0);
        assert_gram_is_q_identity(&b, 1e-10);
    }

    #[test]
    fn pauli_ordering_is_first_factor_slowest() {
        let b = pauli_basis(2).unwrap();
        let singles = single_qubit_paulis();
        // Index 1 = I ⊗ X; index 4 = X ⊗ I.
        let ix = kron(&singles[0].view(), &singles[1].view());
        let xi = kron(&singles[1].view(), &singles[0].view());
        assert_eq!(b.element(1), &ix);
        assert_eq!(b.element(4), &xi);
    }

    #[test]
    fn pauli_basis_rejects_out_of_range() {
        assert!(pauli_basis(0).is_err());
        assert!(pauli_basis(4).is_err());
    }

    #[test]
    fn pauli_error_identity_anchor_reduces_to_pauli() {
        let b = pauli_error_basis(&eye(4)).unwrap();
        let p = pauli_basis(2).unwrap();
        for (e, f) in b.elements().iter().zip(p.elements()) {
            assert!(frob_norm(&(e - f).view()) < 1e-14);
        }
    }

    #[test]
    fn pauli_error_cz_first_element_is_cz() {
        let b = pauli_error_basis(&cz()).unwrap();
        assert!(frob_norm(&(b.element(0) - &cz()).view()) < 1e-14);
        let t = frob_inner(&b.element(0).view(), &b.element(0).view());
        assert!((t - C64::new(4.0, 0.0)).norm() < 1e-12);
        assert_gram_is_q_identity(&b, 1e-10);
    }

    #[test]
    fn pauli_error_rejects_non_unitary_anchor() {
        let mut m = eye(4);
        m[[0, 0]] = C64::new(1.5, 0.0);
        assert!(matches!(
            pauli_error_basis(&m),
            Err(TomocsError::InvalidGate(_))
        ));
    }

    #[test]
    fn natural_basis_d2_entries_and_order() {
        let b = natural_basis(2).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b.normalization(), 1.0);
        for (alpha, e) in b.elements().iter().enumerate() {
            let ones: Vec<(usize, usize)> = (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .filter(|&(i, j)| e[[i, j]] != ZERO)
                .collect();
            assert_eq!(ones.len(), 1);
            let (i, j) = ones[0];
            assert_eq!(alpha, i + 2 * j);
            assert_eq!(e[[i, j]], ONE);
        }
        assert_gram_is_q_identity(&b, 1e-15);
    }

    #[test]
    fn natural_basis_d4_gram_is_identity() {
        let b = natural_basis(4).unwrap();
        assert_gram_is_q_identity(&b, 1e-15);
        assert!(natural_basis(3).is_err());
    }

    #[test]
    fn svd_basis_cz_vectorization_components() {
        // vec(CZ) stacks the columns: (1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,−1).
        let expected: Vec<f64> = vec![
            1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0,
        ];
        let u = vec_col(&cz().view());
        for (z, &e) in u.iter().zip(&expected) {
            assert!((z - C64::new(e, 0.0)).norm() < 1e-15);
        }
        // Tr(χ^nat) = Σ|u_α|² = d.
        let trace: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        assert!((trace - 4.0).abs() < 1e-14);
    }

    #[test]
    fn svd_basis_first_element_is_u_over_sqrt_d() {
        let b = svd_basis(&cz()).unwrap();
        let expect = cz().mapv(|z| z / C64::new(2.0, 0.0));
        assert!(frob_norm(&(b.element(0) - &expect).view()) < 1e-14);
        let t = frob_inner(&b.element(0).view(), &b.element(0).view());
        assert!((t - ONE).norm() < 1e-12);
        assert_gram_is_q_identity(&b, 1e-10);
    }

    #[test]
    fn svd_basis_d8_is_orthonormal() {
        // A nontrivial 8×8 unitary: Toffoli-like permutation with a phase.
        let mut u = eye(8);
        u[[6, 6]] = ZERO;
        u[[7, 7]] = ZERO;
        u[[6, 7]] = ONE;
        u[[7, 6]] = C64::new(0.0, 1.0);
        // Restore unitarity of the 2×2 block: |i| = 1, fine as is.
        let b = svd_basis(&u).unwrap();
        assert_eq!(b.len(), 64);
        assert_gram_is_q_identity(&b, 1e-10);
    }

    #[test]
    fn basis_transform_identity_when_from_equals_to() {
        let b = pauli_basis(2).unwrap();
        let t = basis_transform(&b, &b).unwrap();
        assert!(frob_norm(&(t.matrix() - &eye(16)).view()) < 1e-12);
        assert_eq!(t.scale(), 1.0);
    }

    #[test]
    fn pauli_to_pauli_error_transform_matches_direct_formula() {
        let u = cz();
        let pauli = pauli_basis(2).unwrap();
        let perr = pauli_error_basis(&u).unwrap();
        let t = basis_transform(&pauli, &perr).unwrap();
        // V_αβ = Tr(𝒫_α† U† 𝒫_β)/d.
        let ud = dagger(&u.view());
        let d = C64::new(4.0, 0.0);
        for a in 0..16 {
            for b in 0..16 {
                let direct =
                    frob_inner(&pauli.element(a).view(), &ud.dot(pauli.element(b)).view()) / d;
                assert!(
                    (t.matrix()[[a, b]] - direct).norm() < 1e-12,
                    "mismatch at ({a},{b})"
                );
            }
        }
    }

    #[test]
    fn transform_composition_matches_direct_path() {
        let u = cz();
        let pauli = pauli_basis(2).unwrap();
        let perr = pauli_error_basis(&u).unwrap();
        let svd = svd_basis(&u).unwrap();
        let ab = basis_transform(&pauli, &perr).unwrap();
        let bc = basis_transform(&perr, &svd).unwrap();
        let ac = basis_transform(&pauli, &svd).unwrap();
        let composed = ab.then(&bc);
        assert!(frob_norm(&(composed.matrix() - ac.matrix()).view()) < 1e-9);
        assert!((composed.scale() - ac.scale()).abs() < 1e-12);
    }

    #[test]
    fn transform_round_trip_is_identity_on_chi() {
        let pauli = pauli_basis(1).unwrap();
        let nat = natural_basis(2).unwrap();
        let fwd = basis_transform(&pauli, &nat).unwrap();
        let back = basis_transform(&nat, &pauli).unwrap();
        // A generic Hermitian χ.
        let chi = ndarray::array![
            [C64::new(0.5, 0.0), C64::new(0.1, 0.2), ZERO, ZERO],
            [C64::new(0.1, -0.2), C64::new(0.3, 0.0), ZERO, ZERO],
            [ZERO, ZERO, C64::new(0.15, 0.0), C64::new(0.0, -0.05)],
            [ZERO, ZERO, C64::new(0.0, 0.05), C64::new(0.05, 0.0)]
        ];
        let round = back.apply(&fwd.apply(&chi));
        assert!(frob_norm(&(&round - &chi).view()) < 1e-12);
        // Scales are reciprocal: Q_pauli/Q_nat = 2, back = 1/2.
        assert!((fwd.scale() - 2.0).abs() < 1e-15);
        assert!((back.scale() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn basis_json_has_expected_shape() {
        let b = pauli_basis(1).unwrap();
        let json = b.to_json().unwrap();
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(doc["label"], "pauli");
        assert_eq!(doc["dim"], 2);
        assert_eq!(doc["normalization"], 2.0);
        assert_eq!(doc["elements"].as_array().unwrap().len(), 4);
        assert_eq!(doc["elements"][0].as_array().unwrap().len(), 4);
    }

    #[test]
    fn transform_rejects_dimension_mismatch() {
        let a = pauli_basis(1).unwrap();
        let b = pauli_basis(2).unwrap();
        assert!(matches!(
            basis_transform(&a, &b),
            Err(TomocsError::DimensionMismatch(_))
        ));
    }
}

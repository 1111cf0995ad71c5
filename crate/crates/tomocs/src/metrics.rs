//! Fidelity metrics: process fidelity between χ matrices, and the first
//! two Haar moments of the state fidelity of an error channel.
//!
//! Three independent routes to the moments are provided:
//!
//! 1. closed forms in the Kraus operators ([`avg_state_fidelity`],
//!    [`avg_state_fidelity_sq`]);
//! 2. exact Haar integration over the permutation group
//!    ([`permutation_moment_oracle`]);
//! 3. Monte Carlo over Haar-random states
//!    ([`mc_state_fidelity_moments`]).
//!
//! Routes 2 and 3 exist to certify route 1 and each other; agreement is
//! enforced in the tests.

use std::path::Path;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{check_cptp, ideal_chi, kraus_from_chi, KrausSet, ProcessMatrix, UnitaryGate};
use crate::error::{Result, TomocsError};
use crate::linalg::{hermitian_part, sqrtm_psd, trace, CMat, CVec, C64};
use crate::rng::standard_normal;

/// Samples per RNG substream in the Monte Carlo estimator.
const MC_BLOCK: usize = 4096;

/// The squared Uhlmann fidelity between two process matrices,
/// `F = (Tr √(√χ̂₁ χ̂₂ √χ̂₁))²` on trace-normalized copies.
///
/// The second matrix is converted to the first one's basis when they
/// differ. When either matrix is rank-1 (second eigenvalue ≤ 1e-8 after
/// normalization) this reduces to `Tr(χ̂₁ χ̂₂)` and is computed that way.
pub fn process_fidelity(chi1: &ProcessMatrix, chi2: &ProcessMatrix) -> Result<f64> {
    let chi2_conv;
    let chi2 = if chi1.basis().fingerprint() == chi2.basis().fingerprint() {
        chi2
    } else {
        chi2_conv = chi2.change_basis(chi1.basis())?;
        &chi2_conv
    };
    for (tag, chi) in [("first", chi1), ("second", chi2)] {
        let report = check_cptp(chi)?;
        if !report.passes(1e-6) {
            return Err(TomocsError::Nonphysical(format!(
                "process_fidelity: {tag} argument fails physicality \
                 (min_eig {:.3e}, tp {:.3e}, herm {:.3e})",
                report.min_eigenvalue, report.tp_residual, report.hermiticity_residual
            )));
        }
    }
    let a = unit_trace_copy(chi1.chi())?;
    let b = unit_trace_copy(chi2.chi())?;
    let f = if is_rank_one(&a)? || is_rank_one(&b)? {
        trace_overlap(&a, &b)
    } else {
        uhlmann_squared(&a, &b)?
    };
    Ok(f.clamp(0.0, 1.0))
}

fn unit_trace_copy(chi: &CMat) -> Result<CMat> {
    let h = hermitian_part(&chi.view());
    let tr = trace(&h.view()).re;
    if tr <= 0.0 {
        return Err(TomocsError::Nonphysical(format!(
            "process matrix trace {tr:.3e} is not positive"
        )));
    }
    Ok(h.mapv(|z| z / tr))
}

fn is_rank_one(chi_hat: &CMat) -> Result<bool> {
    let (vals, _) = crate::linalg::eigh(&chi_hat.view())?;
    let n = vals.len();
    Ok(n < 2 || vals[n - 2] <= 1e-8)
}

/// `Re Tr(a·b)` — the fidelity when one argument is rank-1.
fn trace_overlap(a: &CMat, b: &CMat) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for (x, y) in a.t().iter().zip(b.iter()) {
        // a is Hermitian: aᵀ[i,j] = conj(a[i,j]), so this is Tr(a·b).
        acc += x.conj() * y;
    }
    acc.re
}

fn uhlmann_squared(a: &CMat, b: &CMat) -> Result<f64> {
    let sa = sqrtm_psd(&a.view())?;
    let inner = sa.dot(b).dot(&sa);
    let inner = hermitian_part(&inner.view());
    let s = sqrtm_psd(&inner.view())?;
    let t = trace(&s.view()).re;
    Ok(t * t)
}

/// The Haar-average state fidelity of an error channel,
/// `F̄_st = (Σ_n |Tr A_n|² + d) / (d(d+1))`.
///
/// Requires trace preservation within 1e-6.
pub fn avg_state_fidelity(kraus: &KrausSet) -> Result<f64> {
    require_tp(kraus, 1e-6, "avg_state_fidelity")?;
    let d = kraus.dim() as f64;
    let s0: f64 = kraus
        .ops()
        .iter()
        .map(|a| trace(&a.view()).norm_sqr())
        .sum();
    Ok((s0 + d) / (d * (d + 1.0)))
}

/// The Haar average of the *squared* state fidelity, evaluated in closed
/// form from traces of products of Kraus operators.
///
/// Requires trace preservation within 1e-8; the closed form uses the
/// trace-preservation identity during its derivation and is invalid
/// otherwise.
pub fn avg_state_fidelity_sq(kraus: &KrausSet) -> Result<f64> {
    require_tp(kraus, 1e-8, "avg_state_fidelity_sq")?;
    let d = kraus.dim();
    let df = d as f64;
    let ops = kraus.ops();
    let r = ops.len();

    let t: Vec<C64> = ops.iter().map(|a| trace(&a.view())).collect();
    let s0: f64 = t.iter().map(|z| z.norm_sqr()).sum();

    // Pairwise product and trace tables.
    let prod: Vec<Vec<CMat>> = ops
        .iter()
        .map(|a| ops.iter().map(|b| a.dot(b)).collect())
        .collect();
    let b_mats: Vec<CMat> = ops
        .iter()
        .map(|a| a.dot(&crate::linalg::dagger(&a.view())))
        .collect();
    let g1 = |n: usize, m: usize| trace(&prod[n][m].view());
    let g2 = |n: usize, m: usize| -> C64 {
        ops[n]
            .iter()
            .zip(ops[m].iter())
            .map(|(x, y)| x * y.conj())
            .sum()
    };

    let mut sum_g = 0.0; // Σ |Tr(AₙAₘ)|² + |Tr(AₙAₘ†)|²
    let mut t3 = C64::new(0.0, 0.0); // Σ Tr(AₙAₘAₙ†Aₘ†)
    let mut t4 = C64::new(0.0, 0.0); // Σ Tr(AₙAₙ†AₘAₘ†)
    let mut t5 = C64::new(0.0, 0.0); // Σ Tr(AₙAₘ†)·Tr(Aₙ†)·Tr(Aₘ)
    let mut t6 = 0.0; // Σ Re[Tr(AₙAₘ)·Tr(Aₙ†)·Tr(Aₘ†)]
    let mut t7 = 0.0; // Σ Re[Tr(AₙAₙ†Aₘ†)·Tr(Aₘ)]
    for n in 0..r {
        for m in 0..r {
            let g1_nm = g1(n, m);
            let g2_nm = g2(n, m);
            sum_g += g1_nm.norm_sqr() + g2_nm.norm_sqr();
            // Aₙ†Aₘ† = (AₘAₙ)†, so the 4-cycle trace is an elementwise
            // contraction of two stored products.
            t3 += prod[n][m]
                .iter()
                .zip(prod[m][n].iter())
                .map(|(x, y)| x * y.conj())
                .sum::<C64>();
            t4 += b_mats[n]
                .iter()
                .zip(b_mats[m].t().iter())
                .map(|(x, y)| x * y)
                .sum::<C64>();
            t5 += g2_nm * t[n].conj() * t[m];
            t6 += (g1_nm * t[n].conj() * t[m].conj()).re;
            let tr_bn_amd: C64 = b_mats[n]
                .iter()
                .zip(ops[m].iter())
                .map(|(x, y)| x * y.conj())
                .sum();
            t7 += (tr_bn_amd * t[m]).re;
        }
    }
    debug_assert!(t3.im.abs() < 1e-9 && t4.im.abs() < 1e-9 && t5.im.abs() < 1e-9);

    let numerator = df * df
        + 3.0 * df
        + 2.0 * (df + 2.0) * s0
        + s0 * s0
        + sum_g
        + 2.0 * t3.re
        + t4.re
        + 2.0 * t5.re
        + 2.0 * t6
        + 4.0 * t7;
    let denominator = df * (df + 1.0) * (df + 2.0) * (df + 3.0);
    Ok((numerator / denominator).clamp(0.0, 1.0))
}

fn require_tp(kraus: &KrausSet, tol: f64, what: &str) -> Result<()> {
    let residual = kraus.tp_residual();
    if residual > tol {
        return Err(TomocsError::Nonphysical(format!(
            "{what}: Kraus set violates trace preservation by {residual:.3e} (tolerance {tol:.0e})"
        )));
    }
    Ok(())
}

/// The standard deviation of the state fidelity over Haar-random inputs,
/// `ΔF_st = √(F̄²_st − F̄_st²)`, computed from the closed-form moments of
/// the error channel of `chi` relative to `target`.
pub fn state_fidelity_std(chi: &ProcessMatrix, target: &UnitaryGate) -> Result<f64> {
    let kraus = kraus_from_chi(chi, target)?;
    let f1 = avg_state_fidelity(&kraus)?;
    let f2 = avg_state_fidelity_sq(&kraus)?;
    Ok((f2 - f1 * f1).max(0.0).sqrt())
}

/// The linear relation between process fidelity and average state
/// fidelity for trace-preserving maps: `F̄_st = (F_χ·d + 1)/(d + 1)`.
pub fn avg_state_fidelity_from_process(f_chi: f64, dim: usize) -> f64 {
    let d = dim as f64;
    (f_chi * d + 1.0) / (d + 1.0)
}

/// Monte Carlo estimates of the first two state-fidelity moments.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McMoments {
    pub mean: f64,
    pub mean_sq: f64,
    pub se_mean: f64,
    pub se_mean_sq: f64,
    pub samples: usize,
}

/// Estimates `F̄_st` and `F̄²_st` by sampling Haar-random pure states
/// (normalized complex Gaussians) and averaging
/// `F_φ = Σ_n |⟨φ|A_n|φ⟩|²`.
///
/// Samples are processed in blocks of 4096, each on its own RNG
/// substream, with a fixed-order reduction — results are deterministic
/// per seed regardless of thread count.
pub fn mc_state_fidelity_moments(
    kraus: &KrausSet,
    samples: usize,
    seed: u64,
) -> Result<McMoments> {
    if samples == 0 {
        return Err(TomocsError::InvalidArgument(
            "mc_state_fidelity_moments requires at least one sample".into(),
        ));
    }
    let d = kraus.dim();
    let num_blocks = samples.div_ceil(MC_BLOCK);
    let partials: Vec<(f64, f64, f64)> = (0..num_blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            rng.set_word_pos(0);
            let lo = block * MC_BLOCK;
            let hi = (lo + MC_BLOCK).min(samples);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut s4 = 0.0;
            let mut phi: CVec = Array1::zeros(d);
            for _ in lo..hi {
                let mut norm_sq = 0.0;
                for z in phi.iter_mut() {
                    *z = C64::new(standard_normal(&mut rng), standard_normal(&mut rng));
                    norm_sq += z.norm_sqr();
                }
                let inv = 1.0 / norm_sq.sqrt();
                phi.mapv_inplace(|z| z * inv);
                let mut f = 0.0;
                for a in kraus.ops() {
                    let w = a.dot(&phi);
                    let amp: C64 = phi.iter().zip(w.iter()).map(|(p, q)| p.conj() * q).sum();
                    f += amp.norm_sqr();
                }
                s1 += f;
                let fsq = f * f;
                s2 += fsq;
                s4 += fsq * fsq;
            }
            (s1, s2, s4)
        })
        .collect();
    let (s1, s2, s4) = partials
        .iter()
        .fold((0.0, 0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
    let n = samples as f64;
    let mean = s1 / n;
    let mean_sq = s2 / n;
    let var_f = (mean_sq - mean * mean).max(0.0);
    let var_f2 = (s4 / n - mean_sq * mean_sq).max(0.0);
    Ok(McMoments {
        mean,
        mean_sq,
        se_mean: (var_f / n).sqrt(),
        se_mean_sq: (var_f2 / n).sqrt(),
        samples,
    })
}

/// Exact `k`-th Haar moment of the state fidelity, evaluated by summing
/// `Tr[(A_{n₁} ⊗ A_{n₁}† ⊗ … ) P_σ]` over all `(2k)!` permutation
/// operators `P_σ` on `H^{⊗2k}`, with prefactor
/// `1/[binom(2k+d−1, d−1)·(2k)!]`.
///
/// Supports `k ∈ {1, 2}` with `d^{2k} ≤ 4096`. No trace-preservation
/// assumption is used, which makes this an independent oracle for the
/// closed forms.
pub fn permutation_moment_oracle(kraus: &KrausSet, k: usize) -> Result<f64> {
    if !(1..=2).contains(&k) {
        return Err(TomocsError::InvalidArgument(format!(
            "permutation_moment_oracle supports k in {{1, 2}}, got {k}"
        )));
    }
    let d = kraus.dim();
    let m = 2 * k;
    let space = d.pow(m as u32);
    if space > 4096 {
        return Err(TomocsError::UnsupportedDimension(format!(
            "permutation_moment_oracle needs d^(2k) ≤ 4096, got {space}"
        )));
    }

    // P_σ on H^{⊗2k} in permutation-matrix form: column q maps to row
    // p_rows[q], where the digits of the row are those of q rearranged
    // by σ.
    let perms = permutations(m);
    let digit_tables: Vec<Vec<usize>> = (0..space)
        .map(|q| {
            let mut digits = vec![0usize; m];
            let mut rest = q;
            for t in (0..m).rev() {
                digits[t] = rest % d;
                rest /= d;
            }
            digits
        })
        .collect();

    let ops = kraus.ops();
    let r = ops.len();
    let mut total = C64::new(0.0, 0.0);
    // Kraus tuples (n₁ … n_k); factor order A_{n₁}, A_{n₁}†, A_{n₂}, …
    let mut tuple = vec![0usize; k];
    loop {
        let mut factors: Vec<CMat> = Vec::with_capacity(m);
        for &n in &tuple {
            factors.push(ops[n].clone());
            factors.push(crate::linalg::dagger(&ops[n].view()));
        }
        for sigma in &perms {
            let mut tr = C64::new(0.0, 0.0);
            for digits in &digit_tables {
                let mut term = C64::new(1.0, 0.0);
                for (t, f) in factors.iter().enumerate() {
                    term *= f[[digits[t], digits[sigma[t]]]];
                    if term.norm_sqr() == 0.0 {
                        break;
                    }
                }
                tr += term;
            }
            total += tr;
        }
        // Advance the tuple odometer.
        let mut pos = 0;
        loop {
            if pos == k {
                break;
            }
            tuple[pos] += 1;
            if tuple[pos] < r {
                break;
            }
            tuple[pos] = 0;
            pos += 1;
        }
        if pos == k {
            break;
        }
    }

    let prefactor = 1.0 / (binomial(2 * k + d - 1, d - 1) * factorial(m));
    let value = total.re * prefactor;
    debug_assert!(total.im.abs() * prefactor < 1e-9);
    Ok(value)
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..m).collect();
    heap_permute(&mut items, m, &mut out);
    out
}

fn heap_permute(items: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
    if n == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..n {
        heap_permute(items, n - 1, out);
        if n % 2 == 0 {
            items.swap(i, n - 1);
        } else {
            items.swap(0, n - 1);
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut num = 1.0;
    let mut den = 1.0;
    for i in 0..k {
        num *= (n - i) as f64;
        den *= (i + 1) as f64;
    }
    num / den
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Which route produced the moment values in a [`FidelityReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    ClosedForm,
    MonteCarlo,
    PermutationOracle,
}

/// The full scoring of an estimated process matrix against its target
/// gate.
#[derive(Debug, Clone, Serialize)]
pub struct FidelityReport {
    pub process_fidelity: f64,
    pub avg_state_fidelity: f64,
    pub avg_state_fidelity_sq: f64,
    pub state_fidelity_std: f64,
    pub method: MomentMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_mean_sq: Option<f64>,
}

impl FidelityReport {
    /// Scores `chi` against the ideal process matrix of `target` using
    /// the closed-form moments.
    pub fn closed_form(chi: &ProcessMatrix, target: &UnitaryGate) -> Result<Self> {
        let ideal = ideal_chi(target, chi.basis())?;
        let f_chi = process_fidelity(chi, &ideal)?;
        let kraus = kraus_from_chi(chi, target)?;
        let f1 = avg_state_fidelity(&kraus)?;
        let f2 = avg_state_fidelity_sq(&kraus)?;
        Ok(FidelityReport {
            process_fidelity: f_chi,
            avg_state_fidelity: f1,
            avg_state_fidelity_sq: f2,
            state_fidelity_std: (f2 - f1 * f1).max(0.0).sqrt(),
            method: MomentMethod::ClosedForm,
            samples: None,
            se_mean: None,
            se_mean_sq: None,
        })
    }

    /// Scores `chi` with Monte Carlo moments instead of the closed forms.
    pub fn monte_carlo(
        chi: &ProcessMatrix,
        target: &UnitaryGate,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let ideal = ideal_chi(target, chi.basis())?;
        let f_chi = process_fidelity(chi, &ideal)?;
        let kraus = kraus_from_chi(chi, target)?;
        let mc = mc_state_fidelity_moments(&kraus, samples, seed)?;
        Ok(FidelityReport {
            process_fidelity: f_chi,
            avg_state_fidelity: mc.mean,
            avg_state_fidelity_sq: mc.mean_sq,
            state_fidelity_std: (mc.mean_sq - mc.mean * mc.mean).max(0.0).sqrt(),
            method: MomentMethod::MonteCarlo,
            samples: Some(mc.samples),
            se_mean: Some(mc.se_mean),
            se_mean_sq: Some(mc.se_mean_sq),
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

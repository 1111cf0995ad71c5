#![allow(dead_code)]

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tomocs::bases::OperatorBasis;
use tomocs::channel::{KrausSet, ProcessMatrix};
use tomocs::linalg::{dagger, trace, C64, CMat};
use tomocs::rng::standard_normal;

pub fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tol,
        "{what}: {actual} vs {expected} (tol {tol})"
    );
}

/// A Haar-ish random CPTP channel: `r` Kraus operators from the column
/// blocks of an orthonormalized (r·d)×d complex Gaussian isometry.
pub fn random_cptp_kraus(d: usize, r: usize, seed: u64) -> KrausSet {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let rows = r * d;
    let mut v = Array2::<C64>::zeros((rows, d));
    for j in 0..d {
        for i in 0..rows {
            v[[i, j]] = C64::new(standard_normal(&mut rng), standard_normal(&mut rng));
        }
    }
    // Two-pass modified Gram-Schmidt on the columns.
    for _ in 0..2 {
        for j in 0..d {
            for k in 0..j {
                let proj: C64 = (0..rows).map(|i| v[[i, k]].conj() * v[[i, j]]).sum();
                for i in 0..rows {
                    let correction = proj * v[[i, k]];
                    v[[i, j]] -= correction;
                }
            }
            let norm: f64 = (0..rows).map(|i| v[[i, j]].norm_sqr()).sum::<f64>().sqrt();
            for i in 0..rows {
                v[[i, j]] /= C64::new(norm, 0.0);
            }
        }
    }
    let ops: Vec<CMat> = (0..r)
        .map(|n| {
            let mut a = Array2::<C64>::zeros((d, d));
            for i in 0..d {
                for j in 0..d {
                    a[[i, j]] = v[[n * d + i, j]];
                }
            }
            a
        })
        .collect();
    let weights = vec![1.0; r];
    KrausSet::new(d, ops, weights)
}

/// χ of a Kraus channel, assembled from first principles: expand each
/// Kraus operator in the basis (c_α = Tr(E_α†A)/Q) and sum the weighted
/// outer products χ = Σ_n w_n c_n c_n†.
pub fn chi_from_kraus(kraus: &KrausSet, basis: &Arc<OperatorBasis>) -> ProcessMatrix {
    let n = basis.len();
    let q = basis.normalization();
    let mut chi = Array2::<C64>::zeros((n, n));
    for (op, &w) in kraus.ops().iter().zip(kraus.weights()) {
        let c: Array1<C64> = (0..n)
            .map(|alpha| {
                let e_dag = dagger(&basis.element(alpha).view());
                trace(&e_dag.dot(op).view()) / C64::new(q, 0.0)
            })
            .collect();
        for a in 0..n {
            for b in 0..n {
                chi[[a, b]] += C64::new(w, 0.0) * c[a] * c[b].conj();
            }
        }
    }
    ProcessMatrix::new(Arc::clone(basis), chi).expect("kraus expansion yields a valid chi")
}

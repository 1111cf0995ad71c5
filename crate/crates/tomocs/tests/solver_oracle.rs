//! Validates the estimators against an independently written primal-dual
//! solver (Chambolle-Pock) and a projected-gradient optimality
//! certificate, on instances small enough to run both to high accuracy.

mod common;

use std::sync::Arc;

use common::{chi_from_kraus, random_cptp_kraus};
use ndarray::{Array1, Array2};
use ndarray_linalg::SVD;
use tomocs::bases::{pauli_basis, pauli_error_basis, OperatorBasis};
use tomocs::channel::{gate_library, Gate, UnitaryGate};
use tomocs::design::{standard_design, ConfigurationSubset, SensingMatrix};
use tomocs::linalg::{coords_to_herm, eigh, eye, from_eigh, herm_to_coords, C64};
use tomocs::metrics::process_fidelity;
use tomocs::simulate::{add_noise, ideal_dataset};
use tomocs::solve::{
    cs_estimate, epsilon_opt, ls_estimate, EstimatorConfig, Method, SolverStatus,
};

/// Σ|χ_αβ| computed straight off the complex matrix.
fn l1_of_coords(x: &Array1<f64>, side: usize) -> f64 {
    let h = coords_to_herm(&x.view(), side);
    h.iter().map(|z| z.norm()).sum()
}

fn psd_project(x: &Array1<f64>, side: usize) -> Array1<f64> {
    let h = coords_to_herm(&x.view(), side);
    let (vals, vecs) = eigh(&h.view()).unwrap();
    let clipped: Array1<f64> = vals.mapv(|v| v.max(0.0));
    herm_to_coords(&from_eigh(&clipped.view(), &vecs.view()).view())
}

/// The trace-preservation equalities as an explicit affine system
/// `Ax = b`, assembled numerically one coordinate at a time, plus its
/// pseudo-inverse for exact projection.
struct TpSystem {
    a: Array2<f64>,
    b: Array1<f64>,
    pinv: Array2<f64>,
}

impl TpSystem {
    fn build(basis: &Arc<OperatorBasis>) -> Self {
        let n = basis.len();
        let d = basis.dim();
        let ncoords = n * n;
        let mut a = Array2::<f64>::zeros((2 * d * d, ncoords));
        for k in 0..ncoords {
            let mut e_k = Array1::<f64>::zeros(ncoords);
            e_k[k] = 1.0;
            let h = coords_to_herm(&e_k.view(), n);
            let mut t = Array2::<C64>::zeros((d, d));
            for alpha in 0..n {
                for beta in 0..n {
                    if h[[alpha, beta]].norm() == 0.0 {
                        continue;
                    }
                    let e_beta_dag = basis.element(beta).t().mapv(|z| z.conj());
                    let prod = e_beta_dag.dot(basis.element(alpha));
                    t = t + prod.mapv(|z| z * h[[alpha, beta]]);
                }
            }
            for i in 0..d {
                for j in 0..d {
                    a[[2 * (i * d + j), k]] = t[[i, j]].re;
                    a[[2 * (i * d + j) + 1, k]] = t[[i, j]].im;
                }
            }
        }
        let identity = eye(d);
        let mut b = Array1::<f64>::zeros(2 * d * d);
        for i in 0..d {
            for j in 0..d {
                b[2 * (i * d + j)] = identity[[i, j]].re;
                b[2 * (i * d + j) + 1] = identity[[i, j]].im;
            }
        }
        let (u, s, vt) = a.svd(true, true).unwrap();
        let (u, vt) = (u.unwrap(), vt.unwrap());
        let cutoff = 1e-10 * s[0];
        let rank = s.iter().filter(|&&sv| sv > cutoff).count();
        let mut pinv = Array2::<f64>::zeros((ncoords, 2 * d * d));
        for r in 0..rank {
            let scale = 1.0 / s[r];
            for i in 0..ncoords {
                for j in 0..2 * d * d {
                    pinv[[i, j]] += vt[[r, i]] * scale * u[[j, r]];
                }
            }
        }
        TpSystem { a, b, pinv }
    }

    fn project(&self, x: &Array1<f64>) -> Array1<f64> {
        let residual = self.a.dot(x) - &self.b;
        x - &self.pinv.dot(&residual)
    }
}

fn soft_threshold_coords(v: &Array1<f64>, t: f64, side: usize) -> Array1<f64> {
    let mut out = v.clone();
    for k in 0..side {
        let a = v[k];
        out[k] = a.signum() * (a.abs() - t).max(0.0);
    }
    let mut idx = side;
    for _ in 0..side * (side - 1) / 2 {
        let (a, b) = (v[idx], v[idx + 1]);
        let norm = a.hypot(b);
        let scale = if norm > std::f64::consts::SQRT_2 * t {
            1.0 - std::f64::consts::SQRT_2 * t / norm
        } else {
            0.0
        };
        out[idx] = a * scale;
        out[idx + 1] = b * scale;
        idx += 2;
    }
    out
}

fn spectral_norm(m: &Array2<f64>) -> f64 {
    let mut v = Array1::<f64>::from_elem(m.ncols(), 1.0 / (m.ncols() as f64).sqrt());
    let mut norm = 0.0;
    for _ in 0..60 {
        let w = m.t().dot(&m.dot(&v));
        norm = w.dot(&w).sqrt().sqrt();
        let len = w.dot(&w).sqrt();
        v = w / len;
    }
    norm
}

/// Chambolle-Pock on min ‖χ‖ℓ1 s.t. χ ∈ PSD ∩ TP, ‖Φx − p‖ ≤ radius,
/// in the same real coordinates the library uses but with none of its
/// solver machinery.
fn pdhg_cs(
    phi: &Array2<f64>,
    p: &Array1<f64>,
    tp: &TpSystem,
    side: usize,
    radius: f64,
    iterations: usize,
) -> Array1<f64> {
    let ncoords = side * side;
    let m = phi.nrows();
    let op_norm_sq = 3.0 + spectral_norm(phi).powi(2);
    let step = 0.99 / op_norm_sq.sqrt();
    let (tau, sigma) = (step, step);

    let mut x = Array1::<f64>::zeros(ncoords);
    let mut x_bar = x.clone();
    let mut y1 = Array1::<f64>::zeros(ncoords);
    let mut y2 = Array1::<f64>::zeros(ncoords);
    let mut y3 = Array1::<f64>::zeros(ncoords);
    let mut y4 = Array1::<f64>::zeros(m);

    for _ in 0..iterations {
        let v1 = &y1 + &(&x_bar * sigma);
        y1 = &v1 - &(soft_threshold_coords(&(&v1 / sigma), 1.0 / sigma, side) * sigma);
        let v2 = &y2 + &(&x_bar * sigma);
        y2 = &v2 - &(psd_project(&(&v2 / sigma), side) * sigma);
        let v3 = &y3 + &(&x_bar * sigma);
        y3 = &v3 - &(tp.project(&(&v3 / sigma)) * sigma);
        let v4 = &y4 + &(phi.dot(&x_bar) * sigma);
        let u4 = &v4 / sigma;
        let dev = &u4 - p;
        let dev_norm = dev.dot(&dev).sqrt();
        let ball = if dev_norm <= radius {
            u4.clone()
        } else {
            p + &(dev * (radius / dev_norm))
        };
        y4 = &v4 - &(ball * sigma);

        let grad = &y1 + &y2 + &y3 + &phi.t().dot(&y4);
        let x_new = &x - &(grad * tau);
        x_bar = &x_new * 2.0 - &x;
        x = x_new;
    }

    // Land the iterate exactly on the CPTP set before reading off the
    // objective.
    for _ in 0..400 {
        x = tp.project(&psd_project(&x, side));
    }
    x
}

#[test]
fn cs_objective_matches_the_primal_dual_oracle_on_random_channels() {
    let basis = Arc::new(pauli_basis(1).unwrap());
    let design = Arc::new(standard_design(1).unwrap());
    let full = ConfigurationSubset::full(&design);
    let phi = SensingMatrix::assemble(&design, &basis, &full).unwrap();
    let tp = TpSystem::build(&basis);
    let side = basis.len();

    for seed in [101, 202, 303] {
        let chi_true = chi_from_kraus(&random_cptp_kraus(2, 2, seed), &basis);
        let p = phi.predicted_probabilities(&chi_true).unwrap();

        let mut cfg = EstimatorConfig::for_method(Method::Cs, 1);
        cfg.epsilon = 0.01;
        let result = cs_estimate(&phi, &p, &basis, &cfg).unwrap();
        assert_eq!(result.status, SolverStatus::Converged, "seed {seed}");

        let radius = cfg.epsilon * (phi.num_rows() as f64).sqrt();
        let x_oracle = pdhg_cs(phi.phi_real(), &p, &tp, side, radius, 200_000);
        let obj_oracle = l1_of_coords(&x_oracle, side);
        let obj_lib = result.diagnostics.objective;
        let rel = (obj_lib - obj_oracle).abs() / obj_oracle;
        assert!(
            rel < 1e-4,
            "seed {seed}: objective {obj_lib:.8} vs oracle {obj_oracle:.8} (rel {rel:.2e})"
        );
    }
}

fn hadamard() -> UnitaryGate {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mat = ndarray::array![[s, s], [s, -s]];
    UnitaryGate::new("hadamard", mat).unwrap()
}

#[test]
fn the_ls_solution_passes_a_projected_gradient_certificate() {
    let gate = hadamard();
    let design = Arc::new(standard_design(1).unwrap());
    let basis = Arc::new(pauli_error_basis(gate.matrix()).unwrap());
    let full = ConfigurationSubset::full(&design);
    let phi = SensingMatrix::assemble(&design, &basis, &full).unwrap();
    let ideal = ideal_dataset(&gate, Arc::clone(&design)).unwrap();
    let noisy = add_noise(&ideal, 0.03, 17).unwrap();
    let p = noisy.probabilities();

    let cfg = EstimatorConfig::for_method(Method::Ls, 1);
    let result = ls_estimate(&phi, p, &basis, &cfg).unwrap();
    assert_eq!(result.status, SolverStatus::Converged);

    let side = basis.len();
    let tp = TpSystem::build(&basis);
    let x = herm_to_coords(&result.chi.chi().view());
    let grad = phi.phi_real().t().dot(&(phi.phi_real().dot(&x) - p)) * 2.0;
    let t = 1e-2;
    let mut z = &x - &(&grad * t);
    // Dykstra's alternating projections onto PSD ∩ TP.
    let mut inc_psd = Array1::<f64>::zeros(x.len());
    let mut inc_tp = Array1::<f64>::zeros(x.len());
    for _ in 0..3000 {
        let y = psd_project(&(&z + &inc_psd), side);
        inc_psd = &z + &inc_psd - &y;
        let w = tp.project(&(&y + &inc_tp));
        inc_tp = &y + &inc_tp - &w;
        z = w;
    }
    let step = &z - &x;
    let grad_norm = grad.dot(&grad).sqrt();
    let certificate = step.dot(&step).sqrt() / (t * grad_norm.max(1.0));
    assert!(
        certificate < 1e-5,
        "projected-gradient residual {certificate:.3e} at the LS solution"
    );
}

#[test]
fn cs_at_the_optimal_epsilon_reproduces_the_full_ls_estimate() {
    let design = Arc::new(standard_design(2).unwrap());
    let gate = gate_library(Gate::Cz).unwrap();
    let basis = Arc::new(pauli_error_basis(gate.matrix()).unwrap());
    let full = ConfigurationSubset::full(&design);
    let phi = SensingMatrix::assemble(&design, &basis, &full).unwrap();
    let noisy = tomocs::simulate::noisy_gate_dataset(Gate::Cz, 0.02, 23).unwrap();
    let p = noisy.probabilities();

    let ls_cfg = EstimatorConfig::for_method(Method::Ls, 2);
    let chi_full = ls_estimate(&phi, p, &basis, &ls_cfg).unwrap().chi;
    let eps_opt = epsilon_opt(&phi, p, &basis).unwrap();

    // At ε = ε_opt exactly, the ball and the CPTP set touch in a single
    // point, so the iteration cannot certify a strictly feasible exit;
    // the returned matrix must still be the least-squares solution.
    let mut cs_cfg = EstimatorConfig::for_method(Method::Cs, 2);
    cs_cfg.epsilon = eps_opt;
    let result = cs_estimate(&phi, p, &basis, &cs_cfg).unwrap();
    assert_ne!(result.status, SolverStatus::Infeasible);
    assert!(result.diagnostics.epsilon_num <= eps_opt * 1.01);
    let f = process_fidelity(&result.chi, &chi_full).unwrap();
    assert!(f >= 0.999, "F(chi_cs at eps_opt, chi_full) = {f:.6}");
}

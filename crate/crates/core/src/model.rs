//! The rotator-pendulum model.
//!
//! `n` rotators with actions `iota` and angles `phi` are coupled to a chain
//! of `1 + m` pendula with arm lengths `l_0 < l_1 < ... < l_m`:
//!
//! ```text
//! H = <omega, iota> + |iota|^2 / 2
//!   + sum_i y_i^2 / (2 l_i^2)
//!   + sum_i l_i (prod_{j >= i} cos x_j - 1)
//!   + mu V(phi, x)
//! ```
//!
//! The leading pendulum `(x_0, y_0)` carries the separatrix; the remaining
//! ones are the hyperbolic transverse block `(z, zbar)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("arm lengths must be positive and strictly increasing, got {0:?}")]
    BadArms(Vec<f64>),
    #[error("need at least one rotator frequency")]
    EmptyOmega,
    #[error("perturbation term has wrong index dimensions")]
    BadTermShape,
    #[error("perturbation violates the reality constraint by {0:.3e}")]
    NotReal(f64),
    #[error("state has wrong dimensions for this model")]
    BadState,
}

/// Trigonometric polynomial `V(phi, x) = sum a_{k,j} e^{i(<k,phi> + <j,x>)}`
/// with the reality constraint `a_{-k,-j} = conj(a_{k,j})`.
#[derive(Debug, Clone, Default)]
pub struct PerturbationSpec {
    pub n: usize,
    pub pendula: usize, // 1 + m
    pub terms: BTreeMap<(Vec<i64>, Vec<i64>), Complex64>,
}

impl PerturbationSpec {
    pub fn new(n: usize, pendula: usize) -> Self {
        PerturbationSpec {
            n,
            pendula,
            terms: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, k: Vec<i64>, j: Vec<i64>, a: Complex64) -> Result<(), ModelError> {
        if k.len() != self.n || j.len() != self.pendula {
            return Err(ModelError::BadTermShape);
        }
        let e = self
            .terms
            .entry((k, j))
            .or_insert(Complex64::new(0.0, 0.0));
        *e += a;
        Ok(())
    }

    /// Add `amp * cos(<k, phi> + <j, x>)`.
    pub fn add_cos(&mut self, k: Vec<i64>, j: Vec<i64>, amp: f64) -> Result<(), ModelError> {
        let mk: Vec<i64> = k.iter().map(|v| -v).collect();
        let mj: Vec<i64> = j.iter().map(|v| -v).collect();
        self.add_term(k, j, Complex64::new(0.5 * amp, 0.0))?;
        self.add_term(mk, mj, Complex64::new(0.5 * amp, 0.0))
    }

    /// `(1 - cos x_0) cos <k, phi>`: the standard splitting test perturbation.
    /// Vanishes to second order on the torus `x = 0`.
    pub fn pendulum_cos(n: usize, pendula: usize, k: Vec<i64>, amp: f64) -> Self {
        let mut v = PerturbationSpec::new(n, pendula);
        let zero = vec![0i64; pendula];
        let mut e0 = zero.clone();
        e0[0] = 1;
        let mut m0 = zero.clone();
        m0[0] = -1;
        v.add_cos(k.clone(), zero, amp).unwrap();
        v.add_cos(k.clone(), e0, -0.5 * amp).unwrap();
        v.add_cos(k, m0, -0.5 * amp).unwrap();
        v
    }

    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((k, j), a) in &self.terms {
            let mk: Vec<i64> = k.iter().map(|v| -v).collect();
            let mj: Vec<i64> = j.iter().map(|v| -v).collect();
            let am = self
                .terms
                .get(&(mk, mj))
                .copied()
                .unwrap_or(Complex64::new(0.0, 0.0));
            worst = worst.max((am - a.conj()).norm());
        }
        worst
    }

    pub fn eval(&self, phi: &[f64], x: &[f64]) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((k, j), a) in &self.terms {
            let th: f64 = k.iter().zip(phi).map(|(&ki, &p)| ki as f64 * p).sum::<f64>()
                + j.iter().zip(x).map(|(&ji, &xi)| ji as f64 * xi).sum::<f64>();
            acc += a * Complex64::new(th.cos(), th.sin());
        }
        acc.re
    }

    /// Gradient with respect to `phi`.
    pub fn grad_phi(&self, phi: &[f64], x: &[f64]) -> Vec<f64> {
        self.grad(phi, x, true)
    }

    /// Gradient with respect to the pendulum angles.
    pub fn grad_x(&self, phi: &[f64], x: &[f64]) -> Vec<f64> {
        self.grad(phi, x, false)
    }

    fn grad(&self, phi: &[f64], x: &[f64], wrt_phi: bool) -> Vec<f64> {
        let dim = if wrt_phi { self.n } else { self.pendula };
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for ((k, j), a) in &self.terms {
            let th: f64 = k.iter().zip(phi).map(|(&ki, &p)| ki as f64 * p).sum::<f64>()
                + j.iter().zip(x).map(|(&ji, &xi)| ji as f64 * xi).sum::<f64>();
            let e = a * Complex64::new(th.cos(), th.sin());
            let idx = if wrt_phi { k } else { j };
            for (d, &id) in idx.iter().enumerate() {
                out[d] += Complex64::new(0.0, id as f64) * e;
            }
        }
        out.iter().map(|c| c.re).collect()
    }

    /// Coefficient-sum bound for `sup |V|`.
    pub fn sup_norm_bound(&self) -> f64 {
        self.terms.values().map(|a| a.norm()).sum()
    }

    /// Grid estimate of `sup |V|` over the angles (lower bound on the sup).
    pub fn sup_norm_estimate(&self, samples: usize) -> f64 {
        use std::f64::consts::PI;
        let mut worst: f64 = 0.0;
        // 1-D sweeps through random-phase diagonals keep this cheap in any
        // dimension while still exercising every term.
        for pass in 0..4 {
            let shift = pass as f64 * 0.37;
            for i in 0..samples {
                let t = 2.0 * PI * i as f64 / samples as f64;
                let phi: Vec<f64> = (0..self.n).map(|d| t * (1.0 + d as f64 * 0.61) + shift).collect();
                let x: Vec<f64> = (0..self.pendula)
                    .map(|d| t * (1.3 + d as f64 * 0.43) - shift)
                    .collect();
                worst = worst.max(self.eval(&phi, &x).abs());
            }
        }
        worst
    }

    /// Restriction to the leading pendulum: `V_0(phi, x_0) = V(phi, x_0, 0)`.
    /// Terms are merged by `(k, j_0)`.
    pub fn leading_restriction(&self) -> BTreeMap<(Vec<i64>, i64), Complex64> {
        let mut out: BTreeMap<(Vec<i64>, i64), Complex64> = BTreeMap::new();
        for ((k, j), a) in &self.terms {
            let e = out
                .entry((k.clone(), j[0]))
                .or_insert(Complex64::new(0.0, 0.0));
            *e += a;
        }
        out
    }

    /// Largest `|sum_j a_{k,j}|` over `k`: zero iff `V(phi, 0) = 0`.
    pub fn zero_section_defect(&self) -> f64 {
        let mut sums: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for ((k, _), a) in &self.terms {
            *sums.entry(k.clone()).or_insert(Complex64::new(0.0, 0.0)) += a;
        }
        sums.values().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Full parameter set of the model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub arms: Vec<f64>,
    pub omega: Vec<f64>,
    pub mu: f64,
    pub perturbation: PerturbationSpec,
}

impl ModelParams {
    pub fn new(
        arms: Vec<f64>,
        omega: Vec<f64>,
        mu: f64,
        perturbation: PerturbationSpec,
    ) -> Result<Self, ModelError> {
        if arms.is_empty() || arms[0] <= 0.0 || arms.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::BadArms(arms));
        }
        if omega.is_empty() {
            return Err(ModelError::EmptyOmega);
        }
        let defect = perturbation.reality_defect();
        if defect > 1e-12 {
            return Err(ModelError::NotReal(defect));
        }
        if perturbation.n != omega.len() || perturbation.pendula != arms.len() {
            return Err(ModelError::BadTermShape);
        }
        Ok(ModelParams {
            arms,
            omega,
            mu,
            perturbation,
        })
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    /// Number of transverse pendula `m` (arms minus the leading one).
    pub fn m(&self) -> usize {
        self.arms.len() - 1
    }

    pub fn state_dim(&self) -> usize {
        2 * self.n() + 2 * self.arms.len()
    }

    /// Pendulum potential `U(x) = sum_i l_i (prod_{j >= i} cos x_j - 1)`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        let p = self.arms.len();
        let mut acc = 0.0;
        for i in 0..p {
            let prod: f64 = (i..p).map(|j| x[j].cos()).product();
            acc += self.arms[i] * (prod - 1.0);
        }
        acc
    }

    pub fn potential_gradient(&self, x: &[f64]) -> Vec<f64> {
        let p = self.arms.len();
        let mut g = vec![0.0; p];
        for i in 0..p {
            for (a, ga) in g.iter_mut().enumerate().take(p).skip(i) {
                let _ = a;
                let mut d = -self.arms[i] * x[a].sin();
                for j in i..p {
                    if j != a {
                        d *= x[j].cos();
                    }
                }
                *ga += d;
            }
        }
        g
    }

    /// `H` evaluated on a flat state `[iota, phi, x_all, y_all]`.
    pub fn hamiltonian(&self, state: &[f64]) -> f64 {
        let (iota, phi, x, y) = self.split(state);
        let rot: f64 = self
            .omega
            .iter()
            .zip(iota)
            .map(|(&w, &i)| w * i + 0.5 * i * i)
            .sum();
        let kin: f64 = y
            .iter()
            .zip(&self.arms)
            .map(|(&yi, &li)| 0.5 * yi * yi / (li * li))
            .sum();
        rot + kin + self.potential(x) + self.mu * self.perturbation.eval(phi, x)
    }

    /// Hamiltonian vector field on the flat state.
    pub fn vector_field(&self, state: &[f64]) -> Vec<f64> {
        let (iota, phi, x, y) = self.split(state);
        let n = self.n();
        let p = self.arms.len();
        let mut out = vec![0.0; self.state_dim()];
        let vg_phi = self.perturbation.grad_phi(phi, x);
        let vg_x = self.perturbation.grad_x(phi, x);
        let ug = self.potential_gradient(x);
        for i in 0..n {
            out[i] = -self.mu * vg_phi[i];
            out[n + i] = self.omega[i] + iota[i];
        }
        for a in 0..p {
            out[2 * n + a] = y[a] / (self.arms[a] * self.arms[a]);
            out[2 * n + p + a] = -ug[a] - self.mu * vg_x[a];
        }
        out
    }

    pub fn split<'a>(&self, state: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let n = self.n();
        let p = self.arms.len();
        assert_eq!(state.len(), 2 * n + 2 * p);
        (
            &state[..n],
            &state[n..2 * n],
            &state[2 * n..2 * n + p],
            &state[2 * n + p..],
        )
    }
}

/// `lambda_i = sqrt(l_0 + ... + l_i) / l_i`.
pub fn characteristic_exponents(arms: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    arms.iter()
        .map(|&l| {
            acc += l;
            acc.sqrt() / l
        })
        .collect()
}

/// Positive eigenvalues of the pendulum linearisation at the origin,
/// computed from a finite-difference Jacobian of the vector field.  Serves
/// as an independent check of [`characteristic_exponents`].
pub fn exponents_via_linearization(params: &ModelParams) -> Vec<f64> {
    let n = params.n();
    let p = params.arms.len();
    let dim = 2 * p;
    let h = 1e-6;
    // Pendulum block of the mu = 0 field, differentiated at the origin.
    let probe = |q: &[f64]| -> Vec<f64> {
        let mut state = vec![0.0; params.state_dim()];
        state[2 * n..].copy_from_slice(q);
        let unperturbed = ModelParams {
            mu: 0.0,
            ..params.clone()
        };
        let f = unperturbed.vector_field(&state);
        f[2 * n..].to_vec()
    };
    let mut jac = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut qp = vec![0.0; dim];
        let mut qm = vec![0.0; dim];
        qp[j] = h;
        qm[j] = -h;
        let fp = probe(&qp);
        let fm = probe(&qm);
        for i in 0..dim {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let eig = jac.complex_eigenvalues();
    let mut pos: Vec<f64> = eig
        .iter()
        .filter(|e| e.re > 1e-9)
        .map(|e| e.re)
        .collect();
    pos.sort_by(|a, b| b.partial_cmp(a).unwrap());
    pos
}

/// Dominance of the leading exponent: `lambda_0 > max(lambda_1..lambda_m)`.
pub fn check_dominance(exponents: &[f64]) -> bool {
    exponents[1..]
        .iter()
        .all(|&l| l < exponents[0])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonresonanceReport {
    pub margin: f64,
    pub witness: Vec<u64>,
    pub threshold: f64,
    pub satisfied: bool,
}

/// Distance from `lambda_0` to the additive semigroup generated by the
/// transverse exponents: `min over k in N^m of |lambda_0 - <k, lambda>|`.
///
/// `threshold` defaults to `min(lambda_1..lambda_m) / 10` when `None`.
pub fn check_nonresonance(exponents: &[f64], threshold: Option<f64>) -> NonresonanceReport {
    let lambda0 = exponents[0];
    let trans = &exponents[1..];
    let m = trans.len();
    let thr = threshold.unwrap_or_else(|| {
        trans
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
            .min(lambda0)
            / 10.0
    });
    let mut best = lambda0; // k = 0
    let mut witness = vec![0u64; m];
    if m > 0 {
        let lmin = trans.iter().cloned().fold(f64::INFINITY, f64::min);
        let cap = lambda0 + 2.0 * lmin;
        let mut k = vec![0u64; m];
        loop {
            let sum: f64 = k.iter().zip(trans).map(|(&ki, &l)| ki as f64 * l).sum();
            let d = (lambda0 - sum).abs();
            if d < best {
                best = d;
                witness = k.clone();
            }
            // Odometer over the finite box sum <= cap.
            let mut carry = 0;
            loop {
                k[carry] += 1;
                let s: f64 = k.iter().zip(trans).map(|(&ki, &l)| ki as f64 * l).sum();
                if s <= cap {
                    break;
                }
                k[carry] = 0;
                carry += 1;
                if carry == m {
                    break;
                }
            }
            if carry == m {
                break;
            }
        }
    }
    NonresonanceReport {
        margin: best,
        witness,
        threshold: thr,
        satisfied: best > thr,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiophantineReport {
    pub theta_hat: f64,
    pub tau: f64,
    pub k_max: u64,
    pub witness: Vec<i64>,
}

/// Brute-force estimate of the Diophantine constant:
/// `theta_hat = min over 0 < |k|_1 <= K of |<k, omega>| |k|_1^tau`.
pub fn check_diophantine(omega: &[f64], tau: f64, k_max: u64) -> DiophantineReport {
    let n = omega.len();
    let mut best = f64::INFINITY;
    let mut witness = vec![0i64; n];
    let mut k = vec![-(k_max as i64); n];
    'outer: loop {
        let k1: i64 = k.iter().map(|v| v.abs()).sum();
        if k1 > 0 && k1 <= k_max as i64 {
            let kw: f64 = k.iter().zip(omega).map(|(&ki, &w)| ki as f64 * w).sum();
            let val = kw.abs() * (k1 as f64).powf(tau);
            if val < best {
                best = val;
                witness = k.clone();
            }
        }
        for d in 0..n {
            k[d] += 1;
            if k[d] <= k_max as i64 {
                continue 'outer;
            }
            k[d] = -(k_max as i64);
        }
        break;
    }
    DiophantineReport {
        theta_hat: best,
        tau,
        k_max,
        witness,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub arms: Vec<f64>,
    pub exponents: Vec<f64>,
    pub eigen_cross_check: f64,
    pub dominance: bool,
    pub nonresonance: NonresonanceReport,
}

pub fn spectral_report(params: &ModelParams) -> SpectralReport {
    let exps = characteristic_exponents(&params.arms);
    let eig = exponents_via_linearization(params);
    let mut sorted = exps.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let cross = sorted
        .iter()
        .zip(&eig)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    SpectralReport {
        arms: params.arms.clone(),
        exponents: exps.clone(),
        eigen_cross_check: cross,
        dominance: check_dominance(&exps),
        nonresonance: check_nonresonance(&exps, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn two_arm_params(mu: f64) -> ModelParams {
        let v = PerturbationSpec::pendulum_cos(1, 2, vec![1], 1.0);
        ModelParams::new(vec![1.0, 2.0], vec![2.0], mu, v).unwrap()
    }

    #[test]
    fn exponents_two_arms() {
        let e = characteristic_exponents(&[1.0, 2.0]);
        assert!((e[0] - 1.0).abs() < 1e-15);
        assert!((e[1] - 3.0_f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn exponents_three_arms() {
        let e = characteristic_exponents(&[1.0, 2.0, 4.0]);
        assert!((e[2] - 7.0_f64.sqrt() / 4.0).abs() < 1e-15);
        assert!(check_dominance(&e));
    }

    #[test]
    fn eigen_cross_check() {
        let r = spectral_report(&two_arm_params(1e-3));
        assert!(r.eigen_cross_check < 1e-9, "defect {}", r.eigen_cross_check);
        assert!(r.dominance);
    }

    #[test]
    fn potential_at_sample_point() {
        let p = two_arm_params(0.0);
        // l_0 (cos pi cos 0 - 1) + l_1 (cos 0 - 1) = -2
        assert!((p.potential(&[PI, 0.0]) - (-2.0)).abs() < 1e-15);
    }

    #[test]
    fn energy_zero_on_separatrix() {
        let p = two_arm_params(0.0);
        for &x in &[0.3, 1.0, PI, 4.0, 6.0] {
            let y = 2.0 * (x / 2.0).sin();
            let state = [0.0, 0.0, x, 0.0, y, 0.0];
            assert!(p.hamiltonian(&state).abs() < 1e-14);
        }
    }

    #[test]
    fn vector_field_matches_gradients() {
        // Finite differences of H against the analytic field.
        let p = two_arm_params(1e-3);
        let state = [0.1, 0.7, 1.3, 0.4, 0.9, -0.2];
        let f = p.vector_field(&state);
        let h = 1e-6;
        // Symplectic pairing: (iota, phi), (x_a, y_a).
        let dim = state.len();
        let mut grad = vec![0.0; dim];
        for d in 0..dim {
            let mut sp = state;
            let mut sm = state;
            sp[d] += h;
            sm[d] -= h;
            grad[d] = (p.hamiltonian(&sp) - p.hamiltonian(&sm)) / (2.0 * h);
        }
        // iota' = -dH/dphi, phi' = dH/diota, x' = dH/dy, y' = -dH/dx
        assert!((f[0] + grad[1]).abs() < 1e-8);
        assert!((f[1] - grad[0]).abs() < 1e-8);
        for a in 0..2 {
            assert!((f[2 + a] - grad[4 + a]).abs() < 1e-8);
            assert!((f[4 + a] + grad[2 + a]).abs() < 1e-8);
        }
    }

    #[test]
    fn nonresonance_two_arms() {
        let e = characteristic_exponents(&[1.0, 2.0]);
        let r = check_nonresonance(&e, None);
        assert!((r.margin - (1.0 - 3.0_f64.sqrt() / 2.0)).abs() < 1e-12);
        assert_eq!(r.witness, vec![1]);
        assert!(r.satisfied);
    }

    #[test]
    fn nonresonance_detects_resonance() {
        // lambda_1 = lambda_0 / 2 exactly: margin 0 at k = 2.
        let r = check_nonresonance(&[1.0, 0.5], None);
        assert!(r.margin < 1e-12);
        assert_eq!(r.witness, vec![2]);
        assert!(!r.satisfied);
    }

    #[test]
    fn diophantine_single_frequency() {
        let r = check_diophantine(&[1.0], 0.0, 50);
        assert!((r.theta_hat - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diophantine_golden_mean() {
        let g = 0.5 * (1.0 + 5.0_f64.sqrt());
        let r = check_diophantine(&[1.0, g], 1.0, 200);
        assert!(r.theta_hat > 0.2, "theta_hat = {}", r.theta_hat);
    }

    #[test]
    fn diophantine_exact_resonance() {
        let r = check_diophantine(&[1.0, 2.0], 1.0, 10);
        assert!(r.theta_hat < 1e-14);
        let kw: f64 = r
            .witness
            .iter()
            .zip(&[1.0, 2.0])
            .map(|(&k, &w)| k as f64 * w)
            .sum();
        assert!(kw.abs() < 1e-14);
    }

    #[test]
    fn perturbation_vanishes_on_zero_section() {
        let v = PerturbationSpec::pendulum_cos(1, 2, vec![1], 1.0);
        assert!(v.zero_section_defect() < 1e-15);
        for &p in &[0.0, 1.0, 2.5] {
            assert!(v.eval(&[p], &[0.0, 0.0]).abs() < 1e-15);
            let expect = (1.0 - 1.4_f64.cos()) * p.cos();
            assert!((v.eval(&[p], &[1.4, 0.0]) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn bad_arms_rejected() {
        let v = PerturbationSpec::new(1, 2);
        assert!(ModelParams::new(vec![2.0, 1.0], vec![1.0], 0.0, v).is_err());
    }

    #[test]
    fn sup_norm_bounds() {
        let v = PerturbationSpec::pendulum_cos(1, 2, vec![1], 1.0);
        let bound = v.sup_norm_bound();
        let est = v.sup_norm_estimate(512);
        assert!(est <= bound + 1e-12);
        assert!(est > 1.5); // sup of (1 - cos x) cos phi is 2
    }
}

//! Mode-by-mode inversion of the first-order cylinder operators.
//!
//! The operator acting on a scalar component `u(phi, s, z)` is
//!
//! ```text
//! L u = <omega, D_phi u> + lambda0 D_s u
//!       + sum_j (lambda_{0,j} + Lambda_{1,j}(s)) z_j D_{z_j} u
//!       + tau(s) u
//! ```
//!
//! where the optional shift `tau` is `-lambda_i(s)` or `+lambda_i(s)` for
//! the transpose variants acting on component `i` of a vector unknown.
//! Each Fourier-Taylor mode `(k, alpha)` decouples into a scalar ODE
//!
//! ```text
//! lambda0 u' + (d + b(s)) u = v,
//! d = i<k,omega> + sum_j alpha_j lambda_{0,j} + tau_0,
//! ```
//!
//! For constant coefficients the equation is integrated from the left
//! endpoint and solved in Chebyshev-coefficient space,
//! `lambda0 c + d S c = S that + lambda0 u(-T) e_0`, where `S` is the
//! bounded definite-antiderivative operator; differentiating back, the
//! certified nodal residual is pure rounding (the raw differentiation
//! system would be exponentially ill-conditioned).  s-dependent rates
//! fall back to dense collocation with a left-edge decay row.  Weighted
//! (`1/chi`) parts invert algebraically with the shifted divisor
//! `d - lambda0`; their coupling term `lambda0 e^s / 2` moves to the
//! bounded right-hand side.

use nalgebra::DMatrix;
use nalgebra::DVector;
use num_complex::Complex64;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use super::cylinder::{CylinderFunction, ModeKey};
use crate::fourier::FourierSeries;
use crate::separatrix::chi;

/// Which constant/variable shift multiplies the unknown itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transpose {
    None,
    /// Subtract the transverse rate of the target component (adjoint-type
    /// equations for the transverse conjugacy components).
    Minus,
    /// Add the transverse rate of the target component.
    Plus,
}

#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub lambda0: f64,
    pub omega: Vec<f64>,
    /// Constant diagonal transverse rates `lambda_{0,1} .. lambda_{0,m}`.
    pub lambda_diag: Vec<f64>,
    /// Optional diagonal s-dependent corrections, sampled at the grid
    /// nodes; each must vanish as `s -> -infinity`.
    pub lambda1: Option<Vec<Vec<f64>>>,
    pub transpose: Transpose,
}

#[derive(Debug, Error)]
pub enum HomologicalError {
    #[error("zero-divisor mode carries nonzero mean {mean:.3e}")]
    MeanObstruction { mean: f64 },
    #[error(
        "resonant divisor {divisor:.3e} at k={k:?}, alpha={alpha:?} (weighted class: {wedge})"
    )]
    ResonantMode {
        k: Vec<i64>,
        alpha: Vec<u8>,
        divisor: f64,
        wedge: bool,
    },
    #[error("transverse rate {value:.6} at index {index} leaves (0, {lambda0:.6}) on the grid")]
    SpectrumRange {
        index: usize,
        value: f64,
        lambda0: f64,
    },
    #[error("averaged action-block Hessian is singular")]
    DegenerateTwist,
    #[error("solving for {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<HomologicalError>,
    },
}

impl OperatorSpec {
    pub fn constant(lambda0: f64, omega: Vec<f64>, lambda_diag: Vec<f64>) -> Self {
        OperatorSpec {
            lambda0,
            omega,
            lambda_diag,
            lambda1: None,
            transpose: Transpose::None,
        }
    }

    pub fn with_transpose(mut self, t: Transpose) -> Self {
        self.transpose = t;
        self
    }

    /// Hyperbolicity hypothesis: every transverse rate stays strictly
    /// between 0 and `lambda0` at each node.
    pub fn validate(&self, grid_len: usize) -> Result<(), HomologicalError> {
        for (j, &l0) in self.lambda_diag.iter().enumerate() {
            for i in 0..grid_len {
                let v = l0 + self.lambda1_value(j, i);
                if v <= 0.0 || v >= self.lambda0 {
                    return Err(HomologicalError::SpectrumRange {
                        index: j,
                        value: v,
                        lambda0: self.lambda0,
                    });
                }
            }
        }
        Ok(())
    }

    fn lambda1_value(&self, j: usize, node: usize) -> f64 {
        match &self.lambda1 {
            Some(l1) => l1[j][node],
            None => 0.0,
        }
    }

    fn tau0(&self, component: Option<usize>) -> f64 {
        match (self.transpose, component) {
            (Transpose::None, _) | (_, None) => 0.0,
            (Transpose::Minus, Some(i)) => -self.lambda_diag[i],
            (Transpose::Plus, Some(i)) => self.lambda_diag[i],
        }
    }

    /// Constant part of the per-mode multiplier.
    pub fn divisor(&self, k: &[i64], alpha: &[u8], component: Option<usize>) -> Complex64 {
        let kw: f64 = k
            .iter()
            .zip(&self.omega)
            .map(|(&ki, &w)| ki as f64 * w)
            .sum();
        let rate: f64 = alpha
            .iter()
            .zip(&self.lambda_diag)
            .map(|(&a, &l)| a as f64 * l)
            .sum();
        Complex64::new(rate + self.tau0(component), kw)
    }

    /// s-dependent part of the multiplier at the grid nodes, if any.
    fn variable_part(&self, alpha: &[u8], component: Option<usize>, grid_len: usize) -> Option<Vec<f64>> {
        let l1 = self.lambda1.as_ref()?;
        let mut out = vec![0.0; grid_len];
        let mut nonzero = false;
        for (j, l1j) in l1.iter().enumerate() {
            let mut weight = alpha.get(j).copied().unwrap_or(0) as f64;
            match (self.transpose, component) {
                (Transpose::Minus, Some(i)) if i == j => weight -= 1.0,
                (Transpose::Plus, Some(i)) if i == j => weight += 1.0,
                _ => {}
            }
            if weight != 0.0 {
                nonzero = true;
                for (o, &v) in out.iter_mut().zip(l1j) {
                    *o += weight * v;
                }
            }
        }
        if nonzero {
            Some(out)
        } else {
            None
        }
    }
}

/// Apply the operator to a cylinder function; the exact counterpart of the
/// solvers below, used for residual certification.
pub fn apply_operator(
    u: &CylinderFunction,
    spec: &OperatorSpec,
    component: Option<usize>,
) -> CylinderFunction {
    let grid = u.grid.clone();
    let nn = grid.len();
    let mut out = CylinderFunction::zero(u.n, u.m, grid.clone());
    for ((k, alpha), mode) in &u.modes {
        let d = spec.divisor(k, alpha, component);
        let b = spec.variable_part(alpha, component, nn);
        // Differentiate through the coefficient transform: the same path
        // the constant-coefficient solver inverts, so certified residuals
        // are not polluted by the nodal matrix's edge weights.
        let deriv = grid.from_coeffs(&grid.coeff_derivative(&grid.to_coeffs(&mode.samples)));
        let dst = out.mode_mut((k.clone(), alpha.clone()));
        dst.constant += d * mode.constant;
        for i in 0..nn {
            let full = mode.constant + mode.samples[i];
            dst.samples[i] += d * mode.samples[i] + spec.lambda0 * deriv[i];
            if let Some(b) = &b {
                dst.samples[i] += b[i] * full;
            }
        }
    }
    for ((k, alpha), &w) in &u.wedge {
        let dw = spec.divisor(k, alpha, component) - spec.lambda0;
        out.add_wedge((k.clone(), alpha.clone()), dw * w);
        let b = spec.variable_part(alpha, component, nn);
        // lambda0 d/ds (w/chi) = -lambda0 w/chi + lambda0 w e^s/2; the
        // second piece is bounded and vanishes on the left.
        let ratio: Option<Vec<Complex64>> = b.map(|b| {
            grid.nodes
                .iter()
                .enumerate()
                .map(|(i, &s)| w * (b[i] / chi(s)))
                .collect()
        });
        let dst = out.mode_mut((k.clone(), alpha.clone()));
        if let Some(ratio) = &ratio {
            // b(s)/chi has a finite left limit when b vanishes like the
            // separatrix tail; split it off as a constant.
            dst.constant += ratio[0];
        }
        for i in 0..nn {
            dst.samples[i] += w * spec.lambda0 * 0.5 * grid.nodes[i].exp();
            if let Some(ratio) = &ratio {
                dst.samples[i] += ratio[i] - ratio[0];
            }
        }
    }
    out
}

/// Invert `(<omega, D_phi> - lambda) u = v` on the torus, mode by mode.
pub fn solve_torus_mode(
    v: &FourierSeries,
    omega: &[f64],
    lambda: f64,
) -> Result<FourierSeries, HomologicalError> {
    let mut u = FourierSeries::new(v.dim);
    for (k, &c) in &v.coeffs {
        let kw: f64 = k.iter().zip(omega).map(|(&ki, &w)| ki as f64 * w).sum();
        let div = Complex64::new(-lambda, kw);
        if div.norm() < 1e-14 {
            if k.iter().all(|&ki| ki == 0) && lambda == 0.0 {
                // kernel of the derivative: reject a nonzero mean, and
                // normalize the average of the solution to zero.
                if c.norm() > 1e-13 {
                    return Err(HomologicalError::MeanObstruction { mean: c.norm() });
                }
                continue;
            }
            return Err(HomologicalError::ResonantMode {
                k: k.clone(),
                alpha: vec![],
                divisor: div.norm(),
                wedge: false,
            });
        }
        u.add(k.clone(), c / div);
    }
    Ok(u)
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// |divisor| below this is treated as resonant.
    pub divisor_tol: f64,
    /// Tolerated mean magnitude on kernel modes (roundoff slack).
    pub mean_tol: f64,
    /// Modes whose constant part is always removed and reported instead of
    /// inverted (the counterterm mechanism of the conjugacy step).
    pub extract: BTreeSet<ModeKey>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            divisor_tol: 1e-12,
            mean_tol: 1e-9,
            extract: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComponentSolution {
    pub u: CylinderFunction,
    /// Constants removed from the right-hand side, by mode.
    pub extracted: BTreeMap<ModeKey, Complex64>,
}

/// Solve `L u = v` for one scalar component, weighted class included.
pub fn solve_extended(
    v: &CylinderFunction,
    spec: &OperatorSpec,
    component: Option<usize>,
    opts: &SolveOptions,
) -> Result<ComponentSolution, HomologicalError> {
    let grid = v.grid.clone();
    let nn = grid.len();
    spec.validate(nn)?;
    let mut u = CylinderFunction::zero(v.n, v.m, grid.clone());

    // Weighted parts first: the 1/chi balance is algebraic per mode.
    for ((k, alpha), &w) in &v.wedge {
        let dw = spec.divisor(k, alpha, component) - spec.lambda0;
        if dw.norm() < opts.divisor_tol.max(1e-10) {
            return Err(HomologicalError::ResonantMode {
                k: k.clone(),
                alpha: alpha.clone(),
                divisor: dw.norm(),
                wedge: true,
            });
        }
        u.add_wedge((k.clone(), alpha.clone()), w / dw);
    }

    // Their bounded coupling terms move to the right-hand side.
    let mut rhs = v.clone();
    if !u.wedge.is_empty() {
        let coupling = apply_operator(&u, spec, component);
        rhs.axpy(Complex64::new(-1.0, 0.0), &coupling);
        // The weighted balance is exact up to one rounding.
        rhs.wedge.retain(|_, w| w.norm() > 1e-13 * v.norm().max(1.0));
        if let Some((key, w)) = rhs.wedge.iter().next() {
            debug_assert!(false, "weighted residue {w} at {key:?}");
            let _ = (key, w);
        }
        rhs.wedge.clear();
    }

    let mut extracted = BTreeMap::new();
    for ((k, alpha), mode) in &rhs.modes {
        let key = (k.clone(), alpha.clone());
        let d = spec.divisor(k, alpha, component);
        let b = spec.variable_part(alpha, component, nn);
        let mut u_const = Complex64::new(0.0, 0.0);
        if opts.extract.contains(&key) {
            extracted.insert(key.clone(), mode.constant);
        } else if d.norm() < opts.divisor_tol {
            if mode.constant.norm() > opts.mean_tol {
                if k.iter().all(|&ki| ki == 0) && alpha.iter().all(|&a| a == 0) {
                    return Err(HomologicalError::MeanObstruction {
                        mean: mode.constant.norm(),
                    });
                }
                return Err(HomologicalError::ResonantMode {
                    k: k.clone(),
                    alpha: alpha.clone(),
                    divisor: d.norm(),
                    wedge: false,
                });
            }
            // kernel mode: pick the average-free representative.
        } else {
            u_const = mode.constant / d;
        }

        // Tail equation: lambda0 u' + (d + b) u = v_tail - b u_const.
        let mut tail = mode.samples.clone();
        if let Some(b) = &b {
            for i in 0..nn {
                tail[i] -= b[i] * u_const;
            }
        }
        let dst = u.mode_mut(key);
        dst.constant += u_const;
        if tail.iter().any(|t| t.norm() > 0.0) {
            let kernel = d.norm() < opts.divisor_tol;
            let sol = solve_tail(&grid, spec.lambda0, d, b.as_deref(), &tail, kernel);
            for (a, b) in dst.samples.iter_mut().zip(sol) {
                *a += b;
            }
        }
    }
    Ok(ComponentSolution { u, extracted })
}

/// z-free right-hand sides: same solver, empty transverse lattice.
pub fn solve_cylinder(
    v: &CylinderFunction,
    spec: &OperatorSpec,
    opts: &SolveOptions,
) -> Result<ComponentSolution, HomologicalError> {
    solve_extended(v, spec, None, opts)
}

/// Compensated accumulator (Neumaier variant) with exact products via fma.
/// Used for the refinement residuals in `solve_tail`, where the correction
/// is a small difference of large terms.
struct NeumaierSum {
    s: f64,
    c: f64,
}

impl NeumaierSum {
    fn new(v: f64) -> Self {
        Self { s: v, c: 0.0 }
    }

    fn add(&mut self, v: f64) {
        let t = self.s + v;
        if self.s.abs() >= v.abs() {
            self.c += (self.s - t) + v;
        } else {
            self.c += (v - t) + self.s;
        }
        self.s = t;
    }

    fn add_prod(&mut self, a: f64, b: f64) {
        let p = a * b;
        self.add(p);
        self.add(a.mul_add(b, -p));
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// Solve `lambda0 u' + (d + b(s)) u = t` on the grid.
///
/// Constant coefficients: the equation is integrated once and solved in
/// coefficient space, `lambda0 c + d S c = S t_hat + lambda0 u(-T) e_0`,
/// where `S` is the bounded antiderivative-from-`-T` matrix.  The system is
/// well conditioned (unlike back-substitution on the differentiated form,
/// which amplifies like `(2 N lambda0 / T |d|)^N`), and a degree-`N`
/// solution of it satisfies `lambda0 u' + d u = I_N[t]` identically, so the
/// nodal residual is pure rounding.  The left edge defaults to the decaying
/// tail value `t(-T)/(lambda0 + d)`; since the solution is affine in that
/// edge value, the edge response is solved alongside and the value is
/// re-picked by least squares on the certified residual whenever the edge
/// response is not itself resolution-free.  This matters for large `|Im d|`,
/// where the kernel oscillates faster than the grid resolves and any edge
/// error would otherwise leak into the residual at full size.
///
/// Variable coefficients: dense collocation with the analogous decay row
/// replacing the left-node equation; the committed edge error is of the
/// size of the tail at -T and shows up in the certified residual.
fn solve_tail(
    grid: &crate::numeric::cheb::ChebGrid,
    lambda0: f64,
    d: Complex64,
    b: Option<&[f64]>,
    t: &[Complex64],
    kernel: bool,
) -> Vec<Complex64> {
    let _ = kernel;
    let nn = grid.len();
    let edge = Complex64::new(lambda0 + b.map_or(0.0, |b| b[0]), 0.0) + d;
    let bc = if edge.norm() > 0.2 * lambda0 {
        t[0] / edge
    } else {
        Complex64::new(0.0, 0.0)
    };
    let b = match b {
        Some(b) => b,
        None => {
            let that = grid.to_coeffs(t);
            let s = antiderivative_matrix(nn - 1, grid.t_max);
            let mut mat = DMatrix::from_element(nn, nn, Complex64::new(0.0, 0.0));
            let mut rhs = DVector::from_element(nn, Complex64::new(0.0, 0.0));
            let mut rhs_edge = DVector::from_element(nn, Complex64::new(0.0, 0.0));
            for r in 0..nn {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..nn {
                    mat[(r, c)] = d * s[(r, c)];
                    acc += s[(r, c)] * that[c];
                }
                mat[(r, r)] += lambda0;
                rhs[r] = acc;
            }
            rhs_edge[0] = Complex64::new(lambda0, 0.0);
            let lu = mat.clone().lu();
            // Iterative refinement with a compensated residual.  Plain LU
            // leaves a forward error ~ cond * eps, which is visible for
            // near-defective modes; accumulating b - A*x with two-product /
            // Neumaier sums makes the correction accurate enough that the
            // refined solve is condition-independent.
            let comp_residual = |b: &DVector<Complex64>, x: &DVector<Complex64>| {
                let mut out = DVector::from_element(nn, Complex64::new(0.0, 0.0));
                for r in 0..nn {
                    let mut sr = NeumaierSum::new(b[r].re);
                    let mut si = NeumaierSum::new(b[r].im);
                    for c in 0..nn {
                        let a = mat[(r, c)];
                        if a.re == 0.0 && a.im == 0.0 {
                            continue;
                        }
                        let v = x[c];
                        sr.add_prod(-a.re, v.re);
                        sr.add_prod(a.im, v.im);
                        si.add_prod(-a.re, v.im);
                        si.add_prod(-a.im, v.re);
                    }
                    out[r] = Complex64::new(sr.value(), si.value());
                }
                out
            };
            let refine = |b: &DVector<Complex64>| -> DVector<Complex64> {
                let mut x = lu.solve(b).expect("integrated coefficient system is invertible");
                for _ in 0..2 {
                    let res = comp_residual(b, &x);
                    if let Some(dx) = lu.solve(&res) {
                        x += dx;
                    }
                }
                x
            };
            let c_forced = refine(&rhs);
            let c_edge = refine(&rhs_edge);
            // Nodal residuals of the forced part and of the unit edge
            // response, through the same derivative used for certification.
            let residual_of = |coeffs: &[Complex64], forced: bool| -> Vec<Complex64> {
                let vals = grid.from_coeffs(coeffs);
                let deriv = grid.from_coeffs(&grid.coeff_derivative(coeffs));
                (0..nn)
                    .map(|i| {
                        let mut r = lambda0 * deriv[i] + d * vals[i];
                        if forced {
                            r -= t[i];
                        }
                        r
                    })
                    .collect()
            };
            let r0 = residual_of(c_forced.as_slice(), true);
            let r1 = residual_of(c_edge.as_slice(), false);
            // In exact arithmetic both residuals are multiples of the same
            // kernel-excitation function, so a single weighted projection
            // recovers the residual-free edge value.  The Chebyshev arc
            // weight vanishes at the endpoints, where differentiation
            // rounding (~N^2/T per unit) would otherwise dominate the
            // projection and make the picked value irreproducible.
            let mut num = Complex64::new(0.0, 0.0);
            let mut den = 0.0f64;
            for i in 0..nn {
                let y = grid.nodes[i] / grid.t_max;
                let wq = (1.0 - y * y).max(0.0);
                num += wq * r1[i].conj() * r0[i];
                den += wq * r1[i].norm_sqr();
            }
            let edge_value = if den.sqrt() > 1e-8 * (lambda0 + d.norm()) {
                // Unresolvable kernel: any edge error shows up at full size,
                // so pick the value that minimizes the residual instead.
                -num / den
            } else {
                bc
            };
            let mut coeffs: Vec<Complex64> = c_forced
                .iter()
                .zip(c_edge.iter())
                .map(|(&f, &e)| f + edge_value * e)
                .collect();
            if den.sqrt() > 1e-8 * (lambda0 + d.norm()) {
                // One re-projection of the combined residual cleans up the
                // rounding the first pick inherited from the forced solve.
                let rf = residual_of(&coeffs, true);
                let mut num2 = Complex64::new(0.0, 0.0);
                for i in 0..nn {
                    let y = grid.nodes[i] / grid.t_max;
                    let wq = (1.0 - y * y).max(0.0);
                    num2 += wq * r1[i].conj() * rf[i];
                }
                let delta = -num2 / den;
                for (cf, &e) in coeffs.iter_mut().zip(c_edge.iter()) {
                    *cf += delta * e;
                }
            }
            return grid.from_coeffs(&coeffs);
        }
    };
    let mut mat = DMatrix::from_element(nn, nn, Complex64::new(0.0, 0.0));
    let mut rhs = DVector::from_element(nn, Complex64::new(0.0, 0.0));
    for r in 1..nn {
        for c in 0..nn {
            mat[(r, c)] = Complex64::new(lambda0 * grid.diff[(r, c)], 0.0);
        }
        mat[(r, r)] += d + b[r];
        rhs[r] = t[r];
    }
    let edge = Complex64::new(lambda0 + b[0], 0.0) + d;
    mat[(0, 0)] = Complex64::new(1.0, 0.0);
    rhs[0] = if edge.norm() > 0.2 * lambda0 {
        t[0] / edge
    } else {
        Complex64::new(0.0, 0.0)
    };
    let sol = mat
        .lu()
        .solve(&rhs)
        .expect("collocation matrix is invertible away from resonance");
    sol.iter().copied().collect()
}

/// Coefficient-space matrix of `p -> int_{-T}^{s} p`, truncated to degree
/// n.  Rows follow the Chebyshev antiderivative recurrence; row 0 pins
/// the value at the left endpoint to zero.
fn antiderivative_matrix(n: usize, t_max: f64) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n + 1, n + 1);
    if n >= 1 {
        s[(1, 0)] = t_max;
        if n >= 2 {
            s[(1, 2)] = -t_max / 2.0;
        }
    }
    for j in 2..=n {
        s[(j, j - 1)] = t_max / (2.0 * j as f64);
        if j + 1 <= n {
            s[(j, j + 1)] = -t_max / (2.0 * j as f64);
        }
    }
    // a_0 = -sum_{k>=1} (-1)^k a_k so the antiderivative vanishes at -T
    for k in 1..=n {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        for c in 0..=n {
            let add = sign * s[(k, c)];
            s[(0, c)] += add;
        }
    }
    s
}

/// Brute-force minimum of |divisor| over the truncation lattice
/// `|k|_inf <= kmax`, `|alpha|_1 <= dmax`, over both the bounded and the
/// weighted classes, excluding the normalized kernel mode.
pub fn minimal_divisor(
    spec: &OperatorSpec,
    component: Option<usize>,
    n: usize,
    kmax: i64,
    dmax: u8,
) -> (f64, ModeKey) {
    let m = spec.lambda_diag.len();
    let mut best = f64::INFINITY;
    let mut witness = (vec![0i64; n], vec![0u8; m]);
    let mut k = vec![-kmax; n];
    loop {
        let mut alpha = vec![0u8; m.max(1)];
        alpha.truncate(m);
        loop {
            let zero_mode = k.iter().all(|&ki| ki == 0) && alpha.iter().all(|&a| a == 0);
            let d = spec.divisor(&k, &alpha, component);
            let dw = d - spec.lambda0;
            for (val, skip) in [(d.norm(), zero_mode), (dw.norm(), false)] {
                if !skip && val < best {
                    best = val;
                    witness = (k.clone(), alpha.clone());
                }
            }
            if m == 0 || !next_alpha(&mut alpha, dmax) {
                break;
            }
        }
        if !next_k(&mut k, kmax) {
            break;
        }
    }
    (best, witness)
}

fn next_k(k: &mut [i64], kmax: i64) -> bool {
    for ki in k.iter_mut() {
        if *ki < kmax {
            *ki += 1;
            return true;
        }
        *ki = -kmax;
    }
    false
}

fn next_alpha(alpha: &mut [u8], dmax: u8) -> bool {
    loop {
        let mut carried = false;
        for ai in alpha.iter_mut() {
            if *ai < dmax {
                *ai += 1;
                carried = true;
                break;
            }
            *ai = 0;
        }
        if !carried {
            return false;
        }
        let total: u32 = alpha.iter().map(|&a| a as u32).sum();
        if total <= dmax as u32 {
            return true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::cheb::ChebGrid;
    use std::rc::Rc;

    fn grid() -> Rc<ChebGrid> {
        // sech-type profiles have poles at +-i pi/2; this resolution keeps
        // their interpolation error near machine precision.
        Rc::new(ChebGrid::new(160, 8.0))
    }

    fn residual(
        u: &CylinderFunction,
        v: &CylinderFunction,
        spec: &OperatorSpec,
        component: Option<usize>,
    ) -> f64 {
        apply_operator(u, spec, component).sub(v).max_abs()
    }

    #[test]
    fn torus_mode_integrates_sine() {
        let mut v = FourierSeries::new(1);
        v.add_sin(vec![1], 1.0);
        let u = solve_torus_mode(&v, &[1.0], 0.0).unwrap();
        // d/dphi (-cos phi) = sin phi.
        for &p in &[0.3, 1.7, 4.0] {
            assert!((u.eval_real(&[p]) + p.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn torus_mode_with_shift() {
        let mut v = FourierSeries::new(1);
        v.add_cos(vec![1], 1.0);
        let u = solve_torus_mode(&v, &[1.0], 1.0).unwrap();
        for &p in &[0.0f64, 0.9, 2.5] {
            let expect = (p.sin() - p.cos()) / 2.0;
            assert!((u.eval_real(&[p]) - expect).abs() < 1e-14);
            // substitute back: u' - u = cos.
            let du = u.derivative(0).eval_real(&[p]);
            assert!((du - u.eval_real(&[p]) - p.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn torus_mode_mean_obstruction() {
        let mut v = FourierSeries::new(1);
        v.add(vec![0], Complex64::new(0.5, 0.0));
        let e = solve_torus_mode(&v, &[1.0], 0.0).unwrap_err();
        assert!(matches!(e, HomologicalError::MeanObstruction { .. }));
    }

    #[test]
    fn decaying_profile_closed_form() {
        // v = e^s cos phi, lambda0 = 1, omega = 1: u_{+-1} = e^s / (2(1 +- i)).
        let g = Rc::new(ChebGrid::new(120, 6.0));
        let spec = OperatorSpec::constant(1.0, vec![1.0], vec![]);
        let mut v = CylinderFunction::zero(1, 0, g.clone());
        let half = Complex64::new(0.5, 0.0);
        for k in [1i64, -1] {
            v.add_profile((vec![k], vec![]), |s| half * s.exp());
        }
        let sol = solve_cylinder(&v, &spec, &SolveOptions::default()).unwrap();
        for &(p, s) in &[(0.4f64, -3.0f64), (2.0, 0.5), (5.5, 5.0)] {
            let exact = s.exp() * (p.cos() + p.sin()) / 2.0;
            let got = sol.u.eval(&[p], s, &[]).re;
            assert!((got - exact).abs() < 1e-9, "phi={p} s={s}: {got} vs {exact}");
        }
        assert!(residual(&sol.u, &v, &spec, None) < 1e-10);
    }

    #[test]
    fn constant_in_s_reduces_to_torus_solve() {
        let g = grid();
        let spec = OperatorSpec::constant(1.7, vec![2.0], vec![]);
        let mut v = CylinderFunction::zero(1, 0, g);
        v.add_constant((vec![1], vec![]), Complex64::new(0.5, 0.0));
        v.add_constant((vec![-1], vec![]), Complex64::new(0.5, 0.0));
        let sol = solve_cylinder(&v, &spec, &SolveOptions::default()).unwrap();
        // D_omega u = cos phi  => u = sin(phi)/omega, independent of s.
        for &p in &[0.0, 1.0, 3.0] {
            let got = sol.u.eval(&[p], 2.0, &[]).re;
            assert!((got - p.sin() / 2.0).abs() < 1e-12);
        }
        assert!(residual(&sol.u, &v, &spec, None) < 1e-12);
    }

    #[test]
    fn weighted_class_closed_form() {
        // lambda0 u' = 1/chi  has the solution u = sinh(s) / (2 lambda0):
        // stored as -1/(lambda0 chi) plus the bounded tail e^s/(2 lambda0).
        let g = grid();
        let lambda0 = 1.5;
        let spec = OperatorSpec::constant(lambda0, vec![1.0], vec![]);
        let mut v = CylinderFunction::zero(1, 0, g);
        v.add_wedge((vec![0], vec![]), Complex64::new(1.0, 0.0));
        let sol = solve_cylinder(&v, &spec, &SolveOptions::default()).unwrap();
        for &s in &[-7.0, -1.0, 0.0, 2.0, 6.5] {
            let got = sol.u.eval(&[0.0], s, &[]).re;
            let exact = (s.sinh()) / (2.0 * lambda0);
            assert!(
                (got - exact).abs() < 1e-8 * exact.abs().max(1.0),
                "s={s}: {got} vs {exact}"
            );
        }
        assert!(residual(&sol.u, &v, &spec, None) < 1e-8);
    }

    #[test]
    fn monomial_shift_matches_torus_formula() {
        // v = z1 cos phi with constant transverse rate: the divisor is
        // i k omega + lambda_1, i.e. the torus solve with shift -lambda_1.
        let g = grid();
        let l1 = 0.6;
        let spec = OperatorSpec::constant(1.0, vec![1.3], vec![l1]);
        let mut v = CylinderFunction::zero(1, 1, g);
        v.add_constant((vec![1], vec![1]), Complex64::new(0.5, 0.0));
        v.add_constant((vec![-1], vec![1]), Complex64::new(0.5, 0.0));
        let sol = solve_extended(&v, &spec, None, &SolveOptions::default()).unwrap();
        let mut vf = FourierSeries::new(1);
        vf.add_cos(vec![1], 1.0);
        let uf = solve_torus_mode(&vf, &[1.3], -l1).unwrap();
        for &p in &[0.2, 1.1, 4.4] {
            let got = sol.u.eval(&[p], 0.0, &[Complex64::new(1.0, 0.0)]).re;
            assert!((got - uf.eval_real(&[p])).abs() < 1e-12);
        }
        assert!(residual(&sol.u, &v, &spec, None) < 1e-12);
    }

    #[test]
    fn resonant_weighted_mode_rejected() {
        // Transverse rate equal to lambda0 kills the weighted divisor at
        // alpha = e1, k = 0.
        let g = grid();
        let mut spec = OperatorSpec::constant(1.0, vec![1.0], vec![1.0 - 1e-13]);
        spec.lambda0 = 1.0;
        let mut v = CylinderFunction::zero(1, 1, g);
        v.add_wedge((vec![0], vec![1]), Complex64::new(1.0, 0.0));
        let e = solve_extended(&v, &spec, None, &SolveOptions::default()).unwrap_err();
        match e {
            HomologicalError::ResonantMode { alpha, wedge, .. } => {
                assert_eq!(alpha, vec![1]);
                assert!(wedge);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn variable_rate_round_trip() {
        // Manufactured solution under an s-dependent transverse rate.
        let g = grid();
        let l1: Vec<f64> = g.nodes.iter().map(|&s| 0.15 / s.cosh().powi(2)).collect();
        let spec = OperatorSpec {
            lambda0: 1.0,
            omega: vec![1.0],
            lambda_diag: vec![0.5],
            lambda1: Some(vec![l1]),
            transpose: Transpose::None,
        };
        let mut exact = CylinderFunction::zero(1, 1, g.clone());
        let t = g.t_max;
        exact.add_profile((vec![1], vec![1]), |s| Complex64::new((s - t).exp(), 0.0));
        exact.add_constant((vec![1], vec![1]), Complex64::new(0.3, 0.1));
        let v = apply_operator(&exact, &spec, None);
        let sol = solve_extended(&v, &spec, None, &SolveOptions::default()).unwrap();
        assert!(sol.u.sub(&exact).max_abs() < 1e-9);
        assert!(residual(&sol.u, &v, &spec, None) < 1e-10);
    }

    #[test]
    fn extraction_reports_constant() {
        let g = grid();
        let spec = OperatorSpec::constant(1.0, vec![1.0], vec![0.5]);
        let mut v = CylinderFunction::zero(1, 1, g);
        let key = (vec![0], vec![0]);
        v.add_constant(key.clone(), Complex64::new(0.7, 0.0));
        let mut opts = SolveOptions::default();
        opts.extract.insert(key.clone());
        let sol = solve_extended(&v, &spec, None, &opts).unwrap();
        assert!((sol.extracted[&key].re - 0.7).abs() < 1e-15);
        assert!(sol.u.norm() < 1e-14);
    }

    #[test]
    fn linearity_on_random_inputs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = grid();
        let spec = OperatorSpec::constant(1.0, vec![1.4], vec![0.55]);
        let opts = SolveOptions::default();
        let random_fn = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut v = CylinderFunction::zero(1, 1, g.clone());
            for _ in 0..6 {
                let k = rng.gen_range(-8i64..=8);
                let a = rng.gen_range(0u8..=2);
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if k != 0 || a != 0 {
                    v.add_constant((vec![k], vec![a]), c);
                }
                let amp = rng.gen_range(-1.0..1.0);
                v.add_profile((vec![k], vec![a]), |s| {
                    Complex64::new(amp / s.cosh(), 0.0)
                });
            }
            v
        };
        for _ in 0..4 {
            let v1 = random_fn(&mut rng);
            let v2 = random_fn(&mut rng);
            let a = Complex64::new(0.7, -0.2);
            let b = Complex64::new(-1.1, 0.4);
            let mut vc = v1.scaled(a);
            vc.axpy(b, &v2);
            let u1 = solve_extended(&v1, &spec, None, &opts).unwrap().u;
            let u2 = solve_extended(&v2, &spec, None, &opts).unwrap().u;
            let uc = solve_extended(&vc, &spec, None, &opts).unwrap().u;
            let mut lin = u1.scaled(a);
            lin.axpy(b, &u2);
            assert!(uc.sub(&lin).max_abs() < 1e-12 * vc.norm().max(1.0));
        }
    }

    #[test]
    fn minimal_divisor_brute_force() {
        let spec = OperatorSpec::constant(1.0, vec![1.0, (5f64.sqrt() - 1.0) / 2.0], vec![0.4]);
        let (dmin, witness) = minimal_divisor(&spec, None, 2, 8, 3);
        assert!(dmin > 0.0);
        // re-check the witness value directly
        let d = spec.divisor(&witness.0, &witness.1, None).norm();
        let dw = (spec.divisor(&witness.0, &witness.1, None) - spec.lambda0).norm();
        assert!((dmin - d.min(dw)).abs() < 1e-15);
    }
}


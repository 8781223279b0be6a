//! Chebyshev-Gauss-Lobatto collocation on a symmetric interval `[-t, t]`.
//!
//! Cylinder functions are sampled at these nodes in the time-like variable;
//! the differentiation matrix gives spectral derivatives for residual
//! certification, and barycentric interpolation provides dense evaluation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Collocation grid with `n + 1` Lobatto nodes, stored in ascending order.
#[derive(Debug, Clone)]
pub struct ChebGrid {
    pub t_max: f64,
    pub nodes: Vec<f64>,
    pub diff: DMatrix<f64>,
}

impl ChebGrid {
    pub fn new(n: usize, t_max: f64) -> Self {
        assert!(n >= 2 && t_max > 0.0);
        // Standard nodes cos(j pi / n) are descending on [-1, 1]; reverse so
        // nodes[0] = -t_max.
        let std_nodes: Vec<f64> = (0..=n).map(|j| (PI * j as f64 / n as f64).cos()).collect();
        let d_std = diff_matrix(&std_nodes);
        let size = n + 1;
        let mut nodes = vec![0.0; size];
        let mut diff = DMatrix::zeros(size, size);
        for i in 0..size {
            nodes[i] = -t_max * std_nodes[i]; // reversal + scaling
            for j in 0..size {
                diff[(i, j)] = -d_std[(i, j)] / t_max;
            }
        }
        ChebGrid { t_max, nodes, diff }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sample a scalar function at the nodes.
    pub fn sample<F: Fn(f64) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        self.nodes.iter().map(|&s| f(s)).collect()
    }

    /// Spectral derivative of nodal values.
    pub fn derivative(&self, values: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += self.diff[(i, j)] * values[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Chebyshev coefficients of the interpolant through the nodal values.
    pub fn to_coeffs(&self, values: &[Complex64]) -> Vec<Complex64> {
        let n = self.len() - 1;
        // Standard order: p_j = f(cos(j pi / n)) = values[n - j].
        let mut c = vec![Complex64::new(0.0, 0.0); n + 1];
        for (k, ck) in c.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..=n {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                let ang = PI * (k * j) as f64 / n as f64;
                acc += values[n - j] * (w * ang.cos());
            }
            let gamma = if k == 0 || k == n { 0.5 } else { 1.0 };
            *ck = acc * (2.0 * gamma / n as f64);
        }
        c
    }

    /// Nodal values of a Chebyshev coefficient vector.
    pub fn from_coeffs(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n = self.len() - 1;
        let mut out = vec![Complex64::new(0.0, 0.0); n + 1];
        for i in 0..=n {
            // nodes[i] = -t cos(i pi / n) = t cos((n - i) pi / n)
            let j = n - i;
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, ck) in coeffs.iter().enumerate() {
                let ang = PI * (k * j) as f64 / n as f64;
                acc += ck * ang.cos();
            }
            out[i] = acc;
        }
        out
    }

    /// Coefficients of the derivative (with the interval scaling applied).
    pub fn coeff_derivative(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n = coeffs.len() - 1;
        let mut d = vec![Complex64::new(0.0, 0.0); n + 1];
        if n >= 1 {
            d[n - 1] = coeffs[n] * (2.0 * n as f64);
            for j in (0..n.saturating_sub(1)).rev() {
                d[j] = d[j + 2] + coeffs[j + 1] * (2.0 * (j + 1) as f64);
            }
            d[0] *= 0.5;
        }
        for dj in d.iter_mut() {
            *dj /= self.t_max;
        }
        d
    }

    /// Barycentric interpolation of nodal values at `s`.
    pub fn interpolate(&self, values: &[Complex64], s: f64) -> Complex64 {
        let n = self.len() - 1;
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for j in 0..=n {
            let d = s - self.nodes[j];
            if d.abs() < 1e-300 {
                return values[j];
            }
            // Lobatto barycentric weights: (-1)^j, halved at the endpoints.
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                w *= 0.5;
            }
            num += values[j] * (w / d);
            den += w / d;
        }
        num / den
    }
}

fn diff_matrix(x: &[f64]) -> DMatrix<f64> {
    let n = x.len() - 1;
    let size = n + 1;
    let c = |i: usize| -> f64 {
        let base = if i == 0 || i == n { 2.0 } else { 1.0 };
        if i % 2 == 0 {
            base
        } else {
            -base
        }
    };
    let mut d = DMatrix::zeros(size, size);
    for i in 0..size {
        for j in 0..size {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    // Diagonal by negative row sums (improves accuracy over closed forms).
    for i in 0..size {
        let mut s = 0.0;
        for j in 0..size {
            if i != j {
                s += d[(i, j)];
            }
        }
        d[(i, i)] = -s;
    }
    d
}

//! Finite Fourier series on the `n`-torus with complex coefficients.

use num_complex::Complex64;
use std::collections::BTreeMap;

/// `f(phi) = sum_k c_k e^{i <k, phi>}` over a finite set of integer vectors.
#[derive(Debug, Clone, Default)]
pub struct FourierSeries {
    pub dim: usize,
    pub coeffs: BTreeMap<Vec<i64>, Complex64>,
}

impl FourierSeries {
    pub fn new(dim: usize) -> Self {
        FourierSeries {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, k: Vec<i64>, c: Complex64) {
        assert_eq!(k.len(), self.dim);
        let entry = self.coeffs.entry(k).or_insert(Complex64::new(0.0, 0.0));
        *entry += c;
    }

    /// Add `amp * cos(<k, phi>)` (both exponentials, keeping the series real).
    pub fn add_cos(&mut self, k: Vec<i64>, amp: f64) {
        let mk: Vec<i64> = k.iter().map(|&x| -x).collect();
        self.add(k, Complex64::new(0.5 * amp, 0.0));
        self.add(mk, Complex64::new(0.5 * amp, 0.0));
    }

    /// Add `amp * sin(<k, phi>)`.
    pub fn add_sin(&mut self, k: Vec<i64>, amp: f64) {
        let mk: Vec<i64> = k.iter().map(|&x| -x).collect();
        self.add(k, Complex64::new(0.0, -0.5 * amp));
        self.add(mk, Complex64::new(0.0, 0.5 * amp));
    }

    pub fn eval(&self, phi: &[f64]) -> Complex64 {
        assert_eq!(phi.len(), self.dim);
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in &self.coeffs {
            let th: f64 = k.iter().zip(phi).map(|(&ki, &p)| ki as f64 * p).sum();
            acc += c * Complex64::new(th.cos(), th.sin());
        }
        acc
    }

    pub fn eval_real(&self, phi: &[f64]) -> f64 {
        self.eval(phi).re
    }

    /// Partial derivative along `phi_j`.
    pub fn derivative(&self, j: usize) -> FourierSeries {
        let mut out = FourierSeries::new(self.dim);
        for (k, c) in &self.coeffs {
            out.add(k.clone(), Complex64::new(0.0, k[j] as f64) * c);
        }
        out
    }

    /// Largest deviation from the reality constraint `c_{-k} = conj(c_k)`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, c) in &self.coeffs {
            let mk: Vec<i64> = k.iter().map(|&x| -x).collect();
            let cm = self.coeffs.get(&mk).copied().unwrap_or(Complex64::new(0.0, 0.0));
            worst = worst.max((cm - c.conj()).norm());
        }
        worst
    }

    /// Weighted coefficient norm `sum |c_k| e^{rho |<k, omega>| + sigma |k|_1}`.
    pub fn weighted_norm(&self, rho: f64, sigma: f64, omega: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, c)| {
                let kw: f64 = k.iter().zip(omega).map(|(&ki, &w)| ki as f64 * w).sum();
                let k1: f64 = k.iter().map(|&ki| ki.abs() as f64).sum();
                c.norm() * (rho * kw.abs() + sigma * k1).exp()
            })
            .sum()
    }

    pub fn sup_norm_bound(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }
}

//! Functions on the hyperbolic extension of the whiskered cylinder.
//!
//! A cylinder function is a finite sum over rotator modes `k` and transverse
//! monomials `z^alpha`,
//!
//! ```text
//! u(phi, s, z) = sum_{k, alpha} e^{i <k, phi>} z^alpha
//!                  [ w_{k,alpha} / chi(s) + c_{k,alpha} + f_{k,alpha}(s) ]
//! ```
//!
//! where `c` is the limit at `s -> -infinity`, `f` vanishes there (sampled
//! on a Chebyshev grid), and the optional `w / chi` part carries the
//! singular-weight ("wedge") class used for the energy-like components.

use num_complex::Complex64;
use std::collections::BTreeMap;
use std::rc::Rc;

use crate::numeric::cheb::ChebGrid;
use crate::separatrix::chi;

pub type ModeKey = (Vec<i64>, Vec<u8>);

/// Bounded part of one `(k, alpha)` mode: limit constant plus a vanishing
/// tail sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct ModeFn {
    pub constant: Complex64,
    pub samples: Vec<Complex64>,
}

impl ModeFn {
    pub fn zero(grid_len: usize) -> Self {
        ModeFn {
            constant: Complex64::new(0.0, 0.0),
            samples: vec![Complex64::new(0.0, 0.0); grid_len],
        }
    }

    pub fn constant(c: Complex64, grid_len: usize) -> Self {
        ModeFn {
            constant: c,
            samples: vec![Complex64::new(0.0, 0.0); grid_len],
        }
    }

    pub fn sup(&self) -> f64 {
        self.samples
            .iter()
            .map(|v| (self.constant + v).norm())
            .fold(self.constant.norm(), f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct CylinderFunction {
    pub n: usize,
    pub m: usize,
    pub grid: Rc<ChebGrid>,
    pub modes: BTreeMap<ModeKey, ModeFn>,
    /// Coefficients of the `1 / chi(s)` weight per `(k, alpha)`.
    pub wedge: BTreeMap<ModeKey, Complex64>,
}

impl CylinderFunction {
    pub fn zero(n: usize, m: usize, grid: Rc<ChebGrid>) -> Self {
        CylinderFunction {
            n,
            m,
            grid,
            modes: BTreeMap::new(),
            wedge: BTreeMap::new(),
        }
    }

    pub fn check_key(&self, key: &ModeKey) {
        assert_eq!(key.0.len(), self.n, "rotator index dimension");
        assert_eq!(key.1.len(), self.m, "transverse index dimension");
    }

    pub fn mode_mut(&mut self, key: ModeKey) -> &mut ModeFn {
        self.check_key(&key);
        let len = self.grid.len();
        self.modes.entry(key).or_insert_with(|| ModeFn::zero(len))
    }

    /// Add a constant-in-`s` contribution to a mode.
    pub fn add_constant(&mut self, key: ModeKey, c: Complex64) {
        self.mode_mut(key).constant += c;
    }

    /// Add a vanishing-tail profile sampled from `f` (must decay to 0 as
    /// `s -> -infinity`; the caller is trusted on this).
    pub fn add_profile<F: Fn(f64) -> Complex64>(&mut self, key: ModeKey, f: F) {
        let vals: Vec<Complex64> = self.grid.nodes.iter().map(|&s| f(s)).collect();
        let m = self.mode_mut(key);
        for (a, b) in m.samples.iter_mut().zip(vals) {
            *a += b;
        }
    }

    pub fn add_wedge(&mut self, key: ModeKey, w: Complex64) {
        self.check_key(&key);
        *self
            .wedge
            .entry(key)
            .or_insert(Complex64::new(0.0, 0.0)) += w;
    }

    /// Pointwise evaluation (tests and diagnostics).
    pub fn eval(&self, phi: &[f64], s: f64, z: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((k, alpha), mode) in &self.modes {
            let factor = self.angular_factor(k, alpha, phi, z);
            let tail = self.grid.interpolate(&mode.samples, s);
            acc += factor * (mode.constant + tail);
        }
        for ((k, alpha), w) in &self.wedge {
            let factor = self.angular_factor(k, alpha, phi, z);
            acc += factor * w / chi(s);
        }
        acc
    }

    fn angular_factor(
        &self,
        k: &[i64],
        alpha: &[u8],
        phi: &[f64],
        z: &[Complex64],
    ) -> Complex64 {
        let th: f64 = k.iter().zip(phi).map(|(&ki, &p)| ki as f64 * p).sum();
        let mut factor = Complex64::new(th.cos(), th.sin());
        for (zi, &ai) in z.iter().zip(alpha) {
            for _ in 0..ai {
                factor *= zi;
            }
        }
        factor
    }

    /// Mean on the cylinder: the `s -> -infinity` constant of the zero mode.
    pub fn mean(&self) -> Complex64 {
        let key = (vec![0i64; self.n], vec![0u8; self.m]);
        self.modes
            .get(&key)
            .map(|m| m.constant)
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Coefficient-sup norm: sum over modes of the nodal sup of the bounded
    /// part, plus the wedge coefficients (measured through their regular
    /// factors).
    pub fn norm(&self) -> f64 {
        let bounded: f64 = self.modes.values().map(|m| m.sup()).sum();
        let wedge: f64 = self.wedge.values().map(|w| w.norm()).sum();
        bounded + wedge
    }

    /// Largest nodal magnitude across modes (no summation); used for
    /// residual reporting.
    pub fn max_abs(&self) -> f64 {
        let bounded = self
            .modes
            .values()
            .map(|m| m.sup())
            .fold(0.0f64, f64::max);
        let wedge = self
            .wedge
            .values()
            .map(|w| w.norm())
            .fold(0.0f64, f64::max);
        bounded.max(wedge)
    }

    pub fn axpy(&mut self, a: Complex64, other: &CylinderFunction) {
        assert_eq!(self.grid.len(), other.grid.len());
        for (key, mode) in &other.modes {
            let dst = self.mode_mut(key.clone());
            dst.constant += a * mode.constant;
            for (d, s) in dst.samples.iter_mut().zip(&mode.samples) {
                *d += a * s;
            }
        }
        for (key, w) in &other.wedge {
            self.add_wedge(key.clone(), a * w);
        }
    }

    pub fn scaled(&self, a: Complex64) -> CylinderFunction {
        let mut out = CylinderFunction::zero(self.n, self.m, self.grid.clone());
        out.axpy(a, self);
        out
    }

    pub fn sub(&self, other: &CylinderFunction) -> CylinderFunction {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }

    /// Derivative along rotator angle `j`.
    pub fn d_phi(&self, j: usize) -> CylinderFunction {
        let mut out = CylinderFunction::zero(self.n, self.m, self.grid.clone());
        for ((k, alpha), mode) in &self.modes {
            let ik = Complex64::new(0.0, k[j] as f64);
            let dst = out.mode_mut((k.clone(), alpha.clone()));
            dst.constant = ik * mode.constant;
            for (d, s) in dst.samples.iter_mut().zip(&mode.samples) {
                *d = ik * s;
            }
        }
        for ((k, alpha), w) in &self.wedge {
            let ik = Complex64::new(0.0, k[j] as f64);
            out.add_wedge((k.clone(), alpha.clone()), ik * w);
        }
        out
    }

    /// Derivative in `s`.  On the wedge part `d/ds (w / chi) = -w / chi +
    /// w e^s / 2`, so a bounded (exponentially growing toward the right
    /// edge, vanishing on the left) term appears.
    pub fn d_s(&self) -> CylinderFunction {
        let mut out = CylinderFunction::zero(self.n, self.m, self.grid.clone());
        for ((k, alpha), mode) in &self.modes {
            let dv = self.grid.derivative(&mode.samples);
            let dst = out.mode_mut((k.clone(), alpha.clone()));
            dst.samples = dv;
        }
        let nodes = self.grid.nodes.clone();
        for ((k, alpha), w) in &self.wedge {
            out.add_wedge((k.clone(), alpha.clone()), -w);
            let wv = *w;
            let dst = out.mode_mut((k.clone(), alpha.clone()));
            for (d, &s) in dst.samples.iter_mut().zip(&nodes) {
                *d += wv * 0.5 * s.exp();
            }
        }
        out
    }

    /// Derivative along `z_i` (lowers the monomial degree).
    pub fn d_z(&self, i: usize) -> CylinderFunction {
        let mut out = CylinderFunction::zero(self.n, self.m, self.grid.clone());
        for ((k, alpha), mode) in &self.modes {
            if alpha[i] == 0 {
                continue;
            }
            let mut al = alpha.clone();
            al[i] -= 1;
            let fac = Complex64::new(alpha[i] as f64, 0.0);
            let dst = out.mode_mut((k.clone(), al));
            dst.constant += fac * mode.constant;
            for (d, s) in dst.samples.iter_mut().zip(&mode.samples) {
                *d += fac * s;
            }
        }
        for ((k, alpha), w) in &self.wedge {
            if alpha[i] == 0 {
                continue;
            }
            let mut al = alpha.clone();
            al[i] -= 1;
            out.add_wedge((k.clone(), al), Complex64::new(alpha[i] as f64, 0.0) * w);
        }
        out
    }

    /// Multiply by a scalar profile `w(s)` that vanishes as `s -> -infinity`,
    /// optionally raising the monomial degree by `alpha_shift`.
    ///
    /// Wedge parts become bounded: `w / chi` tends to a finite limit on the
    /// left, which is split off as the new constant using the leftmost node.
    pub fn mul_profile(&self, w: &[f64], alpha_shift: &[u8]) -> CylinderFunction {
        assert_eq!(w.len(), self.grid.len());
        let mut out = CylinderFunction::zero(self.n, self.m, self.grid.clone());
        for ((k, alpha), mode) in &self.modes {
            let mut al = alpha.clone();
            for (a, &sh) in al.iter_mut().zip(alpha_shift) {
                *a += sh;
            }
            let dst = out.mode_mut((k.clone(), al));
            for (i, d) in dst.samples.iter_mut().enumerate() {
                *d += (mode.constant + mode.samples[i]) * w[i];
            }
        }
        for ((k, alpha), wd) in &self.wedge {
            let mut al = alpha.clone();
            for (a, &sh) in al.iter_mut().zip(alpha_shift) {
                *a += sh;
            }
            let ratio: Vec<Complex64> = self
                .grid
                .nodes
                .iter()
                .enumerate()
                .map(|(i, &s)| wd * (w[i] / chi(s)))
                .collect();
            let limit = ratio[0];
            let dst = out.mode_mut((k.clone(), al));
            dst.constant += limit;
            for (d, r) in dst.samples.iter_mut().zip(&ratio) {
                *d += r - limit;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Rc<ChebGrid> {
        Rc::new(ChebGrid::new(64, 8.0))
    }

    #[test]
    fn eval_and_mean() {
        let g = grid();
        let mut u = CylinderFunction::zero(1, 1, g.clone());
        u.add_constant((vec![0], vec![0]), Complex64::new(2.0, 0.0));
        u.add_profile((vec![1], vec![0]), |s| Complex64::new((s - 8.0).exp(), 0.0));
        assert!((u.mean().re - 2.0).abs() < 1e-15);
        let v = u.eval(&[0.5], 1.0, &[]);
        let expect = 2.0
            + Complex64::new(0.5f64.cos(), 0.5f64.sin()).re * 0.0; // real part below
        let tail = (1.0f64 - 8.0).exp();
        let manual = Complex64::new(2.0, 0.0)
            + Complex64::new(0.5f64.cos(), 0.5f64.sin()) * tail;
        assert!((v - manual).norm() < 1e-12);
        let _ = expect;
    }

    #[test]
    fn d_phi_matches_mode_factor() {
        let g = grid();
        let mut u = CylinderFunction::zero(2, 0, g);
        u.add_constant((vec![2, -1], vec![]), Complex64::new(1.0, 0.0));
        let du = u.d_phi(0);
        let c = du.modes.get(&(vec![2, -1], vec![])).unwrap().constant;
        assert!((c - Complex64::new(0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn d_s_of_wedge() {
        // d/ds (1 / chi) = tanh(s) / chi = -1/chi + e^s / 2.
        let g = grid();
        let mut u = CylinderFunction::zero(1, 0, g.clone());
        u.add_wedge((vec![0], vec![]), Complex64::new(1.0, 0.0));
        let du = u.d_s();
        for &s in &[-3.0, 0.0, 2.0] {
            let got = du.eval(&[0.0], s, &[]);
            let exact = s.tanh() / chi(s);
            assert!((got.re - exact).abs() < 1e-10, "s = {s}");
        }
    }

    #[test]
    fn d_z_lowers_degree() {
        let g = grid();
        let mut u = CylinderFunction::zero(1, 2, g);
        u.add_constant((vec![0], vec![2, 1]), Complex64::new(1.0, 0.0));
        let du = u.d_z(0);
        let c = du.modes.get(&(vec![0], vec![1, 1])).unwrap().constant;
        assert!((c.re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mul_profile_on_wedge_splits_constant() {
        // (1 / chi) * c e^s has left limit c/4 (chi ~ 4 e^s on the left).
        let g = Rc::new(ChebGrid::new(96, 6.0));
        let mut u = CylinderFunction::zero(1, 1, g.clone());
        u.add_wedge((vec![0], vec![0]), Complex64::new(1.0, 0.0));
        let w: Vec<f64> = g.nodes.iter().map(|&s| 0.8 * s.exp()).collect();
        let p = u.mul_profile(&w, &[1]);
        let mode = p.modes.get(&(vec![0], vec![1])).unwrap();
        assert!((mode.constant.re - 0.2).abs() < 1e-4);
        for &s in &[-5.0, 0.0, 3.0] {
            let got = p.eval(&[0.0], s, &[Complex64::new(1.0, 0.0)]);
            assert!((got.re - 0.8 * s.exp() / chi(s)).abs() < 1e-8, "s = {s}");
        }
    }

    #[test]
    fn norm_linear_in_scaling() {
        let g = grid();
        let mut u = CylinderFunction::zero(1, 1, g);
        u.add_constant((vec![1], vec![1]), Complex64::new(1.0, 1.0));
        u.add_wedge((vec![0], vec![0]), Complex64::new(0.5, 0.0));
        let n1 = u.norm();
        let n3 = u.scaled(Complex64::new(3.0, 0.0)).norm();
        assert!((n3 - 3.0 * n1).abs() < 1e-12);
    }
}

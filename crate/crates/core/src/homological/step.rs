//! One infinitesimal conjugacy step: given the momentum-free perturbation
//! `f` and the momentum-linear perturbation `g`, solve the coupled linear
//! system for the generating term, the coordinate-shift components, and
//! the counterterm constants that make every right-hand side invertible.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::collections::BTreeMap;

use super::cylinder::CylinderFunction;
use super::solve::{
    apply_operator, solve_extended, HomologicalError, OperatorSpec, SolveOptions, Transpose,
};

/// Data for one step: operator rates, the constant momentum Hessian on the
/// cylinder (size `(n+1+m)^2`, angle block first, then the energy-like
/// slot, then the transverse slots), and the perturbation components.
#[derive(Debug, Clone)]
pub struct StepInput {
    pub spec: OperatorSpec,
    pub quad: DMatrix<f64>,
    pub f: CylinderFunction,
    /// Angle components of the momentum-linear perturbation.
    pub g_angle: Vec<CylinderFunction>,
    /// Energy-slot component; may carry a weighted (`1/chi`) part.
    pub g_energy: CylinderFunction,
    /// Transverse components.
    pub g_transverse: Vec<CylinderFunction>,
    pub opts: SolveOptions,
}

#[derive(Debug, Clone)]
pub struct HomologicalSolution {
    pub s0_hat: CylinderFunction,
    pub beta_hat: Vec<CylinderFunction>,
    pub b_hat: CylinderFunction,
    pub flat_hat: Vec<CylinderFunction>,
    /// Frequency-correction vector chosen to kill the angle-block mean.
    pub xi_hat: DVector<f64>,
    /// Constant added to the generating equation for zero mean.
    pub c_hat: f64,
    /// Energy-rate counterterm.
    pub lambda0_hat: f64,
    /// Transverse-rate counterterm matrix; entry `(j, i)` multiplies `z_j`
    /// in the equation for transverse component `i`.
    pub lambda0_matrix_hat: DMatrix<f64>,
    /// Certified sup residuals per sub-equation.
    pub residuals: BTreeMap<String, f64>,
}

fn stage(name: &'static str) -> impl Fn(HomologicalError) -> HomologicalError {
    move |e| HomologicalError::Stage {
        stage: name,
        source: Box::new(e),
    }
}

fn zero_key(n: usize, m: usize) -> (Vec<i64>, Vec<u8>) {
    (vec![0; n], vec![0; m])
}

fn unit_alpha(m: usize, j: usize) -> Vec<u8> {
    let mut a = vec![0u8; m];
    a[j] = 1;
    a
}

/// Residual of `L u + extracted-constants = v`.
fn certified_residual(
    u: &CylinderFunction,
    v: &CylinderFunction,
    extracted: &BTreeMap<(Vec<i64>, Vec<u8>), Complex64>,
    spec: &OperatorSpec,
    component: Option<usize>,
) -> f64 {
    let mut lhs = apply_operator(u, spec, component);
    for (key, &c) in extracted {
        lhs.add_constant(key.clone(), c);
    }
    lhs.sub(v).max_abs()
}

pub fn homological_step(input: &StepInput) -> Result<HomologicalSolution, HomologicalError> {
    let n = input.f.n;
    let m = input.f.m;
    let dim = n + 1 + m;
    assert_eq!(input.quad.nrows(), dim);
    assert_eq!(input.quad.ncols(), dim);
    assert_eq!(input.g_angle.len(), n);
    assert_eq!(input.g_transverse.len(), m);
    let grid = input.f.grid.clone();
    let spec = &input.spec;
    let mut residuals = BTreeMap::new();

    // Generating term: the right-hand side is -f + mean(f); the constant
    // counterterm absorbs the mean no matter what the frequency shift is.
    let mean_f = input.f.mean().re;
    let mut v_s0 = input.f.scaled(Complex64::new(-1.0, 0.0));
    v_s0.add_constant(zero_key(n, m), Complex64::new(mean_f, 0.0));
    let s0 = solve_extended(&v_s0, spec, None, &input.opts).map_err(stage("generating term"))?;
    let s0_hat = s0.u;
    residuals.insert(
        "generating".to_string(),
        certified_residual(&s0_hat, &v_s0, &BTreeMap::new(), spec, None),
    );

    // Momentum gradient of the generating term, in slot order.
    let mut grad: Vec<CylinderFunction> = Vec::with_capacity(dim);
    for j in 0..n {
        grad.push(s0_hat.d_phi(j));
    }
    grad.push(s0_hat.d_s());
    for i in 0..m {
        grad.push(s0_hat.d_z(i));
    }

    // Hessian-coupled right-hand sides, one per momentum slot.
    let coupled = |r: usize| -> CylinderFunction {
        let mut w = CylinderFunction::zero(n, m, grid.clone());
        for (c, gc) in grad.iter().enumerate() {
            let q = input.quad[(r, c)];
            if q != 0.0 {
                w.axpy(Complex64::new(q, 0.0), gc);
            }
        }
        w
    };

    // Frequency correction from the angle-block means.
    let mut mean_angle = DVector::zeros(n);
    let mut v_angle: Vec<CylinderFunction> = Vec::with_capacity(n);
    for r in 0..n {
        let mut v = input.g_angle[r].clone();
        v.axpy(Complex64::new(1.0, 0.0), &coupled(r));
        mean_angle[r] = v.mean().re;
        v_angle.push(v);
    }
    let q_angle = input.quad.view((0, 0), (n, n)).into_owned();
    let xi_hat = q_angle
        .lu()
        .solve(&(-&mean_angle))
        .ok_or(HomologicalError::DegenerateTwist)?;
    let omega_xi: f64 = spec
        .omega
        .iter()
        .zip(xi_hat.iter())
        .map(|(&w, &x)| w * x)
        .sum();
    let c_hat = mean_f + omega_xi;

    // Angle components, with the Hessian image of the frequency shift
    // folded in as constants.
    let mut beta_hat = Vec::with_capacity(n);
    for (r, v) in v_angle.iter_mut().enumerate() {
        let shift: f64 = (0..n).map(|c| input.quad[(r, c)] * xi_hat[c]).sum();
        v.add_constant(zero_key(n, m), Complex64::new(shift, 0.0));
        let sol = solve_extended(v, spec, None, &input.opts).map_err(stage("angle shift"))?;
        residuals.insert(
            format!("angle[{r}]"),
            certified_residual(&sol.u, v, &sol.extracted, spec, None),
        );
        beta_hat.push(sol.u);
    }

    // Energy-slot component: the constant counterterm is the energy rate.
    let mut v_energy = input.g_energy.clone();
    v_energy.axpy(Complex64::new(1.0, 0.0), &coupled(n));
    let shift: f64 = (0..n).map(|c| input.quad[(n, c)] * xi_hat[c]).sum();
    v_energy.add_constant(zero_key(n, m), Complex64::new(shift, 0.0));
    let mut opts_b = input.opts.clone();
    opts_b.extract.insert(zero_key(n, m));
    let sol_b = solve_extended(&v_energy, spec, None, &opts_b).map_err(stage("energy shift"))?;
    let lambda0_hat = sol_b
        .extracted
        .get(&zero_key(n, m))
        .map(|c| c.re)
        .unwrap_or(0.0);
    residuals.insert(
        "energy".to_string(),
        certified_residual(&sol_b.u, &v_energy, &sol_b.extracted, spec, None),
    );
    let b_hat = sol_b.u;

    // Transverse components: adjoint-type shift on the unknown, a
    // counterterm matrix on the momentum-linear constants, and the
    // rate-derivative coupling through the energy-slot component.
    let spec_t = spec.clone().with_transpose(Transpose::Minus);
    let rate_derivative: Option<Vec<Vec<f64>>> = spec.lambda1.as_ref().map(|l1| {
        l1.iter()
            .map(|samples| {
                let c: Vec<Complex64> =
                    samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                grid.derivative(&c).iter().map(|v| v.re).collect()
            })
            .collect()
    });
    let mut flat_hat = Vec::with_capacity(m);
    let mut lambda0_matrix_hat = DMatrix::zeros(m, m);
    let mut opts_t = input.opts.clone();
    for j in 0..m {
        opts_t.extract.insert((vec![0; n], unit_alpha(m, j)));
    }
    for i in 0..m {
        let mut v = input.g_transverse[i].clone();
        v.axpy(Complex64::new(1.0, 0.0), &coupled(n + 1 + i));
        let shift: f64 = (0..n).map(|c| input.quad[(n + 1 + i, c)] * xi_hat[c]).sum();
        v.add_constant(zero_key(n, m), Complex64::new(shift, 0.0));
        if let Some(rd) = &rate_derivative {
            // b-hat times the s-derivative of the transverse rate, raising
            // the transverse degree by one.
            let term = b_hat.mul_profile(&rd[i], &unit_alpha(m, i));
            v.axpy(Complex64::new(1.0, 0.0), &term);
        }
        let sol =
            solve_extended(&v, &spec_t, Some(i), &opts_t).map_err(stage("transverse shift"))?;
        for j in 0..m {
            if let Some(c) = sol.extracted.get(&(vec![0; n], unit_alpha(m, j))) {
                lambda0_matrix_hat[(j, i)] = c.re;
            }
        }
        residuals.insert(
            format!("transverse[{i}]"),
            certified_residual(&sol.u, &v, &sol.extracted, &spec_t, Some(i)),
        );
        flat_hat.push(sol.u);
    }

    Ok(HomologicalSolution {
        s0_hat,
        beta_hat,
        b_hat,
        flat_hat,
        xi_hat,
        c_hat,
        lambda0_hat,
        lambda0_matrix_hat,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::cheb::ChebGrid;
    use crate::separatrix::chi;
    use std::rc::Rc;

    fn base_input(omega: f64) -> StepInput {
        let grid = Rc::new(ChebGrid::new(160, 8.0));
        let spec = OperatorSpec::constant(1.0, vec![omega], vec![0.5]);
        let zero = || CylinderFunction::zero(1, 1, grid.clone());
        StepInput {
            spec,
            quad: DMatrix::identity(3, 3),
            f: zero(),
            g_angle: vec![zero()],
            g_energy: zero(),
            g_transverse: vec![zero()],
            opts: SolveOptions::default(),
        }
    }

    #[test]
    fn zero_input_gives_zero_solution() {
        let input = base_input(1.0);
        let sol = homological_step(&input).unwrap();
        assert!(sol.s0_hat.norm() < 1e-15);
        assert!(sol.b_hat.norm() < 1e-15);
        assert_eq!(sol.c_hat, 0.0);
        assert_eq!(sol.lambda0_hat, 0.0);
        assert!(sol.xi_hat.norm() < 1e-15);
    }

    #[test]
    fn cosine_forcing_closed_form() {
        // f = cos(phi): the generating term is -(1/omega) sin(phi), the
        // angle shift is -(1/omega^2) sin(phi), everything else vanishes.
        let omega = 1.7;
        let mut input = base_input(omega);
        input.f.add_constant((vec![1], vec![0]), Complex64::new(0.5, 0.0));
        input.f.add_constant((vec![-1], vec![0]), Complex64::new(0.5, 0.0));
        let sol = homological_step(&input).unwrap();
        for &p in &[0.0, 0.7, 2.9, 5.0] {
            let s0 = sol.s0_hat.eval(&[p], 0.0, &[Complex64::new(0.0, 0.0)]).re;
            assert!((s0 + p.sin() / omega).abs() < 1e-10, "phi={p}");
            let b = sol.beta_hat[0].eval(&[p], 0.0, &[Complex64::new(0.0, 0.0)]).re;
            assert!((b + p.sin() / (omega * omega)).abs() < 1e-10, "phi={p}");
        }
        assert!(sol.c_hat.abs() < 1e-12);
        assert!(sol.xi_hat[0].abs() < 1e-12);
        assert!(sol.b_hat.norm() < 1e-10);
        assert!(sol.flat_hat[0].norm() < 1e-10);
        for (name, r) in &sol.residuals {
            assert!(*r < 1e-10, "{name}: {r}");
        }
    }

    #[test]
    fn decaying_forcing_certified() {
        // f = chi(s) cos(phi) has no closed form here; the certificate is
        // the residual of every sub-equation.
        let mut input = base_input(1.3);
        for k in [1i64, -1] {
            input
                .f
                .add_profile((vec![k], vec![0]), |s| Complex64::new(0.5 * chi(s), 0.0));
        }
        let sol = homological_step(&input).unwrap();
        assert!(sol.s0_hat.norm() > 0.1);
        for (name, r) in &sol.residuals {
            assert!(*r < 1e-9, "{name}: {r}");
        }
    }

    #[test]
    fn counterterm_extraction() {
        // Constant energy forcing becomes the energy-rate counterterm;
        // a constant multiple of z becomes the rate-matrix counterterm.
        let mut input = base_input(1.0);
        input
            .g_energy
            .add_constant((vec![0], vec![0]), Complex64::new(0.7, 0.0));
        input
            .g_transverse[0]
            .add_constant((vec![0], vec![1]), Complex64::new(-0.3, 0.0));
        let sol = homological_step(&input).unwrap();
        assert!((sol.lambda0_hat - 0.7).abs() < 1e-12);
        assert!((sol.lambda0_matrix_hat[(0, 0)] + 0.3).abs() < 1e-12);
        assert!(sol.b_hat.norm() < 1e-12);
        assert!(sol.flat_hat[0].norm() < 1e-12);
    }

    #[test]
    fn weighted_energy_forcing() {
        // A 1/chi energy forcing exercises the weighted solver inside the
        // pipeline together with a variable transverse rate.
        let grid = Rc::new(ChebGrid::new(160, 8.0));
        let l1: Vec<f64> = grid.nodes.iter().map(|&s| 0.1 / s.cosh().powi(2)).collect();
        let mut input = base_input(1.0);
        input.spec.lambda1 = Some(vec![l1]);
        input
            .g_energy
            .add_wedge((vec![0], vec![0]), Complex64::new(0.4, 0.0));
        let sol = homological_step(&input).unwrap();
        assert!(sol.b_hat.wedge.len() == 1);
        for (name, r) in &sol.residuals {
            assert!(*r < 1e-8, "{name}: {r}");
        }
    }
}


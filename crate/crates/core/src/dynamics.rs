//! Direct numerical experiment on the full flow: symplectic integrators,
//! shooting along the unstable/stable whiskers of the lead pendulum, and a
//! finite-`mu` measurement of the action jump across the loop compared with
//! the first-order splitting potential.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::FourierSeries;
use crate::model::ModelParams;
use crate::separatrix::s_of_x;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("trajectory did not reach the section x = {x_star} within t = {t_max}")]
    NoCrossing { x_star: f64, t_max: f64 },
    #[error("implicit midpoint iteration did not converge (residual {0:.3e})")]
    MidpointStall(f64),
    #[error("angle matching stalled: target {target:.6}, best miss {miss:.3e}")]
    AngleMatchStall { target: f64, miss: f64 },
    #[error("measurement requires a single rotator, got n = {0}")]
    NotScalar(usize),
    #[error("measurement assumes lead arm 1, got l_0 = {0}")]
    BadLeadArm(f64),
    #[error("chart: {0}")]
    Chart(#[from] crate::separatrix::ChartError),
}

/// Time stepping scheme. The first two exploit the kinetic/potential split
/// of `H`; the midpoint rule works on the full vector field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Leapfrog,
    Yoshida4,
    ImplicitMidpoint,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub h: f64,
}

/// Momentum kick from the position-dependent part of `H`.
fn kick(params: &ModelParams, state: &mut [f64], h: f64) {
    let n = params.n();
    let p = params.arms.len();
    let (phi, x) = (
        state[n..2 * n].to_vec(),
        state[2 * n..2 * n + p].to_vec(),
    );
    let vg_phi = params.perturbation.grad_phi(&phi, &x);
    let vg_x = params.perturbation.grad_x(&phi, &x);
    let ug = params.potential_gradient(&x);
    for i in 0..n {
        state[i] -= h * params.mu * vg_phi[i];
    }
    for a in 0..p {
        state[2 * n + p + a] -= h * (ug[a] + params.mu * vg_x[a]);
    }
}

/// Position drift from the momentum-dependent part of `H`.
fn drift(params: &ModelParams, state: &mut [f64], h: f64) {
    let n = params.n();
    let p = params.arms.len();
    for i in 0..n {
        state[n + i] += h * (params.omega[i] + state[i]);
    }
    for a in 0..p {
        state[2 * n + a] += h * state[2 * n + p + a] / (params.arms[a] * params.arms[a]);
    }
}

fn leapfrog(params: &ModelParams, state: &mut [f64], h: f64) {
    kick(params, state, 0.5 * h);
    drift(params, state, h);
    kick(params, state, 0.5 * h);
}

fn yoshida4(params: &ModelParams, state: &mut [f64], h: f64) {
    // Triple-jump composition; w1 = 1/(2 - 2^{1/3}).
    let w1 = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
    let w0 = 1.0 - 2.0 * w1;
    leapfrog(params, state, w1 * h);
    leapfrog(params, state, w0 * h);
    leapfrog(params, state, w1 * h);
}

fn implicit_midpoint(
    params: &ModelParams,
    state: &mut [f64],
    h: f64,
) -> Result<(), DynamicsError> {
    let dim = state.len();
    let mut next = state.to_vec();
    let mut residual = f64::INFINITY;
    for _ in 0..100 {
        let mid: Vec<f64> = state
            .iter()
            .zip(&next)
            .map(|(&a, &b)| 0.5 * (a + b))
            .collect();
        let f = params.vector_field(&mid);
        residual = 0.0;
        for j in 0..dim {
            let updated = state[j] + h * f[j];
            residual = residual.max((updated - next[j]).abs());
            next[j] = updated;
        }
        if residual < 1e-14 {
            state.copy_from_slice(&next);
            return Ok(());
        }
    }
    Err(DynamicsError::MidpointStall(residual))
}

/// Advance the state by one step of size `cfg.h` (which may be negative).
pub fn step(params: &ModelParams, cfg: &IntegratorConfig, state: &mut [f64]) -> Result<(), DynamicsError> {
    match cfg.method {
        Method::Leapfrog => {
            leapfrog(params, state, cfg.h);
            Ok(())
        }
        Method::Yoshida4 => {
            yoshida4(params, state, cfg.h);
            Ok(())
        }
        Method::ImplicitMidpoint => implicit_midpoint(params, state, cfg.h),
    }
}

/// Integrate for `steps` steps.
pub fn integrate(
    params: &ModelParams,
    cfg: &IntegratorConfig,
    state: &mut [f64],
    steps: usize,
) -> Result<(), DynamicsError> {
    for _ in 0..steps {
        step(params, cfg, state)?;
    }
    Ok(())
}

/// Which whisker of the lead-pendulum saddle a shot tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Whisker {
    /// Leaves the torus at `x_0 = 0`; integrated forward.
    Unstable,
    /// Approaches the torus at `x_0 = 2 pi`; integrated backward.
    Stable,
}

/// State and time of a whisker trajectory at the section `x_0 = x_star`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub state: Vec<f64>,
    /// Signed time from the seed to the section.
    pub time: f64,
}

/// Launch a trajectory a distance `eps0` along the linearized whisker with
/// initial rotator angles `phi0`, and return its first crossing of the
/// section `x_0 = x_star`, refined to machine-level accuracy in time.
pub fn whisker_crossing(
    params: &ModelParams,
    cfg: &IntegratorConfig,
    whisker: Whisker,
    phi0: &[f64],
    eps0: f64,
    x_star: f64,
    t_max: f64,
) -> Result<CrossingRecord, DynamicsError> {
    let n = params.n();
    let p = params.arms.len();
    let l0 = params.arms[0];
    // Whisker direction of the lead saddle: eigenvector (1, lambda_0 l_0^2)
    // of the linearization, normalized.
    let lambda0 = (params.arms[0]).sqrt() / params.arms[0];
    let dir = (1.0, lambda0 * l0 * l0);
    let norm = (dir.0 * dir.0 + dir.1 * dir.1).sqrt();
    let mut state = vec![0.0; params.state_dim()];
    state[n..2 * n].copy_from_slice(phi0);
    let h = match whisker {
        Whisker::Unstable => {
            state[2 * n] = eps0 * dir.0 / norm;
            state[2 * n + p] = eps0 * dir.1 / norm;
            cfg.h.abs()
        }
        Whisker::Stable => {
            state[2 * n] = 2.0 * std::f64::consts::PI - eps0 * dir.0 / norm;
            state[2 * n + p] = eps0 * dir.1 / norm;
            -cfg.h.abs()
        }
    };
    let cfg = IntegratorConfig { h, ..*cfg };
    let gap = |s: &[f64]| s[2 * n] - x_star;
    let mut t = 0.0;
    let mut prev = state.clone();
    loop {
        let g0 = gap(&state);
        step(params, &cfg, &mut state)?;
        t += h;
        if gap(&state) * g0 <= 0.0 && g0 != 0.0 {
            break;
        }
        prev.copy_from_slice(&state);
        if t.abs() > t_max {
            return Err(DynamicsError::NoCrossing { x_star, t_max });
        }
    }
    // Newton refinement inside the bracketing step, restarting from the
    // pre-crossing state each iterate so the local error stays O(tau^3).
    let mut tau = h * gap(&prev).abs() / (gap(&prev) - gap(&state)).abs().max(f64::MIN_POSITIVE);
    let sub = IntegratorConfig {
        method: Method::Yoshida4,
        h: tau,
    };
    let mut probe = prev.clone();
    for _ in 0..60 {
        probe.copy_from_slice(&prev);
        let sub = IntegratorConfig { h: tau, ..sub };
        step(params, &sub, &mut probe)?;
        let g = gap(&probe);
        if g.abs() < 1e-13 {
            break;
        }
        let xdot = probe[2 * n + p] / (l0 * l0);
        tau -= g / xdot;
    }
    Ok(CrossingRecord {
        state: probe,
        time: t - h + tau,
    })
}

/// Settings for the splitting measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplittingConfig {
    pub h: f64,
    pub method: Method,
    /// Whisker seed offset.
    pub eps0: f64,
    /// Section positions `x_star` in `(0, 2 pi)`.
    pub sections: Vec<f64>,
    /// Number of evaluation angles on `[0, 2 pi)`.
    pub alpha_count: usize,
    pub t_max: f64,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        SplittingConfig {
            h: 1e-3,
            method: Method::Yoshida4,
            eps0: 1e-8,
            sections: vec![
                std::f64::consts::FRAC_PI_2,
                std::f64::consts::PI,
                3.0 * std::f64::consts::FRAC_PI_2,
            ],
            alpha_count: 16,
            t_max: 60.0,
        }
    }
}

/// Outcome of the action-jump measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplittingMeasurement {
    pub alpha: Vec<f64>,
    pub sections: Vec<f64>,
    /// `delta_iota[section][alpha]`: action jump across the loop.
    pub delta_iota: Vec<Vec<f64>>,
    /// First-order prediction `-mu M'(alpha)` on the same grid.
    pub predicted: Vec<f64>,
    /// Max over sections and angles of `|delta_iota - predicted|`.
    pub max_error: f64,
    /// Max spread of `delta_iota(alpha)` across sections; the jump is a
    /// function of the loop angle alone up to higher order.
    pub collapse_residual: f64,
    /// Sign changes of the measured jump over the angle circle.
    pub zero_count: usize,
}

/// Measure the action jump between the unstable and stable whiskers on a set
/// of sections, parameterized by the loop angle `alpha = phi(section) -
/// omega s(x_star)`, and compare with the derivative of the splitting
/// potential `m`.
///
/// Restricted to one rotator and lead arm 1, which keeps the loop angle and
/// the section chart scalar.
pub fn measure_splitting(
    params: &ModelParams,
    m: &FourierSeries,
    cfg: &SplittingConfig,
) -> Result<SplittingMeasurement, DynamicsError> {
    if params.n() != 1 {
        return Err(DynamicsError::NotScalar(params.n()));
    }
    if (params.arms[0] - 1.0).abs() > 1e-12 {
        return Err(DynamicsError::BadLeadArm(params.arms[0]));
    }
    let omega = params.omega[0];
    let icfg = IntegratorConfig {
        method: cfg.method,
        h: cfg.h,
    };
    let tau = std::f64::consts::TAU;
    let alpha: Vec<f64> = (0..cfg.alpha_count)
        .map(|i| tau * i as f64 / cfg.alpha_count as f64)
        .collect();
    let m_prime = m.derivative(0);
    let predicted: Vec<f64> = alpha
        .iter()
        .map(|&a| -params.mu * m_prime.eval_real(&[a]))
        .collect();
    // Travel-time estimate from the linearized exit: x_0(t) ~ 4 e^t near the
    // saddle, so the seed sits at t ~ ln(x_seed / 4).
    let x_seed = cfg.eps0 / 2f64.sqrt();
    let t_exit = (x_seed / 4.0).ln();

    let mut delta_iota = Vec::with_capacity(cfg.sections.len());
    let mut max_error = 0.0f64;
    for &x_star in &cfg.sections {
        let s_star = s_of_x(x_star)?;
        let mut row = Vec::with_capacity(alpha.len());
        for &a in &alpha {
            // Target angle at the section; the loop angle fixes it.
            let phi_t = a + omega * s_star;
            let iota_u = matched_crossing(
                params, &icfg, Whisker::Unstable, phi_t, s_star - t_exit, cfg, x_star,
            )?;
            let iota_s = matched_crossing(
                params, &icfg, Whisker::Stable, phi_t, -(s_star + t_exit), cfg, x_star,
            )?;
            row.push(iota_u - iota_s);
        }
        for (d, p) in row.iter().zip(&predicted) {
            max_error = max_error.max((d - p).abs());
        }
        delta_iota.push(row);
    }
    let mut collapse_residual = 0.0f64;
    for j in 0..alpha.len() {
        let vals: Vec<f64> = delta_iota.iter().map(|row| row[j]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        collapse_residual = collapse_residual.max(hi - lo);
    }
    let first = &delta_iota[0];
    let mut zero_count = 0;
    for j in 0..first.len() {
        let next = first[(j + 1) % first.len()];
        if first[j] * next < 0.0 {
            zero_count += 1;
        }
    }
    Ok(SplittingMeasurement {
        alpha,
        sections: cfg.sections.clone(),
        delta_iota,
        predicted,
        max_error,
        collapse_residual,
        zero_count,
    })
}

/// Shoot along a whisker, adjusting the seed angle by secant iteration until
/// the rotator angle at the section equals `phi_t` (mod 2 pi). Returns the
/// action at the crossing.
fn matched_crossing(
    params: &ModelParams,
    icfg: &IntegratorConfig,
    whisker: Whisker,
    phi_t: f64,
    travel: f64,
    cfg: &SplittingConfig,
    x_star: f64,
) -> Result<f64, DynamicsError> {
    let omega = params.omega[0];
    let tau = std::f64::consts::TAU;
    let wrap = |d: f64| d - tau * (d / tau).round();
    let mut phi0 = phi_t - omega * travel;
    let shoot = |phi0: f64| -> Result<(f64, f64), DynamicsError> {
        let rec = whisker_crossing(params, icfg, whisker, &[phi0], cfg.eps0, x_star, cfg.t_max)?;
        let (iota, phi, _, _) = params.split(&rec.state);
        Ok((wrap(phi[0] - phi_t), iota[0]))
    };
    let (mut miss, mut iota) = shoot(phi0)?;
    // The crossing angle moves essentially one-to-one with the seed angle;
    // the secant slope only corrects the mu-small travel-time feedback.
    let mut slope = 1.0;
    for _ in 0..30 {
        if miss.abs() < 1e-10 {
            return Ok(iota);
        }
        let next = phi0 - miss / slope;
        let (miss2, iota2) = shoot(next)?;
        if (miss2 - miss).abs() > 1e-15 {
            slope = (miss2 - miss) / (next - phi0);
        }
        phi0 = next;
        miss = miss2;
        iota = iota2;
    }
    if miss.abs() < 1e-8 {
        return Ok(iota);
    }
    Err(DynamicsError::AngleMatchStall {
        target: phi_t,
        miss: miss.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::melnikov::{melnikov_function, QuadratureParams};
    use crate::model::PerturbationSpec;
    use crate::separatrix::psi;

    fn params(mu: f64) -> ModelParams {
        let v = PerturbationSpec::pendulum_cos(1, 2, vec![1], 1.0);
        ModelParams::new(vec![1.0, 2.0], vec![2.0], mu, v).unwrap()
    }

    fn bounded_state(params: &ModelParams) -> Vec<f64> {
        let mut s = vec![0.0; params.state_dim()];
        s[2] = 0.5; // x_0
        s[3] = 0.2; // x_1
        s
    }

    #[test]
    fn energy_drift_orders() {
        let p = params(1e-3);
        let s0 = bounded_state(&p);
        let h0 = p.hamiltonian(&s0);
        let drift_at = |method: Method, h: f64| {
            let cfg = IntegratorConfig { method, h };
            let mut s = s0.clone();
            let steps = (20.0 / h) as usize;
            let mut worst = 0.0f64;
            for _ in 0..steps {
                step(&p, &cfg, &mut s).unwrap();
                worst = worst.max((p.hamiltonian(&s) - h0).abs());
            }
            worst
        };
        let lf = drift_at(Method::Leapfrog, 1e-2);
        let lf2 = drift_at(Method::Leapfrog, 5e-3);
        let y4 = drift_at(Method::Yoshida4, 1e-2);
        let y42 = drift_at(Method::Yoshida4, 5e-3);
        assert!(lf < 1e-3, "leapfrog drift {lf}");
        assert!(y4 < 1e-7, "yoshida drift {y4}");
        let r_lf = lf / lf2;
        let r_y4 = y4 / y42;
        assert!((3.0..5.0).contains(&r_lf), "leapfrog order ratio {r_lf}");
        assert!((10.0..24.0).contains(&r_y4), "yoshida order ratio {r_y4}");
    }

    #[test]
    fn midpoint_agrees_with_splitting_methods() {
        let p = params(1e-3);
        let s0 = bounded_state(&p);
        let run = |method: Method| {
            let cfg = IntegratorConfig { method, h: 1e-4 };
            let mut s = s0.clone();
            integrate(&p, &cfg, &mut s, 2000).unwrap();
            s
        };
        let a = run(Method::Yoshida4);
        let b = run(Method::ImplicitMidpoint);
        let gap = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-9, "integrator disagreement {gap}");
    }

    #[test]
    fn unperturbed_whisker_tracks_the_loop() {
        // With mu = 0 the shot rides the pendulum loop: at the section the
        // lead momentum is y_0 = psi(x_star), and the crossing time matches
        // the chart time offset by the seed's exit time.
        let p = params(0.0);
        let cfg = IntegratorConfig {
            method: Method::Yoshida4,
            h: 1e-3,
        };
        let x_star = std::f64::consts::PI;
        let rec = whisker_crossing(&p, &cfg, Whisker::Unstable, &[0.0], 1e-8, x_star, 60.0).unwrap();
        let (_, _, x, y) = p.split(&rec.state);
        assert!((x[0] - x_star).abs() < 1e-12);
        assert!((y[0] - psi(x_star)).abs() < 1e-6, "y miss {}", y[0] - psi(x_star));
        let x_seed = 1e-8 / 2f64.sqrt();
        let expect = s_of_x(x_star).unwrap() - (x_seed / 4.0).ln();
        assert!((rec.time - expect).abs() < 1e-5, "time miss {}", rec.time - expect);

        // Stable shot, integrated backward, lands on the same loop point.
        let rec_s = whisker_crossing(&p, &cfg, Whisker::Stable, &[0.0], 1e-8, x_star, 60.0).unwrap();
        let (_, _, xs, ys) = p.split(&rec_s.state);
        assert!((xs[0] - x_star).abs() < 1e-12);
        assert!((ys[0] - psi(x_star)).abs() < 1e-6);
        assert!(rec_s.time < 0.0);
    }

    #[test]
    fn action_jump_matches_first_order_prediction() {
        let mu = 1e-3;
        let p = params(mu);
        let m = melnikov_function(&p.perturbation, &p.omega, &[], QuadratureParams::default())
            .unwrap()
            .series;
        let cfg = SplittingConfig {
            alpha_count: 8,
            sections: vec![std::f64::consts::PI],
            ..Default::default()
        };
        let out = measure_splitting(&p, &m, &cfg).unwrap();
        // Prediction error is O(mu^2) with an order-one constant.
        assert!(out.max_error < 50.0 * mu * mu, "error {}", out.max_error);
        assert_eq!(out.zero_count, 2);
    }
}

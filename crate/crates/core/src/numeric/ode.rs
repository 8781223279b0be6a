//! Adaptive Dormand-Prince 5(4) integration for the non-symplectic parts of
//! the pipeline (variational flow, Riccati field).  The symplectic schemes
//! used for long-time experiments live in [`crate::dynamics`].

/// Dormand-Prince 5(4) with PI step-size control.
///
/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` (either direction) and
/// returns the state at `t1`.  `tol` is used for both absolute and relative
/// error control.
pub fn dopri5<F>(f: F, t0: f64, t1: f64, y0: &[f64], tol: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let mut y = y0.to_vec();
    let mut t = t0;
    if (t1 - t0).abs() == 0.0 {
        return y;
    }
    let dir = (t1 - t0).signum();
    let mut h = dir * ((t1 - t0).abs() / 100.0).min(0.1).max(1e-8);
    let mut err_old: f64 = 1.0;

    while (t1 - t) * dir > 0.0 {
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let (y5, err) = dopri5_step(&f, t, &y, h, tol);
        if err <= 1.0 {
            t += h;
            y = y5;
            // PI controller (Gustafsson): gentle on smooth problems.
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_old.powf(0.4 / 5.0);
            h *= fac.clamp(0.2, 5.0);
            err_old = err.max(1e-10);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            panic!("dopri5: step size underflow at t = {t}");
        }
    }
    y
}

/// Like [`dopri5`] but records the state at each of `targets`, which must be
/// monotone in the direction of integration and start at or after `t0`.
pub fn dopri5_sampled<F>(
    f: F,
    t0: f64,
    targets: &[f64],
    y0: &[f64],
    tol: f64,
) -> Vec<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Vec<f64> + Copy,
{
    let mut out = Vec::with_capacity(targets.len());
    let mut t = t0;
    let mut y = y0.to_vec();
    for &tt in targets {
        y = dopri5(f, t, tt, &y, tol);
        t = tt;
        out.push(y.clone());
    }
    out
}

fn dopri5_step<F>(f: &F, t: f64, y: &[f64], h: f64, tol: f64) -> (Vec<f64>, f64)
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    // 5th order solution weights coincide with the last A row; E holds the
    // difference against the embedded 4th order weights.
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    let dim = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(f(t, y));
    for i in 1..7 {
        let mut yi = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[i][j];
            if a != 0.0 {
                for d in 0..dim {
                    yi[d] += h * a * kj[d];
                }
            }
        }
        k.push(f(t + C[i] * h, &yi));
    }
    let b: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    let mut y5 = y.to_vec();
    for d in 0..dim {
        let mut acc = 0.0;
        for j in 0..7 {
            acc += b[j] * k[j][d];
        }
        y5[d] += h * acc;
    }
    let mut err: f64 = 0.0;
    for d in 0..dim {
        let mut e = 0.0;
        for j in 0..7 {
            e += E[j] * k[j][d];
        }
        let sc = tol + tol * y[d].abs().max(y5[d].abs());
        err = err.max((h * e / sc).abs());
    }
    (y5, err)
}

//! High-order finite differences on uniform grids.  Used where a derivative
//! must be formed from tabulated data without re-using the defining ODE
//! (e.g. certifying the Riccati identity).

/// 8th-order first derivative of uniformly spaced samples.
///
/// Interior points use the centred 9-point stencil; near the edges the same
/// order is kept with shifted stencils.
pub fn derivative_uniform(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 9, "need at least 9 samples for the 8th-order stencil");
    // Centred 9-point weights for f' (divided by h).
    const C: [f64; 9] = [
        1.0 / 280.0,
        -4.0 / 105.0,
        1.0 / 5.0,
        -4.0 / 5.0,
        0.0,
        4.0 / 5.0,
        -1.0 / 5.0,
        4.0 / 105.0,
        -1.0 / 280.0,
    ];
    let mut out = vec![0.0; n];
    for i in 0..n {
        // Clamp the stencil inside the table; offset = i - base keeps 8th
        // order with one-sided weights computed on the fly near the edges.
        if i >= 4 && i + 4 < n {
            let mut acc = 0.0;
            for (j, &c) in C.iter().enumerate() {
                acc += c * values[i + j - 4];
            }
            out[i] = acc / h;
        } else {
            let base = if i < 4 { 0 } else { n - 9 };
            let w = shifted_weights(i as i64 - base as i64);
            let mut acc = 0.0;
            for (j, &c) in w.iter().enumerate() {
                acc += c * values[base + j];
            }
            out[i] = acc / h;
        }
    }
    out
}

/// Fornberg weights for f' at offset `z` (in units of h) on stencil 0..=8.
fn shifted_weights(z: i64) -> [f64; 9] {
    let z = z as f64;
    let x: Vec<f64> = (0..9).map(|k| k as f64).collect();
    // Fornberg's recursive algorithm for the first derivative.
    let n = 8usize;
    let m = 1usize;
    let mut c = vec![vec![0.0; m + 1]; n + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..=n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    let mut out = [0.0; 9];
    for (j, cj) in c.iter().enumerate() {
        out[j] = cj[1];
    }
    out
}

/// Richardson-extrapolated central derivative of a callable; high accuracy
/// oracle for smooth functions.
pub fn richardson_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h0: f64) -> f64 {
    let mut tab = [[0.0; 6]; 6];
    let mut h = h0;
    for i in 0..6 {
        tab[i][0] = (f(x + h) - f(x - h)) / (2.0 * h);
        let mut fac = 4.0;
        for j in 1..=i {
            tab[i][j] = (fac * tab[i][j - 1] - tab[i - 1][j - 1]) / (fac - 1.0);
            fac *= 4.0;
        }
        h *= 0.5;
    }
    tab[5][5]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_eighth_order() {
        let n = 201;
        let h = 4.0 / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| -2.0 + i as f64 * h).collect();
        let v: Vec<f64> = xs.iter().map(|&x| (2.0 * x).sin()).collect();
        let dv = derivative_uniform(&v, h);
        for (i, &x) in xs.iter().enumerate() {
            let exact = 2.0 * (2.0 * x).cos();
            assert!(
                (dv[i] - exact).abs() < 5e-11,
                "i={} err={}",
                i,
                (dv[i] - exact).abs()
            );
        }
    }

    #[test]
    fn richardson_matches() {
        let d = richardson_derivative(|x| x.exp() * x.sin(), 0.7, 0.05);
        let exact = 0.7_f64.exp() * (0.7_f64.sin() + 0.7_f64.cos());
        assert!((d - exact).abs() < 1e-12);
    }
}

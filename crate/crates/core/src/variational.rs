//! Variational flow along the separatrix and the invariant transverse
//! direction field for the two-arm chain `(1, l)`.
//!
//! Along the upper-branch orbit `x_0(t) = 4 arctan e^t` the linearised
//! equations split into the tangential pendulum block
//!
//! ```text
//! xhat' = Dpsi(x_0) xhat + yhat,    yhat' = -Dpsi(x_0) yhat
//! ```
//!
//! and the transverse block
//!
//! ```text
//! zhat' = zbarhat / l^2,    zbarhat' = (l + cos x_0) zhat .
//! ```
//!
//! The slope `lambda_u = zbarhat / zhat` of the unstable transverse direction
//! obeys the Riccati equation
//!
//! ```text
//! d lambda_u / dt = (l + cos x_0(t)) - lambda_u^2 / l^2 ,
//! ```
//!
//! integrated forward from its attracting fixed point `l sqrt(l + 1)` at
//! `t = -infinity`.  The stable slope is the reflection
//! `lambda_s(x) = -lambda_u(2 pi - x)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::numeric::fd::derivative_uniform;
use crate::numeric::ode::{dopri5, dopri5_sampled};
use crate::separatrix::{dpsi, psi, s_of_x, separatrix_orbit, Branch};

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error("the direction field requires unit leading arm, got l_0 = {0}")]
    LeadingArmNotUnit(f64),
    #[error("transverse arm must exceed the leading one, got l = {0}")]
    BadTransverseArm(f64),
    #[error("grid must contain at least {0} points")]
    GridTooSmall(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed direction-field file: {0}")]
    Parse(String),
}

/// State of the linearised flow: tangential pair and one transverse pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub xhat: f64,
    pub yhat: f64,
    pub zhat: f64,
    pub zbarhat: f64,
}

/// Integrate the variational equations along the upper-branch orbit from
/// `t0` to `t1` with local tolerance `tol`.
pub fn variational_flow(
    l: f64,
    state: VariationalState,
    t0: f64,
    t1: f64,
    tol: f64,
) -> VariationalState {
    let f = move |t: f64, v: &[f64]| -> Vec<f64> {
        let (x0, _) = separatrix_orbit(t, 1.0, Branch::Upper);
        let d = dpsi(x0);
        vec![
            d * v[0] + v[1],
            -d * v[1],
            v[3] / (l * l),
            (l + x0.cos()) * v[2],
        ]
    };
    let y = dopri5(
        f,
        t0,
        t1,
        &[state.xhat, state.yhat, state.zhat, state.zbarhat],
        tol,
    );
    VariationalState {
        xhat: y[0],
        yhat: y[1],
        zhat: y[2],
        zbarhat: y[3],
    }
}

/// Riccati right-hand side for the unstable slope.
fn riccati_rhs(l: f64, t: f64, lam: f64) -> f64 {
    let (x0, _) = separatrix_orbit(t, 1.0, Branch::Upper);
    (l + x0.cos()) - lam * lam / (l * l)
}

/// Invariant transverse directions sampled on a uniform grid in
/// `x in [delta, 2 pi - delta]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransverseDirectionField {
    pub l: f64,
    pub delta: f64,
    pub xs: Vec<f64>,
    pub lambda_u: Vec<f64>,
    pub lambda_s: Vec<f64>,
    /// Limit of the unstable slope at the fixed point `x = 0`; converges to
    /// `l sqrt(l + 1)`.
    pub lambda_u_origin: f64,
}

impl TransverseDirectionField {
    /// Integrate the Riccati field on `points` uniform grid nodes.
    ///
    /// The integration starts well before the grid from a deliberately wrong
    /// initial value; the fixed point at `t = -infinity` is attracting, so
    /// the slope locks onto the invariant branch before the grid begins.
    pub fn compute(l: f64, delta: f64, points: usize, tol: f64) -> Result<Self, VariationalError> {
        if l <= 1.0 {
            return Err(VariationalError::BadTransverseArm(l));
        }
        if points < 9 {
            return Err(VariationalError::GridTooSmall(9));
        }
        let lambda1 = (1.0 + l).sqrt() / l;
        let xs: Vec<f64> = (0..points)
            .map(|i| delta + (2.0 * PI - 2.0 * delta) * i as f64 / (points - 1) as f64)
            .collect();
        let ts: Vec<f64> = xs.iter().map(|&x| s_of_x(x).unwrap()).collect();
        let fixed = l * (l + 1.0).sqrt();
        let t_start = ts[0].min(-15.0 / lambda1) - 5.0;
        let t_pre = t_start - 20.0 / lambda1;
        let f = move |t: f64, v: &[f64]| vec![riccati_rhs(l, t, v[0])];
        // Crude start, relaxed onto the branch before t_start.
        let locked = dopri5(f, t_pre, t_start, &[1.5 * fixed], tol);
        let lambda_u_origin = locked[0];
        let samples = dopri5_sampled(f, t_start, &ts, &locked, tol);
        let lambda_u: Vec<f64> = samples.iter().map(|v| v[0]).collect();
        let lambda_s: Vec<f64> = (0..points).map(|i| -lambda_u[points - 1 - i]).collect();
        Ok(TransverseDirectionField {
            l,
            delta,
            xs,
            lambda_u,
            lambda_s,
            lambda_u_origin,
        })
    }

    /// Supremum over the grid of the defining identity
    /// `psi(x) d lambda_u / dx - (l + cos x) + lambda_u^2 / l^2`, with the
    /// `x`-derivative formed by high-order finite differences (the ODE is not
    /// reused, so this certifies the field independently).
    pub fn residual_sup(&self) -> f64 {
        let h = self.xs[1] - self.xs[0];
        let dl = derivative_uniform(&self.lambda_u, h);
        let mut worst: f64 = 0.0;
        for (i, &x) in self.xs.iter().enumerate() {
            let r = psi(x) * dl[i] - (self.l + x.cos())
                + self.lambda_u[i] * self.lambda_u[i] / (self.l * self.l);
            worst = worst.max(r.abs());
        }
        worst
    }

    /// Slope bounds `lambda_u in [l sqrt(l - 1), l sqrt(l + 1)]` — the upper
    /// end is attained at the origin, the lower near `x = pi`.
    pub fn slope_interval(&self) -> (f64, f64) {
        let lo = self.lambda_u.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.lambda_u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Angle between the unstable and stable directions `(1, lambda_u)` and
    /// `(1, lambda_s)` in the transverse plane, per grid node.
    pub fn transversality_angles(&self) -> Vec<f64> {
        self.lambda_u
            .iter()
            .zip(&self.lambda_s)
            .map(|(&lu, &ls)| {
                let dot = 1.0 + lu * ls;
                let nu = (1.0 + lu * lu).sqrt();
                let ns = (1.0 + ls * ls).sqrt();
                (dot / (nu * ns)).clamp(-1.0, 1.0).acos()
            })
            .collect()
    }

    pub fn min_transversality_angle(&self) -> f64 {
        self.transversality_angles()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Stable slope recomputed by backward Riccati integration from the
    /// attracting fixed point at `t = +infinity`; largest deviation from the
    /// reflection formula.
    pub fn stable_reflection_defect(&self, tol: f64) -> f64 {
        let l = self.l;
        let fixed = -l * (l + 1.0).sqrt();
        let lambda1 = (1.0 + l).sqrt() / l;
        let ts: Vec<f64> = self.xs.iter().map(|&x| s_of_x(x).unwrap()).collect();
        let t_end = ts[ts.len() - 1].max(15.0 / lambda1) + 5.0;
        let t_post = t_end + 20.0 / lambda1;
        let f = move |t: f64, v: &[f64]| vec![riccati_rhs(l, t, v[0])];
        let locked = dopri5(f, t_post, t_end, &[1.5 * fixed], tol);
        // Integrate backward through the grid (descending targets).
        let rev: Vec<f64> = ts.iter().rev().cloned().collect();
        let samples = dopri5_sampled(f, t_end, &rev, &locked, tol);
        let mut worst: f64 = 0.0;
        for (i, v) in samples.iter().enumerate() {
            let idx = ts.len() - 1 - i;
            worst = worst.max((v[0] - self.lambda_s[idx]).abs());
        }
        worst
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), VariationalError> {
        use std::io::Write;
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "# l = {:.17e}, delta = {:.17e}", self.l, self.delta)?;
        writeln!(f, "x,lambda_u,lambda_s")?;
        for i in 0..self.xs.len() {
            writeln!(
                f,
                "{:.17e},{:.17e},{:.17e}",
                self.xs[i], self.lambda_u[i], self.lambda_s[i]
            )?;
        }
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self, VariationalError> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| VariationalError::Parse("empty file".into()))?;
        let nums: Vec<f64> = header
            .trim_start_matches('#')
            .split(',')
            .filter_map(|p| p.split('=').nth(1))
            .filter_map(|p| p.trim().parse().ok())
            .collect();
        if nums.len() != 2 {
            return Err(VariationalError::Parse("bad header".into()));
        }
        let mut xs = Vec::new();
        let mut lu = Vec::new();
        let mut ls = Vec::new();
        for line in lines.skip(1) {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(VariationalError::Parse(format!("bad row: {line}")));
            }
            xs.push(parts[0].parse().map_err(|_| VariationalError::Parse(line.into()))?);
            lu.push(parts[1].parse().map_err(|_| VariationalError::Parse(line.into()))?);
            ls.push(parts[2].parse().map_err(|_| VariationalError::Parse(line.into()))?);
        }
        let l = nums[0];
        Ok(TransverseDirectionField {
            l,
            delta: nums[1],
            xs,
            lambda_u: lu,
            lambda_s: ls,
            lambda_u_origin: l * (l + 1.0).sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangent_direction_is_invariant() {
        // (xhat, yhat) = (psi(x_0), 0) solves the tangential block.
        let t0 = -2.0;
        let (x0, _) = separatrix_orbit(t0, 1.0, Branch::Upper);
        let s = VariationalState {
            xhat: psi(x0),
            yhat: 0.0,
            zhat: 0.0,
            zbarhat: 0.0,
        };
        let out = variational_flow(2.0, s, t0, 1.5, 1e-12);
        let (x1, _) = separatrix_orbit(1.5, 1.0, Branch::Upper);
        assert!((out.xhat - psi(x1)).abs() < 1e-10);
        assert!(out.yhat.abs() < 1e-12);
    }

    #[test]
    fn transverse_slope_tracks_riccati() {
        let l = 2.0;
        let field = TransverseDirectionField::compute(l, 0.05, 2000, 1e-12).unwrap();
        let t0 = -10.0;
        let lam0 = l * (l + 1.0).sqrt(); // converged to machine accuracy here
        let s = VariationalState {
            xhat: 0.0,
            yhat: 0.0,
            zhat: 1e-3,
            zbarhat: 1e-3 * lam0,
        };
        for &t1 in &[-2.0, 0.0, 2.0] {
            let out = variational_flow(l, s, t0, t1, 1e-12);
            let slope = out.zbarhat / out.zhat;
            let (x1, _) = separatrix_orbit(t1, 1.0, Branch::Upper);
            // Interpolate the field linearly; the grid is fine enough.
            let i = field
                .xs
                .iter()
                .position(|&x| x > x1)
                .unwrap();
            let w = (x1 - field.xs[i - 1]) / (field.xs[i] - field.xs[i - 1]);
            let lam = field.lambda_u[i - 1] * (1.0 - w) + field.lambda_u[i] * w;
            assert!((slope - lam).abs() < 1e-6, "t = {t1}: {slope} vs {lam}");
        }
    }

    #[test]
    fn riccati_residual_small() {
        let field = TransverseDirectionField::compute(2.0, 0.05, 2000, 1e-12).unwrap();
        assert!(field.residual_sup() < 1e-8, "residual {}", field.residual_sup());
    }

    #[test]
    fn origin_limit() {
        let field = TransverseDirectionField::compute(2.0, 0.05, 500, 1e-12).unwrap();
        assert!((field.lambda_u_origin - 2.0 * 3.0_f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn slope_interval_two_arms() {
        let l = 2.0;
        let field = TransverseDirectionField::compute(l, 0.02, 3000, 1e-12).unwrap();
        let (lo, hi) = field.slope_interval();
        assert!(lo >= l * (l - 1.0_f64).sqrt() - 1e-6, "lo = {lo}");
        assert!(hi <= l * (l + 1.0_f64).sqrt() + 1e-6, "hi = {hi}");
    }

    #[test]
    fn stable_branch_reflection() {
        let field = TransverseDirectionField::compute(2.0, 0.05, 400, 1e-12).unwrap();
        let defect = field.stable_reflection_defect(1e-12);
        assert!(defect < 1e-9, "defect {defect}");
    }

    #[test]
    fn transversality_bounded_below() {
        let field = TransverseDirectionField::compute(2.0, 0.05, 400, 1e-12).unwrap();
        let min = field.min_transversality_angle();
        assert!(min > 0.5, "min angle {min}");
        // Wronskian of the two unit directions never degenerates.
        for (lu, ls) in field.lambda_u.iter().zip(&field.lambda_s) {
            let w = (ls - lu).abs() / ((1.0 + lu * lu) * (1.0 + ls * ls)).sqrt();
            assert!(w > 0.3);
        }
    }

    #[test]
    fn csv_round_trip() {
        let field = TransverseDirectionField::compute(2.0, 0.05, 50, 1e-10).unwrap();
        let dir = std::env::temp_dir().join("sepsplit_field_test.csv");
        field.write_csv(&dir).unwrap();
        let back = TransverseDirectionField::read_csv(&dir).unwrap();
        assert_eq!(back.xs.len(), 50);
        for i in 0..50 {
            assert!((back.lambda_u[i] - field.lambda_u[i]).abs() < 1e-15);
        }
        std::fs::remove_file(dir).ok();
    }

    #[test]
    fn rejects_bad_arms() {
        assert!(TransverseDirectionField::compute(0.5, 0.05, 100, 1e-10).is_err());
    }
}

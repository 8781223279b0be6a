//! The unperturbed separatrix of the leading pendulum and the energy-time
//! chart used to straighten the flow near it.
//!
//! With unit leading arm the separatrix momentum is `psi(x) = 2 sin(x/2)`,
//! antiperiodic on the doubled circle `R / 4 pi Z`.  The time-like chart
//! variable is `s(x) = int_pi^x dz / psi(z) = ln tan(x/4)`, with inverse
//! `x(s) = 4 arctan e^s` and conformal factor `chi(s) = psi(x(s)) = 2 sech s`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::numeric::quad::adaptive_simpson;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("x = {0} outside the open branch (0, 2 pi)")]
    OutOfBranch(f64),
    #[error("invalid analyticity parameters: {0}")]
    BadParams(String),
}

/// Separatrix momentum profile.
pub fn psi(x: f64) -> f64 {
    2.0 * (0.5 * x).sin()
}

pub fn dpsi(x: f64) -> f64 {
    (0.5 * x).cos()
}

/// Branch of the doubled pendulum circle `R / 4 pi Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `x in (0, 2 pi)`, `y > 0`.
    Upper,
    /// `x in (2 pi, 4 pi)`, `y < 0`.
    Lower,
}

/// Time parametrisation of the separatrix: `x_0(t) = 4 arctan e^{lambda_0 t}`
/// on the upper branch, mirrored through `x -> 4 pi - x` on the lower one.
/// Returns `(x_0, y_0)` with `y_0 = psi(x_0)`.
pub fn separatrix_orbit(t: f64, lambda0: f64, branch: Branch) -> (f64, f64) {
    let x_up = 4.0 * (lambda0 * t).exp().atan();
    let x = match branch {
        Branch::Upper => x_up,
        Branch::Lower => 4.0 * PI - x_up,
    };
    (x, psi(x))
}

/// `dx_0/dt` along the orbit; equals `lambda_0 psi(x_0)` on the upper branch.
pub fn separatrix_velocity(t: f64, lambda0: f64, branch: Branch) -> f64 {
    let v = 2.0 * lambda0 / (lambda0 * t).cosh();
    match branch {
        Branch::Upper => v,
        Branch::Lower => -v,
    }
}

/// Chart time `s(x) = ln tan(x/4)` on the upper branch.
pub fn s_of_x(x: f64) -> Result<f64, ChartError> {
    if x <= 0.0 || x >= 2.0 * PI {
        return Err(ChartError::OutOfBranch(x));
    }
    Ok((0.25 * x).tan().ln())
}

/// Quadrature route to the chart time; independent of the closed form.
pub fn s_of_x_quadrature(x: f64, tol: f64) -> Result<f64, ChartError> {
    if x <= 0.0 || x >= 2.0 * PI {
        return Err(ChartError::OutOfBranch(x));
    }
    let f = |z: f64| 1.0 / psi(z);
    Ok(adaptive_simpson(&f, PI, x, tol))
}

/// Inverse chart `x(s) = 4 arctan e^s`.
pub fn x_of_s(s: f64) -> f64 {
    4.0 * s.exp().atan()
}

/// Conformal factor `chi(s) = 2 sech s`.
pub fn chi(s: f64) -> f64 {
    2.0 / s.cosh()
}

/// `chi` continued to complex `s`; poles at `s = i pi (1/2 + Z)`.
pub fn chi_complex(s: Complex64) -> Complex64 {
    Complex64::new(2.0, 0.0) / s.cosh()
}

/// Point of the energy-time chart: `(x, y)` near the separatrix mapped to
/// `(s, e)` with `e = y chi(s)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChartPoint {
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub e: f64,
}

pub fn chart_from_xy(x: f64, y: f64) -> Result<ChartPoint, ChartError> {
    let s = s_of_x(x)?;
    Ok(ChartPoint {
        x,
        y,
        s,
        e: y * chi(s),
    })
}

pub fn chart_to_xy(s: f64, e: f64) -> ChartPoint {
    let x = x_of_s(s);
    let c = chi(s);
    ChartPoint {
        x,
        y: e / c,
        s,
        e,
    }
}

/// Parameters of the complex analyticity domains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticityParams {
    pub sigma: f64,
    pub t_strip: f64,
    pub rho: f64,
    pub r: f64,
    pub t0: f64,
    pub delta: f64,
    pub kappa: f64,
    /// Constant `c` in the lower bound `delta >= c log t_strip`; checked only
    /// when positive.
    #[serde(default)]
    pub delta_log_constant: f64,
}

impl AnalyticityParams {
    pub fn validate(&self) -> Result<(), ChartError> {
        if !(self.rho > 0.0 && self.rho < 0.5 * PI) {
            return Err(ChartError::BadParams(format!(
                "rho = {} not in (0, pi/2)",
                self.rho
            )));
        }
        if self.t_strip <= 0.0 || self.t0 <= 0.0 {
            return Err(ChartError::BadParams("t_strip, t0 must be positive".into()));
        }
        if self.sigma < 0.0 || self.r < 0.0 || self.kappa < 0.0 || self.delta < 0.0 {
            return Err(ChartError::BadParams("negative width parameter".into()));
        }
        if self.delta_log_constant > 0.0 && self.t_strip > 1.0 {
            let need = self.delta_log_constant * self.t_strip.ln();
            if self.delta < need {
                return Err(ChartError::BadParams(format!(
                    "delta = {} below {} * log t_strip = {}",
                    self.delta, self.delta_log_constant, need
                )));
            }
        }
        Ok(())
    }
}

/// The complex chart domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Semi-infinite tube: two strips of width `rho` around `Im s = 0` and
    /// `Im s = pi` for `Re s <= t_strip`, joined to a full half-plane for
    /// `Re s <= t_strip - 2 t0`.
    Tube,
    /// Symmetrised tube (union with its reflection through the origin).
    TubeSym,
    /// Compact rectangle `|Re s| <= t_strip`, `|Im s| <= rho`.
    Rectangle,
}

/// Membership test, reading `Im s` modulo `2 pi`.
pub fn domain_contains(domain: Domain, s: Complex64, p: &AnalyticityParams) -> bool {
    match domain {
        Domain::Tube => tube_contains(s, p),
        Domain::TubeSym => tube_contains(s, p) || tube_contains(-s, p),
        Domain::Rectangle => {
            let im = reduce_im(s.im);
            s.re.abs() <= p.t_strip && im.abs() <= p.rho
        }
    }
}

fn tube_contains(s: Complex64, p: &AnalyticityParams) -> bool {
    if s.re <= p.t_strip - 2.0 * p.t0 {
        return true;
    }
    if s.re > p.t_strip {
        return false;
    }
    let im = reduce_im(s.im);
    im.abs() <= p.rho || (im - PI).abs() <= p.rho || (im + PI).abs() <= p.rho
}

fn reduce_im(im: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut v = im % two_pi;
    if v > PI {
        v -= two_pi;
    }
    if v < -PI {
        v += two_pi;
    }
    v
}

//! Experiment configuration: a TOML schema with documented defaults, strict
//! (unknown keys rejected) parsing, and validation against the model and
//! chart invariants.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Method;
use crate::model::{ModelError, ModelParams, PerturbationSpec};
use crate::separatrix::{AnalyticityParams, ChartError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("chart: {0}")]
    Chart(#[from] ChartError),
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Experiment selector; each maps to one subcommand of the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Exponents,
    Nonres,
    Dioph,
    Chart,
    Riccati,
    Transversality,
    Melnikov,
    Decay,
    Homological,
    Split,
}

/// A `(1 - cos x_0) cos <k, phi>` coupling term.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumTerm {
    pub k: Vec<i64>,
    pub amp: f64,
}

/// A raw `amp cos(<k, phi> + <j, x>)` term.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTerm {
    pub k: Vec<i64>,
    pub j: Vec<i64>,
    pub amp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    pub arms: Vec<f64>,
    pub omega: Vec<f64>,
    pub mu: f64,
    pub pendulum: Vec<PendulumTerm>,
    pub terms: Vec<RawTerm>,
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection {
            arms: vec![1.0, 2.0],
            omega: vec![2.0],
            mu: 1e-3,
            pendulum: vec![PendulumTerm {
                k: vec![1],
                amp: 1.0,
            }],
            terms: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericSection {
    /// Fourier truncation `|k|_inf <= k_max`.
    pub k_max: i64,
    /// Taylor degree in the transverse variables.
    pub degree: usize,
    /// Half-length of the collocation interval in `s`.
    pub t_num: f64,
    /// Chebyshev node count minus one.
    pub n_cheb: usize,
    /// Half-length of improper-integral quadrature.
    pub t_quad: f64,
    pub tol: f64,
    /// Diophantine exponent and search radius for `dioph`.
    pub dioph_tau: f64,
    pub dioph_k_max: u64,
    /// Time step and whisker settings for `split`.
    pub h: f64,
    pub method: Method,
    pub eps0: f64,
    pub sections: Vec<f64>,
    pub alpha_count: usize,
    pub t_max: f64,
    /// Sample count for chart/riccati tables.
    pub points: usize,
}

impl Default for NumericSection {
    fn default() -> Self {
        NumericSection {
            k_max: 32,
            degree: 4,
            t_num: 8.0,
            n_cheb: 160,
            t_quad: 40.0,
            tol: 1e-12,
            dioph_tau: 2.0,
            dioph_k_max: 200,
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
            points: 1001,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub csv: bool,
    pub json: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            csv: true,
            json: true,
        }
    }
}

fn default_analyticity() -> AnalyticityParams {
    AnalyticityParams {
        sigma: 0.5,
        t_strip: 10.0,
        rho: 1.5,
        r: 0.5,
        t0: 1.0,
        delta: 2.5,
        kappa: 0.5,
        delta_log_constant: 0.0,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default = "default_analyticity")]
    pub analyticity: AnalyticityParams,
    #[serde(default)]
    pub numeric: NumericSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn with_defaults(command: Command) -> Self {
        ExperimentConfig {
            command,
            params: Default::default(),
            analyticity: default_analyticity(),
            numeric: Default::default(),
            output: Default::default(),
        }
    }

    /// Build the validated model from the `params` section.
    pub fn model(&self) -> Result<ModelParams, ConfigError> {
        let n = self.params.omega.len();
        let p = self.params.arms.len();
        let mut v = PerturbationSpec::new(n, p);
        for term in &self.params.pendulum {
            if term.k.len() != n {
                return Err(invalid("params.pendulum", "k length != omega length"));
            }
            let mut e0 = vec![0; p];
            e0[0] = 1;
            let mut m0 = vec![0; p];
            m0[0] = -1;
            v.add_cos(term.k.clone(), vec![0; p], term.amp)?;
            v.add_cos(term.k.clone(), e0, -0.5 * term.amp)?;
            v.add_cos(term.k.clone(), m0, -0.5 * term.amp)?;
        }
        for term in &self.params.terms {
            if term.k.len() != n || term.j.len() != p {
                return Err(invalid("params.terms", "index length mismatch"));
            }
            v.add_cos(term.k.clone(), term.j.clone(), term.amp)?;
        }
        Ok(ModelParams::new(
            self.params.arms.clone(),
            self.params.omega.clone(),
            self.params.mu,
            v,
        )?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model()?;
        self.analyticity.validate()?;
        let num = &self.numeric;
        if num.t_num <= 0.0 || num.t_quad <= 0.0 || num.t_max <= 0.0 {
            return Err(invalid("numeric", "interval lengths must be positive"));
        }
        if num.n_cheb < 8 || num.alpha_count == 0 || num.points < 2 {
            return Err(invalid("numeric", "grid too small"));
        }
        if num.h <= 0.0 || num.eps0 <= 0.0 || num.tol <= 0.0 {
            return Err(invalid("numeric", "h, eps0, tol must be positive"));
        }
        if num.k_max < 1 || num.degree == 0 {
            return Err(invalid("numeric", "truncation must be nonzero"));
        }
        Ok(())
    }
}

/// Parse and validate a TOML experiment config.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ExperimentConfig = toml::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

//! Batch front end: one experiment per invocation, selected by subcommand,
//! parameterized by a TOML config, emitting CSV/JSON artifacts plus a run
//! manifest with content hashes.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::rc::Rc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use sepsplit::config::{load_config, Command, ConfigError, ExperimentConfig};
use sepsplit::dynamics::{measure_splitting, SplittingConfig};
use sepsplit::homological::{homological_step, CylinderFunction, OperatorSpec, StepInput};
use sepsplit::melnikov::{
    critical_point_count, fourier_decay_fit, melnikov_function, QuadratureParams,
};
use sepsplit::model::{characteristic_exponents, check_diophantine, spectral_report};
use sepsplit::numeric::cheb::ChebGrid;
use sepsplit::separatrix::{chi, s_of_x, separatrix_orbit, x_of_s, Branch};
use sepsplit::variational::TransverseDirectionField;

#[derive(Parser)]
#[command(name = "sepsplit", version, about = "Separatrix-splitting experiments")]
struct Cli {
    /// TOML experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config and SEPSPLIT_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accepted for sweep scripting; all experiments are single-threaded.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Recorded in the manifest; experiments are deterministic regardless.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand, Clone, Copy)]
enum CliCommand {
    /// Characteristic exponents, dominance and non-resonance margins.
    Exponents,
    /// Non-resonance margin of the exponent semigroup.
    Nonres,
    /// Brute-force Diophantine constant of the frequency vector.
    Dioph,
    /// Table of the homoclinic loop and its energy-time chart.
    Chart,
    /// Invariant transverse direction field along the loop.
    Riccati,
    /// Transversality angles of the stable/unstable transverse directions.
    Transversality,
    /// First-order splitting potential.
    Melnikov,
    /// Exponential decay fit of the splitting potential's Fourier modes.
    Decay,
    /// One conjugacy step of the coupled homological system.
    Homological,
    /// Direct measurement of the action jump vs. the first-order theory.
    Split,
}

impl CliCommand {
    fn to_command(self) -> Command {
        match self {
            CliCommand::Exponents => Command::Exponents,
            CliCommand::Nonres => Command::Nonres,
            CliCommand::Dioph => Command::Dioph,
            CliCommand::Chart => Command::Chart,
            CliCommand::Riccati => Command::Riccati,
            CliCommand::Transversality => Command::Transversality,
            CliCommand::Melnikov => Command::Melnikov,
            CliCommand::Decay => Command::Decay,
            CliCommand::Homological => Command::Homological,
            CliCommand::Split => Command::Split,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("{0}")]
    Module(String),
}

impl RunError {
    fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Precondition(_) => 3,
            _ => 1,
        }
    }
}

/// 17 significant digits: enough to round-trip any f64, and fixed so that
/// identical configs produce byte-identical artifacts.
fn fmt(x: f64) -> String {
    format!("{:.16e}", x)
}

struct Artifact {
    name: String,
    bytes: Vec<u8>,
}

fn json_artifact<T: Serialize>(name: &str, value: &T) -> Result<Artifact, RunError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| RunError::Module(e.to_string()))?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: name.into(),
        bytes,
    })
}

fn csv_artifact(name: &str, header: &str, rows: &[Vec<f64>]) -> Artifact {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt(x)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    Artifact {
        name: name.into(),
        bytes: text.into_bytes(),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => {}
        Err(e) => {
            let report = serde_json::json!({
                "error": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{report}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: &Cli) -> Result<(), RunError> {
    let start = Instant::now();
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::with_defaults(cli.command.to_command()),
    };
    cfg.command = cli.command.to_command();
    cfg.validate()?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("SEPSPLIT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));

    let artifacts = dispatch(&cfg)?;

    std::fs::create_dir_all(&out_dir)?;
    let mut listed = Vec::new();
    for a in &artifacts {
        std::fs::write(out_dir.join(&a.name), &a.bytes)?;
        let digest = Sha256::digest(&a.bytes);
        listed.push(serde_json::json!({
            "name": a.name,
            "bytes": a.bytes.len(),
            "sha256": format!("{digest:x}"),
        }));
    }
    let manifest = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": format!("{:?}", cfg.command),
        "seed": cli.seed,
        "threads": cli.threads,
        "config": cfg,
        "elapsed_ms": start.elapsed().as_millis() as u64,
        "artifacts": listed,
    });
    std::fs::write(
        out_dir.join("run_manifest.json"),
        serde_json::to_vec_pretty(&manifest).map_err(|e| RunError::Module(e.to_string()))? ,
    )?;
    for a in &artifacts {
        println!("wrote {}", out_dir.join(&a.name).display());
    }
    Ok(())
}

fn dispatch(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    match cfg.command {
        Command::Exponents => cmd_exponents(cfg),
        Command::Nonres => cmd_nonres(cfg),
        Command::Dioph => cmd_dioph(cfg),
        Command::Chart => cmd_chart(cfg),
        Command::Riccati => cmd_direction_field(cfg, true),
        Command::Transversality => cmd_direction_field(cfg, false),
        Command::Melnikov => cmd_melnikov(cfg),
        Command::Decay => cmd_decay(cfg),
        Command::Homological => cmd_homological(cfg),
        Command::Split => cmd_split(cfg),
    }
}

fn cmd_exponents(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let model = cfg.model()?;
    let report = spectral_report(&model);
    Ok(vec![json_artifact("exponents.json", &report)?])
}

fn cmd_nonres(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let model = cfg.model()?;
    let report = spectral_report(&model);
    Ok(vec![json_artifact("nonres.json", &report.nonresonance)?])
}

fn cmd_dioph(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let report = check_diophantine(
        &cfg.params.omega,
        cfg.numeric.dioph_tau,
        cfg.numeric.dioph_k_max,
    );
    Ok(vec![json_artifact("dioph.json", &report)?])
}

fn cmd_chart(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let t_strip = cfg.analyticity.t_strip;
    let points = cfg.numeric.points;
    let mut rows = Vec::with_capacity(points);
    let mut round_trip = 0.0f64;
    for i in 0..points {
        let t = -t_strip + 2.0 * t_strip * i as f64 / (points - 1) as f64;
        let (x, y) = separatrix_orbit(t, 1.0, Branch::Upper);
        let s = s_of_x(x).map_err(|e| RunError::Module(e.to_string()))?;
        rows.push(vec![t, x, y, s, chi(s)]);
        round_trip = round_trip.max((s_of_x(x_of_s(t)).unwrap_or(f64::NAN) - t).abs());
    }
    let s_pi = s_of_x(std::f64::consts::PI).map_err(|e| RunError::Module(e.to_string()))?;
    let report = serde_json::json!({
        "s_at_pi": s_pi,
        "round_trip_max_error": round_trip,
        "t_strip": t_strip,
        "points": points,
    });
    Ok(vec![
        csv_artifact("chart.csv", "t,x,y,s,chi", &rows),
        json_artifact("chart.json", &report)?,
    ])
}

fn cmd_direction_field(cfg: &ExperimentConfig, with_table: bool) -> Result<Vec<Artifact>, RunError> {
    if cfg.params.arms.len() < 2 {
        return Err(RunError::Precondition(
            "direction field needs at least one transverse arm".into(),
        ));
    }
    let l = cfg.params.arms[1];
    let field = TransverseDirectionField::compute(l, 0.05, cfg.numeric.points, 1e-10)
        .map_err(|e| RunError::Module(e.to_string()))?;
    let (lo, hi) = field.slope_interval();
    let report = serde_json::json!({
        "arm": l,
        "riccati_residual_sup": field.residual_sup(),
        "slope_interval": [lo, hi],
        "min_transversality_angle": field.min_transversality_angle(),
    });
    let mut artifacts = Vec::new();
    if with_table {
        let rows: Vec<Vec<f64>> = (0..field.xs.len())
            .map(|i| vec![field.xs[i], field.lambda_u[i], field.lambda_s[i]])
            .collect();
        artifacts.push(csv_artifact("riccati.csv", "x,lambda_u,lambda_s", &rows));
        artifacts.push(json_artifact("riccati.json", &report)?);
    } else {
        artifacts.push(json_artifact("transversality.json", &report)?);
    }
    Ok(artifacts)
}

fn quad_params(cfg: &ExperimentConfig) -> QuadratureParams {
    QuadratureParams {
        t_max: cfg.numeric.t_quad,
        ..Default::default()
    }
}

fn splitting_series(
    cfg: &ExperimentConfig,
    alpha_grid: &[Vec<f64>],
) -> Result<sepsplit::melnikov::MelnikovResult, RunError> {
    let model = cfg.model()?;
    melnikov_function(&model.perturbation, &model.omega, alpha_grid, quad_params(cfg)).map_err(
        |e| match e {
            sepsplit::melnikov::MelnikovError::ZeroSectionDefect(_) => {
                RunError::Precondition(e.to_string())
            }
            other => RunError::Module(other.to_string()),
        },
    )
}

fn alpha_line(cfg: &ExperimentConfig) -> Vec<Vec<f64>> {
    let n = cfg.params.omega.len();
    (0..cfg.numeric.alpha_count)
        .map(|i| {
            let mut a = vec![0.0; n];
            a[0] = std::f64::consts::TAU * i as f64 / cfg.numeric.alpha_count as f64;
            a
        })
        .collect()
}

fn cmd_melnikov(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let grid = alpha_line(cfg);
    let result = splitting_series(cfg, &grid)?;
    let rows: Vec<Vec<f64>> = result
        .samples
        .iter()
        .map(|(a, direct)| vec![a[0], *direct, result.series.eval_real(a)])
        .collect();
    let modes: Vec<serde_json::Value> = result
        .series
        .coeffs
        .iter()
        .map(|(k, c)| serde_json::json!({"k": k, "re": c.re, "im": c.im}))
        .collect();
    let report = serde_json::json!({
        "modes": modes,
        "reconstruction_defect": result.reconstruction_defect(),
        "critical_points": critical_point_count(&result.series, 4096),
    });
    Ok(vec![
        csv_artifact("melnikov.csv", "alpha,direct,series", &rows),
        json_artifact("melnikov.json", &report)?,
    ])
}

fn cmd_decay(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let result = splitting_series(cfg, &[])?;
    // With one rotator the |<k, omega>| and |k|_1 rates alias; pinning the
    // lattice rate at zero puts the whole decay into rho_hat.
    let sigma_ref = if cfg.params.omega.len() > 1 {
        cfg.analyticity.sigma
    } else {
        0.0
    };
    let fit = fourier_decay_fit(&result.series, &cfg.params.omega, sigma_ref)
        .map_err(|e| RunError::Module(e.to_string()))?;
    let rows: Vec<Vec<f64>> = result
        .series
        .coeffs
        .iter()
        .map(|(k, c)| {
            let kw: f64 = k
                .iter()
                .zip(&cfg.params.omega)
                .map(|(&ki, &w)| ki as f64 * w)
                .sum();
            let k1: f64 = k.iter().map(|&ki| ki.abs() as f64).sum();
            vec![k1, kw.abs(), c.norm()]
        })
        .collect();
    Ok(vec![
        csv_artifact("decay.csv", "k1,kw,abs_c", &rows),
        json_artifact("decay.json", &fit)?,
    ])
}

fn cmd_homological(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let exps = characteristic_exponents(&cfg.params.arms);
    let n = cfg.params.omega.len();
    let m = cfg.params.arms.len() - 1;
    let grid = Rc::new(ChebGrid::new(cfg.numeric.n_cheb, cfg.numeric.t_num));
    let spec = OperatorSpec::constant(exps[0], cfg.params.omega.clone(), exps[1..].to_vec());
    spec.validate(cfg.numeric.n_cheb + 1)
        .map_err(|e| RunError::Precondition(e.to_string()))?;
    // Demonstration forcing f = cos phi_1, g = 0: the step is exactly
    // solvable and every residual should sit at rounding level.
    let mut f = CylinderFunction::zero(n, m, grid.clone());
    let mut k = vec![0i64; n];
    k[0] = 1;
    f.add_constant((k.clone(), vec![0; m]), Complex64::new(0.5, 0.0));
    k[0] = -1;
    f.add_constant((k, vec![0; m]), Complex64::new(0.5, 0.0));
    let dim = n + 1 + m;
    let input = StepInput {
        spec,
        quad: nalgebra::DMatrix::identity(dim, dim),
        f,
        g_angle: vec![CylinderFunction::zero(n, m, grid.clone()); n],
        g_energy: CylinderFunction::zero(n, m, grid.clone()),
        g_transverse: vec![CylinderFunction::zero(n, m, grid.clone()); m],
        opts: Default::default(),
    };
    let sol = homological_step(&input).map_err(|e| RunError::Module(e.to_string()))?;
    let residuals: BTreeMap<&str, f64> = sol
        .residuals
        .iter()
        .map(|(k, &v)| (k.as_str(), v))
        .collect();
    let report = serde_json::json!({
        "lambda0": exps[0],
        "transverse_rates": &exps[1..],
        "grid": {"n_cheb": cfg.numeric.n_cheb, "t_num": cfg.numeric.t_num},
        "c_hat": sol.c_hat,
        "lambda0_hat": sol.lambda0_hat,
        "xi_hat": sol.xi_hat.as_slice(),
        "residuals": residuals,
    });
    Ok(vec![json_artifact("homological.json", &report)?])
}

fn cmd_split(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let model = cfg.model()?;
    let series = splitting_series(cfg, &[])?.series;
    let scfg = SplittingConfig {
        h: cfg.numeric.h,
        method: cfg.numeric.method,
        eps0: cfg.numeric.eps0,
        sections: cfg.numeric.sections.clone(),
        alpha_count: cfg.numeric.alpha_count,
        t_max: cfg.numeric.t_max,
    };
    let out = measure_splitting(&model, &series, &scfg)
        .map_err(|e| RunError::Module(e.to_string()))?;
    let mut rows = Vec::new();
    for (si, &x_star) in out.sections.iter().enumerate() {
        for (ai, &a) in out.alpha.iter().enumerate() {
            rows.push(vec![x_star, a, out.delta_iota[si][ai], out.predicted[ai]]);
        }
    }
    Ok(vec![
        csv_artifact("split.csv", "section,alpha,delta_iota,predicted", &rows),
        json_artifact("split.json", &out)?,
    ])
}

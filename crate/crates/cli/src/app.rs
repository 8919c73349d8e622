//! Command dispatch and exit-status mapping.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use mimo_spatia::covmodel::{self, CorrelationModelSpec, Shadowing};
use mimo_spatia::estimator::{self, PilotScenario};
use mimo_spatia::linalg::{self, CMatrix, HermitianMatrix, C64};
use mimo_spatia::scenarios::{self, ExperimentConfig};

use crate::config::{self, ConfigError};
use crate::output::{self, OutputFile, RunManifest};

pub const THREADS_ENV: &str = "MIMO_SPATIA_THREADS";

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "I/O failure: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<mimo_spatia::Error> for Failure {
    fn from(e: mimo_spatia::Error) -> Self {
        match e {
            mimo_spatia::Error::InvalidParameter { .. } => Failure::Config(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<linalg::LinalgError> for Failure {
    fn from(e: linalg::LinalgError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

/// `--threads`, else `MIMO_SPATIA_THREADS`, else rayon's default.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Failure::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        _ => Ok(None),
    }
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

/// Runs `cfg` and writes one CSV per result table plus `manifest.json` into `out_dir`.
pub fn dispatch(cfg: &ExperimentConfig, config_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let started = unix_ms();
    let tables = scenarios::run(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Failure::Io(format!("{}: {e}", out_dir.display())))?;
    let echo = config::to_toml(cfg);
    let extra = vec![("config".to_string(), echo)];
    let mut written = Vec::new();
    let mut outputs = Vec::new();
    for table in &tables {
        let path = out_dir.join(format!("{}.csv", table.name));
        let io_err = |e: std::io::Error| Failure::Io(format!("{}: {e}", path.display()));
        let file = fs::File::create(&path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        output::write_csv(&mut w, table, &extra).map_err(io_err)?;
        std::io::Write::flush(&mut w).map_err(io_err)?;
        outputs.push(OutputFile { file: format!("{}.csv", table.name), rows: table.rows.len(), columns: table.header() });
        written.push(path);
    }
    let manifest = RunManifest {
        tool: "mimo-spatia".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_path: config_path.display().to_string(),
        config: serde_json::to_value(cfg).map_err(|e| Failure::Numerical(e.to_string()))?,
        master_seed: cfg.monte_carlo.seed,
        threads: rayon::current_num_threads(),
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        outputs,
    };
    manifest.write(out_dir).map_err(|e| Failure::Io(format!("{}: {e}", out_dir.join("manifest.json").display())))?;
    written.push(out_dir.join("manifest.json"));
    Ok(written)
}

/// `run` subcommand minus thread-pool setup.
pub fn run_config_file(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<Vec<PathBuf>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = config::parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        cfg.monte_carlo.seed = seed;
    }
    if let Some(out) = out {
        cfg.output.dir = out.display().to_string();
    }
    let out_dir = PathBuf::from(&cfg.output.dir);
    dispatch(&cfg, path, &out_dir)
}

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, expected: f64, tol: f64) -> Check {
    let err = (value - expected).abs();
    Check { name, passed: err <= tol, detail: format!("got {value:.17e}, want {expected:.17e}, |err| {err:.1e} <= {tol:.0e}") }
}

/// Analytic oracles: closed-form values the numerics must reproduce.
pub fn selftest() -> Result<Vec<Check>, Failure> {
    let mut checks = Vec::new();

    let iid = |beta: f64| CorrelationModelSpec::uncorrelated(100, beta).build(Shadowing::None);
    for (name, interferer_db, expected) in [
        ("identity covariance, equal SNR: NMSE = 11/21", 10.0, 11.0 / 21.0),
        ("identity covariance, 10 dB weaker: NMSE = 1/6", 0.0, 1.0 / 6.0),
        ("identity covariance, 20 dB weaker: NMSE = 1.1/11.1", -10.0, 1.1 / 11.1),
    ] {
        let s = PilotScenario::from_snr(vec![(iid(1.0)?, 10.0), (iid(1.0)?, interferer_db)], 0)?;
        checks.push(check(name, estimator::nmse_closed_form(&s)?, expected, 1e-14));
    }

    let s = PilotScenario::from_snr(vec![(iid(1.0)?, 10.0)], 0)?;
    checks.push(check("single UE, identity covariance, 10 dB: NMSE = 1/11", estimator::nmse_closed_form(&s)?, 1.0 / 11.0, 1e-15));

    let upa = CorrelationModelSpec::upa(2, 2, 0.5, 0.0, 0.0, 0.0, 1.0).build(Shadowing::None)?;
    let spectrum = covmodel::eigen_spectrum(&upa)?;
    let want = [2.25, 0.75, 0.75, 0.25];
    let err = spectrum.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(check("2x2 UPA, r = 0.5: eigenvalues (1 +- r)(1 +- r)", err, 0.0, 1e-12));

    let ula = CorrelationModelSpec::ula(2, 0.5, 0.7, 0.0, 1.0);
    checks.push(check("M = 2, r = 0.5: hardening variance (1 + r^2) / 2", covmodel::hardening_variance(&ula.build(Shadowing::None)?)?, 0.625, 1e-15));
    checks.push(check("M = 2, r = 0.5: structured hardening path", ula.hardening_variance_fast(&Shadowing::None)?, 0.625, 1e-15));

    for m in [16, 100, 400] {
        let ula = CorrelationModelSpec::ula(m, 1.0, 0.3, 0.0, 1.0).hardening_variance_fast(&Shadowing::None)?;
        let upa = CorrelationModelSpec::upa(4, m / 4, 1.0, 0.3, 0.2, 0.0, 1.0).hardening_variance_fast(&Shadowing::None)?;
        checks.push(check("r = 1: hardening variance is 1 (ULA)", ula, 1.0, 0.0));
        checks.push(check("r = 1: hardening variance is 1 (UPA)", upa, 1.0, 0.0));
    }

    let v = CorrelationModelSpec::uncorrelated(100, 3.0).hardening_variance_fast(&Shadowing::None)?;
    checks.push(check("uncorrelated M = 100: hardening variance 1/M", v, 0.01, 1e-17));

    let a = CMatrix::from_fn(12, 12, |i, j| C64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 - 1.0));
    let h = HermitianMatrix::symmetrize(&a)?;
    let eig = linalg::hermitian_eig(&h)?;
    let err = eig.reconstruct().sub(h.as_matrix())?.frobenius_norm() / h.as_matrix().frobenius_norm();
    checks.push(check("Jacobi: V diag(l) V^H reconstructs A", err, 0.0, 1e-12));

    let cov = CorrelationModelSpec::ula(32, 0.7, 0.4, 0.0, 1.0).build(Shadowing::None)?;
    let other = CorrelationModelSpec::ula(32, 0.7, -1.1, 0.0, 1.0).build(Shadowing::None)?;
    let s = PilotScenario::from_snr(vec![(cov.clone(), 10.0), (other, 0.0)], 0)?;
    let q = estimator::build_quantities(&s)?;
    let split = q.psi.add(&q.c)?.sub(s.ues()[0].matrix())?.as_matrix().frobenius_norm();
    checks.push(check("R = Psi + C", split / s.ues()[0].matrix().as_matrix().frobenius_norm(), 0.0, 1e-12));

    Ok(checks)
}

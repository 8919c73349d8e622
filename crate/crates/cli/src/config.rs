//! Config file grammar.
//!
//! A TOML document with up to five tables. Only `experiment.kind` is
//! required; everything else falls back to the defaults of that kind.
//!
//! ```toml
//! [experiment]
//! kind = "table1"          # spectrum | hardening_sweep | nmse_vs_param | nmse_vs_snr | contamination | table1
//! name = "optional label"
//!
//! [model]
//! array = "ula"            # ula | upa | uncorrelated
//! m = 100
//! m_h = 10                 # UPA only, together with m_v
//! m_v = 10
//! r = 0.5
//! theta_deg = 30.0         # [-180, 180)
//! phi_deg = 30.0           # [-90, 90)
//! sigma_db = 4.0
//! beta = 1.0
//! snr_db = 10.0            # desired UE
//!
//! [sweep]
//! axis = "interferer_snr_db"   # r | sigma_db | snr_db | m | interferer_snr_db
//! values = [10.0, 0.0, -10.0]
//! arrays = ["ula", "upa", "uncorrelated"]
//! series_axis = "r"        # optional second axis
//! series_values = [0.0, 1.0]
//! hardening_m = [4, 9, 16] # table1 only
//!
//! [monte_carlo]
//! draws = 1000
//! seed = 0
//! azimuth_points = 64
//! upa_azimuth_points = 16
//! upa_elevation_points = 16
//!
//! [output]
//! dir = "out"
//! ```

use mimo_spatia::covmodel::ArrayKind;
use mimo_spatia::scenarios::{ExperimentConfig, ExperimentKind, SweepAxis};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    monte_carlo: RawMonteCarlo,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    kind: ExperimentKind,
    name: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawModel {
    array: Option<ArrayKind>,
    m: Option<usize>,
    m_h: Option<usize>,
    m_v: Option<usize>,
    r: Option<f64>,
    theta_deg: Option<f64>,
    phi_deg: Option<f64>,
    sigma_db: Option<f64>,
    beta: Option<f64>,
    snr_db: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: Option<SweepAxis>,
    values: Option<Vec<f64>>,
    arrays: Option<Vec<ArrayKind>>,
    series_axis: Option<SweepAxis>,
    series_values: Option<Vec<f64>>,
    hardening_m: Option<Vec<usize>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMonteCarlo {
    draws: Option<usize>,
    seed: Option<u64>,
    azimuth_points: Option<usize>,
    upa_azimuth_points: Option<usize>,
    upa_elevation_points: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses, fills defaults for the experiment kind and validates.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        ConfigError::Parse { line, column, message: e.message().to_string() }
    })?;
    let kind = raw.experiment.kind;
    let mut cfg = ExperimentConfig::defaults(kind);
    set(&mut cfg.experiment.name, raw.experiment.name);

    let (m, r) = (&mut cfg.model, raw.model);
    set(&mut m.array, r.array);
    set(&mut m.m, r.m);
    m.m_h = r.m_h;
    m.m_v = r.m_v;
    set(&mut m.r, r.r);
    set(&mut m.theta_deg, r.theta_deg);
    set(&mut m.phi_deg, r.phi_deg);
    set(&mut m.sigma_db, r.sigma_db);
    set(&mut m.beta, r.beta);
    set(&mut m.snr_db, r.snr_db);

    let (s, r) = (&mut cfg.sweep, raw.sweep);
    if let Some(axis) = r.axis {
        if axis != s.axis && r.values.is_none() {
            return Err(ConfigError::Invalid {
                key: "sweep.values".into(),
                message: format!("required when sweep.axis is `{}`", axis.name()),
            });
        }
        s.axis = axis;
    }
    set(&mut s.values, r.values);
    set(&mut s.arrays, r.arrays);
    if r.series_axis.is_some() || r.series_values.is_some() {
        s.series_axis = r.series_axis;
        s.series_values = r.series_values.unwrap_or_default();
    }
    set(&mut s.hardening_m, r.hardening_m);

    let (mc, r) = (&mut cfg.monte_carlo, raw.monte_carlo);
    set(&mut mc.draws, r.draws);
    set(&mut mc.seed, r.seed);
    set(&mut mc.azimuth_points, r.azimuth_points);
    set(&mut mc.upa_azimuth_points, r.upa_azimuth_points);
    set(&mut mc.upa_elevation_points, r.upa_elevation_points);
    set(&mut cfg.output.dir, raw.output.dir);

    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    cfg.validate().map_err(|e| match e {
        mimo_spatia::Error::InvalidParameter { key, message } => ConfigError::Invalid { key, message },
        other => ConfigError::Invalid { key: "config".into(), message: other.to_string() },
    })
}

/// Resolved config as a config file; parses back to an equal config.
pub fn to_toml(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("config types always serialize")
}

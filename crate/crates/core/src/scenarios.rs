//! Deterministic experiment sweeps.
//!
//! Each `run_*` function turns an [`ExperimentConfig`] into one or more
//! [`ResultTable`]s. Sweep point `i` draws from the stream seeded by
//! `derive_seed(master_seed, kind, i)`, and sample `j` within it from
//! `derive_seed(point_seed, "sample", j)`, so output does not depend on
//! scheduling or thread count.
//!
//! Angle averaging pairs shadowing draws with grid angles: a point with
//! `draws` realizations and a grid of `G` angles evaluates
//! `G * ceil(draws / G)` samples, sample `j` at grid angle `j % G`. Every
//! angle gets the same weight and every sample its own shadowing draw.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::covmodel::{self, ArrayGeometry, ArrayKind, CorrelationModelSpec, CovarianceMatrix, Shadowing};
use crate::error::{Error, Result};
use crate::estimator::{db_to_linear, PilotScenario, Whitened};
use crate::rng::{self, derive_seed};

/// Channel-hardening target for the antenna-count threshold.
pub const HARDENING_TARGET: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Spectrum,
    HardeningSweep,
    NmseVsParam,
    NmseVsSnr,
    Contamination,
    Table1,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::HardeningSweep => "hardening_sweep",
            ExperimentKind::NmseVsParam => "nmse_vs_param",
            ExperimentKind::NmseVsSnr => "nmse_vs_snr",
            ExperimentKind::Contamination => "contamination",
            ExperimentKind::Table1 => "table1",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    R,
    SigmaDb,
    SnrDb,
    M,
    InterfererSnrDb,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::R => "r",
            SweepAxis::SigmaDb => "sigma_db",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::M => "m",
            SweepAxis::InterfererSnrDb => "interferer_snr_db",
        }
    }
}

/// Model parameters shared by every series. Angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub array: ArrayKind,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_v: Option<usize>,
    pub r: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub sigma_db: f64,
    pub beta: f64,
    /// Effective SNR of the desired UE.
    pub snr_db: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            array: ArrayKind::Ula,
            m: 100,
            m_h: None,
            m_v: None,
            r: 0.5,
            theta_deg: 30.0,
            phi_deg: 30.0,
            sigma_db: 0.0,
            beta: 1.0,
            snr_db: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub arrays: Vec<ArrayKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_axis: Option<SweepAxis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series_values: Vec<f64>,
    /// Antenna-count grid for the hardening threshold of the summary table.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hardening_m: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    /// Shadowing realizations per sweep point when `sigma_db > 0`.
    pub draws: usize,
    pub seed: u64,
    pub azimuth_points: usize,
    pub upa_azimuth_points: usize,
    pub upa_elevation_points: usize,
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self { draws: 1000, seed: 0, azimuth_points: 64, upa_azimuth_points: 16, upa_elevation_points: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// A fully resolved experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelParams,
    pub sweep: SweepSpec,
    pub monte_carlo: MonteCarloSpec,
    pub output: OutputSpec,
}

/// `k^2` for `k` in `from..=to`.
pub fn square_grid(from: usize, to: usize) -> Vec<usize> {
    (from..=to).map(|k| k * k).collect()
}

impl SweepSpec {
    /// Sweep used when a config leaves the section out.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let all = vec![ArrayKind::Ula, ArrayKind::Upa, ArrayKind::Uncorrelated];
        let base = |axis, values: Vec<f64>| SweepSpec {
            axis,
            values,
            arrays: all.clone(),
            series_axis: None,
            series_values: Vec::new(),
            hardening_m: Vec::new(),
        };
        match kind {
            ExperimentKind::Spectrum => base(SweepAxis::R, vec![0.0, 0.25, 0.5, 0.75, 0.9]),
            ExperimentKind::HardeningSweep => {
                base(SweepAxis::M, square_grid(2, 30).into_iter().map(|m| m as f64).collect())
            }
            ExperimentKind::NmseVsParam => base(SweepAxis::R, (0..=20).map(|i| i as f64 * 0.05).collect()),
            ExperimentKind::NmseVsSnr => SweepSpec {
                series_axis: Some(SweepAxis::M),
                series_values: vec![10.0, 50.0, 100.0],
                ..base(SweepAxis::SnrDb, (-10..=20).step_by(2).map(f64::from).collect())
            },
            ExperimentKind::Contamination => base(SweepAxis::InterfererSnrDb, vec![10.0, 0.0, -10.0]),
            ExperimentKind::Table1 => SweepSpec {
                hardening_m: square_grid(2, 40),
                ..base(SweepAxis::InterfererSnrDb, vec![10.0, 0.0, -10.0])
            },
        }
    }
}

fn check_axis_value(axis: SweepAxis, v: f64, key: &str) -> Result<()> {
    let ok = match axis {
        SweepAxis::R => (0.0..=1.0).contains(&v),
        SweepAxis::SigmaDb => v >= 0.0 && v.is_finite(),
        SweepAxis::SnrDb | SweepAxis::InterfererSnrDb => v.is_finite(),
        SweepAxis::M => v >= 1.0 && v.fract() == 0.0 && v <= 1e5,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(key, format!("{v} is outside the domain of `{}`", axis.name())))
    }
}

impl ExperimentConfig {
    /// Config with every section at its default for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut model = ModelParams::default();
        if kind == ExperimentKind::Table1 {
            model.sigma_db = 4.0;
        }
        Self {
            experiment: ExperimentSection { kind, name: String::new() },
            model,
            sweep: SweepSpec::default_for(kind),
            monte_carlo: MonteCarloSpec::default(),
            output: OutputSpec::default(),
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        self.experiment.kind
    }

    /// Checks every domain constraint; errors carry the offending key path.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        match (m.m_h, m.m_v) {
            (Some(h), Some(v)) if h * v != m.m => {
                return Err(Error::invalid("model.m_h", format!("m_h * m_v = {} but m = {}", h * v, m.m)));
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::invalid("model.m_h", "give both m_h and m_v, or neither"));
            }
            _ => {}
        }
        let spec =self.desired_spec(m.array, m.m).map_err(|e| e.within("model"))?;
        spec.validate().map_err(|e| match e {
            Error::InvalidParameter { key, message } => {
                let key = match key.as_str() {
                    "theta" => "theta_deg".to_string(),
                    "phi" => "phi_deg".to_string(),
                    _ => key,
                };
                Error::InvalidParameter { key: format!("model.{key}"), message }
            }
            other => other,
        })?;
        if !m.snr_db.is_finite() {
            return Err(Error::invalid("model.snr_db", "must be finite"));
        }
        let s = &self.sweep;
        if s.values.is_empty() {
            return Err(Error::invalid("sweep.values", "sweep needs at least one value"));
        }
        if s.arrays.is_empty() {
            return Err(Error::invalid("sweep.arrays", "need at least one array"));
        }
        let allowed: &[SweepAxis] = match self.kind() {
            ExperimentKind::Spectrum => &[SweepAxis::R, SweepAxis::SigmaDb],
            ExperimentKind::HardeningSweep => &[SweepAxis::M],
            ExperimentKind::NmseVsParam => &[SweepAxis::R, SweepAxis::SigmaDb, SweepAxis::M],
            ExperimentKind::NmseVsSnr => &[SweepAxis::SnrDb],
            ExperimentKind::Contamination | ExperimentKind::Table1 => &[SweepAxis::InterfererSnrDb],
        };
        if !allowed.contains(&s.axis) {
            return Err(Error::invalid(
                "sweep.axis",
                format!("`{}` cannot be swept by a {} experiment", s.axis.name(), self.kind().tag()),
            ));
        }
        for (i, &v) in s.values.iter().enumerate() {
            check_axis_value(s.axis, v, &format!("sweep.values[{i}]"))?;
        }
        if let Some(axis) = s.series_axis {
            if axis == s.axis {
                return Err(Error::invalid("sweep.series_axis", "must differ from sweep.axis"));
            }
            if matches!(axis, SweepAxis::InterfererSnrDb) {
                return Err(Error::invalid("sweep.series_axis", "interferer SNR cannot be a series axis"));
            }
            if s.series_values.is_empty() {
                return Err(Error::invalid("sweep.series_values", "series axis given without values"));
            }
            for (i, &v) in s.series_values.iter().enumerate() {
                check_axis_value(axis, v, &format!("sweep.series_values[{i}]"))?;
            }
        } else if !s.series_values.is_empty() {
            return Err(Error::invalid("sweep.series_values", "values given without sweep.series_axis"));
        }
        if self.kind() == ExperimentKind::Table1 && s.hardening_m.is_empty() {
            return Err(Error::invalid("sweep.hardening_m", "summary table needs an antenna-count grid"));
        }
        if s.hardening_m.contains(&0) {
            return Err(Error::invalid("sweep.hardening_m", "antenna counts must be >= 1"));
        }
        let mc = &self.monte_carlo;
        for (key, v) in [
            ("monte_carlo.draws", mc.draws),
            ("monte_carlo.azimuth_points", mc.azimuth_points),
            ("monte_carlo.upa_azimuth_points", mc.upa_azimuth_points),
            ("monte_carlo.upa_elevation_points", mc.upa_elevation_points),
        ] {
            if v == 0 {
                return Err(Error::invalid(key, "must be >= 1"));
            }
        }
        Ok(())
    }

    /// Desired-UE model of `kind` with `m` antennas. Honors explicit
    /// `m_h`/`m_v` when they multiply to `m`.
    fn desired_spec(&self, kind: ArrayKind, m: usize) -> Result<CorrelationModelSpec> {
        let p = &self.model;
        let geometry = match (kind, p.m_h, p.m_v) {
            (ArrayKind::Upa, Some(h), Some(v)) if m == p.m => {
                if h * v != m {
                    return Err(Error::invalid("m_h", format!("m_h * m_v = {} but m = {m}", h * v)));
                }
                ArrayGeometry::Upa { m_h: h, m_v: v }
            }
            (ArrayKind::Upa, Some(_), None) | (ArrayKind::Upa, None, Some(_)) => {
                return Err(Error::invalid("m_h", "give both m_h and m_v, or neither"));
            }
            _ => ArrayGeometry::with_antennas(kind, m),
        };
        Ok(CorrelationModelSpec {
            geometry,
            r: p.r,
            theta: p.theta_deg.to_radians(),
            phi: p.phi_deg.to_radians(),
            sigma_db: p.sigma_db,
            beta: p.beta,
        })
    }
}

/// Column-named numeric table with optional leading text label column.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub label_column: Option<String>,
    pub labels: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub provenance: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(name: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            name: name.into(),
            label_column: None,
            labels: Vec::new(),
            columns,
            rows: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn push_labeled(&mut self, label: impl Into<String>, row: Vec<f64>) {
        self.labels.push(label.into());
        self.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn row_by_label(&self, label: &str) -> Option<&[f64]> {
        let idx = self.labels.iter().position(|l| l == label)?;
        Some(&self.rows[idx])
    }

    /// Header names including the label column.
    pub fn header(&self) -> Vec<String> {
        self.label_column.iter().cloned().chain(self.columns.iter().cloned()).collect()
    }

    /// Rectangular, unique column names, label count consistent.
    pub fn check_shape(&self) -> Result<()> {
        let header = self.header();
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = header.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Scenario(format!("table `{}` repeats column `{dup}`", self.name)));
        }
        if self.rows.iter().any(|r| r.len() != self.columns.len()) {
            return Err(Error::Scenario(format!("table `{}` is not rectangular", self.name)));
        }
        if self.label_column.is_some() && self.labels.len() != self.rows.len() {
            return Err(Error::Scenario(format!("table `{}` has {} labels for {} rows", self.name, self.labels.len(), self.rows.len())));
        }
        Ok(())
    }

    fn stamp(mut self, cfg: &ExperimentConfig) -> Self {
        self.provenance = vec![
            ("experiment".into(), cfg.kind().tag().into()),
            ("master_seed".into(), cfg.monte_carlo.seed.to_string()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ];
        self
    }
}

/// Runs whatever experiment `cfg` describes.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>> {
    cfg.validate()?;
    let tables = match cfg.kind() {
        ExperimentKind::Spectrum => vec![run_spectrum(cfg)?],
        ExperimentKind::HardeningSweep => run_hardening_sweep(cfg)?,
        ExperimentKind::NmseVsParam | ExperimentKind::NmseVsSnr => vec![run_nmse_sweep(cfg)?],
        ExperimentKind::Contamination => run_contamination(cfg)?,
        ExperimentKind::Table1 => vec![run_table1(cfg)?],
    };
    let tables: Vec<ResultTable> = tables.into_iter().map(|t| t.stamp(cfg)).collect();
    for t in &tables {
        t.check_shape()?;
    }
    Ok(tables)
}

fn with_axis(spec: CorrelationModelSpec, axis: SweepAxis, v: f64) -> CorrelationModelSpec {
    match axis {
        SweepAxis::R => CorrelationModelSpec { r: v, ..spec },
        SweepAxis::SigmaDb => CorrelationModelSpec { sigma_db: v, ..spec },
        _ => spec,
    }
}

fn point_stream(cfg: &ExperimentConfig, point: usize, sample: usize) -> rng::Stream {
    let point_seed = derive_seed(cfg.monte_carlo.seed, cfg.kind().tag(), point as u64);
    rng::stream(derive_seed(point_seed, "sample", sample as u64))
}

/// Uniform angle grid a UE of `kind` is averaged over, in radians.
pub fn angle_grid(kind: ArrayKind, mc: &MonteCarloSpec) -> Vec<(f64, f64)> {
    let uniform = |n: usize, lo: f64, width: f64| (0..n).map(move |k| lo + width * k as f64 / n as f64);
    match kind {
        ArrayKind::Upa => uniform(mc.upa_azimuth_points, -PI, 2.0 * PI)
            .flat_map(|t| uniform(mc.upa_elevation_points, -FRAC_PI_2, PI).map(move |p| (t, p)))
            .collect(),
        ArrayKind::Ula | ArrayKind::Uncorrelated => uniform(mc.azimuth_points, -PI, 2.0 * PI).map(|t| (t, 0.0)).collect(),
    }
}

/// Number of (angle, shadowing) samples for a point: every grid angle the
/// same number of times, at least `draws` in total when shadowing is on.
fn sample_count(grid_len: usize, draws: usize, shadowed: bool) -> usize {
    if shadowed {
        grid_len * draws.div_ceil(grid_len)
    } else {
        grid_len
    }
}

/// Sorted covariance spectra, one series per sweep value.
pub fn run_spectrum(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let sweep = &cfg.sweep;
    let m = cfg.model.m;
    let mut columns = vec![sweep.axis.name().to_string(), "antenna_index".into()];
    columns.extend(sweep.arrays.iter().map(|a| format!("eigenvalue_{}", a.name())));
    let mut table = ResultTable::new("spectrum", columns);

    let mut points = Vec::new();
    for (vi, &v) in sweep.values.iter().enumerate() {
        for (ai, &array) in sweep.arrays.iter().enumerate() {
            points.push((vi * sweep.arrays.len() + ai, v, array));
        }
    }
    let spectra = crate::par_map(&points, |&(point, v, array)| -> Result<Vec<f64>> {
        let spec = with_axis(cfg.desired_spec(array, m)?, sweep.axis, v);
        let shadowed = spec.sigma_db > 0.0 && array != ArrayKind::Uncorrelated;
        let draws = if shadowed { cfg.monte_carlo.draws } else { 1 };
        let mut mean = vec![0.0; spec.antennas()];
        for d in 0..draws {
            let cov = spec.realize(&mut point_stream(cfg, point, d))?;
            for (acc, l) in mean.iter_mut().zip(covmodel::eigen_spectrum(&cov)?) {
                *acc += l;
            }
        }
        Ok(mean.into_iter().map(|x| x / draws as f64).collect())
    });
    let spectra = spectra.into_iter().collect::<Result<Vec<_>>>()?;
    for (vi, &v) in sweep.values.iter().enumerate() {
        for k in 0..m {
            let mut row = vec![v, (k + 1) as f64];
            for ai in 0..sweep.arrays.len() {
                row.push(spectra[vi * sweep.arrays.len() + ai].get(k).copied().unwrap_or(f64::NAN));
            }
            table.push(row);
        }
    }
    Ok(table)
}

/// Smallest antenna count reaching `v <= target`, interpolated linearly in
/// `ln v` between the bracketing grid points. `None` if never reached.
pub fn hardening_threshold(grid: &[(f64, f64)], target: f64) -> Option<f64> {
    let idx = grid.iter().position(|&(_, v)| v <= target)?;
    if idx == 0 {
        return Some(grid[0].0);
    }
    let (m0, v0) = grid[idx - 1];
    let (m1, v1) = grid[idx];
    if v1 == target {
        return Some(m1);
    }
    let t = (v0.ln() - target.ln()) / (v0.ln() - v1.ln());
    Some(m0 + t * (m1 - m0))
}

/// Mean hardening variance of `spec` over `draws` shadowing realizations.
fn mean_hardening(cfg: &ExperimentConfig, spec: &CorrelationModelSpec, point: usize) -> Result<f64> {
    let shadowed = spec.sigma_db > 0.0 && spec.geometry.kind() != ArrayKind::Uncorrelated;
    if !shadowed {
        return spec.hardening_variance_fast(&Shadowing::None);
    }
    let draws = cfg.monte_carlo.draws;
    let mut acc = 0.0;
    for d in 0..draws {
        let shadowing = spec.sample_shadowing(&mut point_stream(cfg, point, d));
        acc += spec.hardening_variance_fast(&shadowing)?;
    }
    Ok(acc / draws as f64)
}

/// Hardening variance against antenna count plus the threshold table.
pub fn run_hardening_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>> {
    let sweep = &cfg.sweep;
    let series: Vec<Option<f64>> = match sweep.series_axis {
        Some(_) => sweep.series_values.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };
    let series_axis = sweep.series_axis.unwrap_or(SweepAxis::R);
    let mut lead = Vec::new();
    if let Some(axis) = sweep.series_axis {
        lead.push(axis.name().to_string());
    }
    let mut columns = lead.clone();
    columns.push("m".into());
    columns.extend(sweep.arrays.iter().map(|a| format!("v_{}", a.name())));
    let mut curve = ResultTable::new("hardening", columns);
    let mut columns = lead;
    columns.extend(sweep.arrays.iter().map(|a| format!("m_threshold_{}", a.name())));
    let mut thresholds = ResultTable::new("hardening_thresholds", columns);

    let arrays = sweep.arrays.len();
    let ms = &sweep.values;
    let mut points = Vec::new();
    for (si, s) in series.iter().enumerate() {
        for (mi, &m) in ms.iter().enumerate() {
            for (ai, &array) in sweep.arrays.iter().enumerate() {
                points.push(((si * ms.len() + mi) * arrays + ai, *s, m as usize, array));
            }
        }
    }
    let values = crate::par_map(&points, |&(point, s, m, array)| {
        let mut spec = cfg.desired_spec(array, m)?;
        if let Some(v) = s {
            spec = with_axis(spec, series_axis, v);
        }
        mean_hardening(cfg, &spec, point)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    for (si, s) in series.iter().enumerate() {
        let mut per_array: Vec<Vec<(f64, f64)>> = vec![Vec::new(); arrays];
        for (mi, &m) in ms.iter().enumerate() {
            let mut row: Vec<f64> = s.iter().copied().collect();
            row.push(m);
            for ai in 0..arrays {
                let v = values[(si * ms.len() + mi) * arrays + ai];
                let effective_m = cfg.desired_spec(sweep.arrays[ai], m as usize)?.antennas() as f64;
                per_array[ai].push((effective_m, v));
                row.push(v);
            }
            curve.push(row);
        }
        let mut row: Vec<f64> = s.iter().copied().collect();
        for grid in &per_array {
            row.push(hardening_threshold(grid, HARDENING_TARGET).unwrap_or(f64::NAN));
        }
        thresholds.push(row);
    }
    Ok(vec![curve, thresholds])
}

/// NMSE of a lone desired UE, averaged over its angle grid and shadowing.
fn single_ue_nmse(cfg: &ExperimentConfig, spec: &CorrelationModelSpec, snr_db: f64, point: usize) -> Result<f64> {
    let kind = spec.geometry.kind();
    if kind == ArrayKind::Uncorrelated {
        let cov = spec.build(Shadowing::None)?;
        return nmse_of(vec![(cov, snr_db)]);
    }
    let grid = angle_grid(kind, &cfg.monte_carlo);
    let n = sample_count(grid.len(), cfg.monte_carlo.draws, spec.sigma_db > 0.0);
    let samples: Vec<usize> = (0..n).collect();
    let values = crate::par_map(&samples, |&j| {
        let (theta, phi) = grid[j % grid.len()];
        let cov = spec.with_angles(theta, phi).realize(&mut point_stream(cfg, point, j))?;
        nmse_of(vec![(cov, snr_db)])
    });
    mean(values)
}

fn nmse_of(ues: Vec<(CovarianceMatrix, f64)>) -> Result<f64> {
    crate::estimator::nmse_closed_form(&PilotScenario::from_snr(ues, 0)?)
}

fn mean(values: Vec<Result<f64>>) -> Result<f64> {
    let n = values.len() as f64;
    let mut acc = 0.0;
    for v in values {
        acc += v?;
    }
    Ok(acc / n)
}

/// Single-UE NMSE against `r`, `sigma_db`, `m` or SNR.
pub fn run_nmse_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let sweep = &cfg.sweep;
    let series: Vec<Option<f64>> = match sweep.series_axis {
        Some(_) => sweep.series_values.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };
    let mut columns: Vec<String> = sweep.series_axis.iter().map(|a| a.name().to_string()).collect();
    columns.push(sweep.axis.name().into());
    columns.extend(sweep.arrays.iter().map(|a| format!("nmse_{}", a.name())));
    let mut table = ResultTable::new(cfg.kind().tag(), columns);

    let arrays = sweep.arrays.len();
    let mut point = 0;
    for s in &series {
        for &v in &sweep.values {
            let mut row: Vec<f64> = s.iter().copied().collect();
            row.push(v);
            for &array in &sweep.arrays {
                let mut m = cfg.model.m;
                let mut snr = cfg.model.snr_db;
                let mut apply = |axis: SweepAxis, x: f64| match axis {
                    SweepAxis::M => m = x as usize,
                    SweepAxis::SnrDb => snr = x,
                    _ => {}
                };
                if let (Some(axis), Some(x)) = (sweep.series_axis, s) {
                    apply(axis, *x);
                }
                apply(sweep.axis, v);
                let mut spec = cfg.desired_spec(array, m)?;
                if let (Some(axis), Some(x)) = (sweep.series_axis, s) {
                    spec = with_axis(spec, axis, *x);
                }
                spec = with_axis(spec, sweep.axis, v);
                row.push(single_ue_nmse(cfg, &spec, snr, point)?);
                point += 1;
            }
            table.push(row);
        }
    }
    debug_assert_eq!(point, series.len() * sweep.values.len() * arrays);
    Ok(table)
}

/// NMSE of the desired UE and the correlation coefficient of the two
/// estimates, sharing one factorization of `Q`.
pub fn contamination_metrics(s: &PilotScenario) -> Result<(f64, f64)> {
    let w = Whitened::new(s)?;
    Ok((w.nmse(0)?, w.coefficient(0, 1)?))
}

/// Per-angle metrics for one array and interferer SNR: `(theta, phi, nmse, coefficient)`.
fn contamination_series(
    cfg: &ExperimentConfig,
    array: ArrayKind,
    interferer_snr_db: f64,
    point: usize,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    let desired = cfg.desired_spec(array, cfg.model.m)?;
    let grid = angle_grid(array, &cfg.monte_carlo);
    let shadowed = desired.sigma_db > 0.0 && array != ArrayKind::Uncorrelated;
    let n = sample_count(grid.len(), cfg.monte_carlo.draws, shadowed);
    let samples: Vec<usize> = (0..n).collect();
    let metrics = crate::par_map(&samples, |&j| {
        let (theta, phi) = grid[j % grid.len()];
        let mut rng = point_stream(cfg, point, j);
        let a = desired.realize(&mut rng)?;
        let b = desired.with_angles(theta, phi).realize(&mut rng)?;
        contamination_metrics(&PilotScenario::from_snr(vec![(a, cfg.model.snr_db), (b, interferer_snr_db)], 0)?)
    });
    let per_angle = n / grid.len();
    let mut sums = vec![(0.0, 0.0); grid.len()];
    for (j, m) in metrics.into_iter().enumerate() {
        let (nmse, coef) = m?;
        sums[j % grid.len()].0 += nmse;
        sums[j % grid.len()].1 += coef;
    }
    Ok(grid
        .iter()
        .zip(sums)
        .map(|(&(t, p), (nmse, coef))| (t, p, nmse / per_angle as f64, coef / per_angle as f64))
        .collect())
}

/// Correlation coefficient and NMSE against interferer angle, one table per
/// array, plus grid means per interferer SNR.
pub fn run_contamination(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>> {
    let sweep = &cfg.sweep;
    let mut tables = Vec::new();
    let mut summary_cols = vec!["interferer_snr_db".to_string()];
    for a in &sweep.arrays {
        summary_cols.push(format!("mean_coefficient_{}", a.name()));
        summary_cols.push(format!("mean_nmse_{}", a.name()));
    }
    let mut summary = ResultTable::new("contamination_summary", summary_cols);
    let mut summary_rows: Vec<Vec<f64>> = sweep.values.iter().map(|&v| vec![v]).collect();
    for (ai, &array) in sweep.arrays.iter().enumerate() {
        let columns = ["interferer_snr_db", "theta_deg", "phi_deg", "coefficient", "nmse"];
        let mut table = ResultTable::new(format!("contamination_{}", array.name()), columns.map(String::from).to_vec());
        for (vi, &snr) in sweep.values.iter().enumerate() {
            let series = contamination_series(cfg, array, snr, ai * sweep.values.len() + vi)?;
            let n = series.len() as f64;
            let (mut coef_sum, mut nmse_sum) = (0.0, 0.0);
            for &(t, p, nmse, coef) in &series {
                table.push(vec![snr, t.to_degrees(), p.to_degrees(), coef, nmse]);
                coef_sum += coef;
                nmse_sum += nmse;
            }
            summary_rows[vi].push(coef_sum / n);
            summary_rows[vi].push(nmse_sum / n);
        }
        tables.push(table);
    }
    for row in summary_rows {
        summary.push(row);
    }
    tables.push(summary);
    Ok(tables)
}

fn snr_gap_column(desired: f64, interferer: f64) -> String {
    let gap = desired - interferer;
    if gap == 0.0 {
        "nmse_same_snr".into()
    } else if gap > 0.0 {
        format!("nmse_{gap}db_weaker")
    } else {
        format!("nmse_{}db_stronger", -gap)
    }
}

/// Summary table: angle-averaged NMSE per interferer strength and the
/// antenna count needed for `v <= 1e-2`, for the uncorrelated reference, the
/// ULA and the UPA.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let sweep = &cfg.sweep;
    let mut columns: Vec<String> = sweep.values.iter().map(|&v| snr_gap_column(cfg.model.snr_db, v)).collect();
    columns.push("hardening_M_threshold".into());
    let mut table = ResultTable::new("table1", columns);
    table.label_column = Some("scenario".into());

    let rows = [ArrayKind::Uncorrelated, ArrayKind::Ula, ArrayKind::Upa];
    let n_grid = sweep.hardening_m.len();
    for (ri, &array) in rows.iter().enumerate() {
        let mut row = Vec::new();
        for (vi, &snr) in sweep.values.iter().enumerate() {
            if array == ArrayKind::Uncorrelated {
                // no angle dependence, so no grid average to round
                let iid = cfg.desired_spec(array, cfg.model.m)?.build(Shadowing::None)?;
                row.push(nmse_of(vec![(iid.clone(), cfg.model.snr_db), (iid, snr)])?);
                continue;
            }
            let series = contamination_series(cfg, array, snr, ri * sweep.values.len() + vi)?;
            row.push(series.iter().map(|s| s.2).sum::<f64>() / series.len() as f64);
        }
        let base = rows.len() * sweep.values.len() + ri * n_grid;
        let points: Vec<(usize, usize)> = sweep.hardening_m.iter().enumerate().map(|(i, &m)| (base + i, m)).collect();
        let grid = crate::par_map(&points, |&(point, m)| {
            let spec = cfg.desired_spec(array, m)?;
            Ok((spec.antennas() as f64, mean_hardening(cfg, &spec, point)?))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        row.push(hardening_threshold(&grid, HARDENING_TARGET).unwrap_or(f64::NAN));
        table.push_labeled(array.name(), row);
    }
    Ok(table)
}

/// Linear power of an effective SNR in dB.
pub fn snr_linear(db: f64) -> f64 {
    db_to_linear(db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(kind);
        cfg.monte_carlo.draws = 8;
        cfg.monte_carlo.azimuth_points = 8;
        cfg.monte_carlo.upa_azimuth_points = 4;
        cfg.monte_carlo.upa_elevation_points = 4;
        cfg
    }

    #[test]
    fn threshold_interpolation() {
        let grid = [(50.0, 0.02), (100.0, 0.01), (150.0, 0.005)];
        assert_eq!(hardening_threshold(&grid, 0.01), Some(100.0));
        let grid = [(100.0, 0.04), (200.0, 0.0025)];
        // halfway in ln v
        assert!((hardening_threshold(&grid, 0.01).unwrap() - 150.0).abs() < 1e-9);
        assert_eq!(hardening_threshold(&[(10.0, 0.5)], 0.01), None);
        assert_eq!(hardening_threshold(&[(10.0, 0.001)], 0.01), Some(10.0));
    }

    #[test]
    fn uncorrelated_threshold_is_exactly_100() {
        let grid: Vec<(f64, f64)> = square_grid(2, 30).into_iter().map(|m| (m as f64, 1.0 / m as f64)).collect();
        assert_eq!(hardening_threshold(&grid, HARDENING_TARGET), Some(100.0));
    }

    #[test]
    fn angle_grids() {
        let mc = MonteCarloSpec::default();
        let ula = angle_grid(ArrayKind::Ula, &mc);
        assert_eq!(ula.len(), 64);
        assert_eq!(ula[0], (-PI, 0.0));
        assert!(ula.iter().all(|&(t, _)| (-PI..PI).contains(&t)));
        let upa = angle_grid(ArrayKind::Upa, &mc);
        assert_eq!(upa.len(), 256);
        assert!(upa.iter().all(|&(_, p)| (-FRAC_PI_2..FRAC_PI_2).contains(&p)));
    }

    #[test]
    fn sample_counts_cover_grid_evenly() {
        assert_eq!(sample_count(64, 1000, true), 1024);
        assert_eq!(sample_count(256, 1000, true), 1024);
        assert_eq!(sample_count(64, 1000, false), 64);
        assert_eq!(sample_count(64, 1, true), 64);
    }

    #[test]
    fn gap_column_names() {
        assert_eq!(snr_gap_column(10.0, 10.0), "nmse_same_snr");
        assert_eq!(snr_gap_column(10.0, 0.0), "nmse_10db_weaker");
        assert_eq!(snr_gap_column(10.0, -10.0), "nmse_20db_weaker");
        assert_eq!(snr_gap_column(10.0, 15.0), "nmse_5db_stronger");
    }

    #[test]
    fn validation_key_paths() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Spectrum);
        cfg.model.r = 1.5;
        match cfg.validate() {
            Err(Error::InvalidParameter { key, .. }) => assert_eq!(key, "model.r"),
            other => panic!("{other:?}"),
        }
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Spectrum);
        cfg.model.theta_deg = 180.0;
        match cfg.validate() {
            Err(Error::InvalidParameter { key, .. }) => assert_eq!(key, "model.theta_deg"),
            other => panic!("{other:?}"),
        }
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::HardeningSweep);
        cfg.sweep.values.push(10.5);
        assert!(matches!(cfg.validate(), Err(Error::InvalidParameter { key, .. }) if key.starts_with("sweep.values")));
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Spectrum);
        cfg.sweep.axis = SweepAxis::M;
        assert!(matches!(cfg.validate(), Err(Error::InvalidParameter { key, .. }) if key == "sweep.axis"));
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Table1);
        cfg.monte_carlo.draws = 0;
        assert!(matches!(cfg.validate(), Err(Error::InvalidParameter { key, .. }) if key == "monte_carlo.draws"));
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Spectrum);
        cfg.model.m_h = Some(7);
        cfg.model.m_v = Some(7);
        assert!(matches!(cfg.validate(), Err(Error::InvalidParameter { key, .. }) if key == "model.m_h"));
        for kind in [
            ExperimentKind::Spectrum,
            ExperimentKind::HardeningSweep,
            ExperimentKind::NmseVsParam,
            ExperimentKind::NmseVsSnr,
            ExperimentKind::Contamination,
            ExperimentKind::Table1,
        ] {
            ExperimentConfig::defaults(kind).validate().unwrap();
        }
    }

    #[test]
    fn spectrum_rows_and_reference_line() {
        let mut cfg = quick(ExperimentKind::Spectrum);
        cfg.sweep.values = vec![0.0, 0.5];
        let tables = run(&cfg).unwrap();
        let t = &tables[0];
        assert_eq!(t.rows.len(), 2 * 100);
        let ula = t.column("eigenvalue_ula").unwrap();
        assert!(ula[..100].iter().all(|&l| (l - 1.0).abs() < 1e-12));
        let iid = t.column("eigenvalue_uncorrelated").unwrap();
        assert!(iid.iter().all(|&l| l == 1.0));
    }

    #[test]
    fn hardening_sweep_shapes() {
        let mut cfg = quick(ExperimentKind::HardeningSweep);
        cfg.sweep.series_axis = Some(SweepAxis::R);
        cfg.sweep.series_values = vec![0.0, 1.0];
        let tables = run(&cfg).unwrap();
        assert_eq!(tables[0].rows.len(), 2 * 29);
        assert_eq!(tables[1].rows.len(), 2);
        let v_ula = tables[0].column("v_ula").unwrap();
        // r = 1 series is rank one
        assert!(v_ula[29..].iter().all(|&v| v == 1.0));
        assert!(tables[1].rows[1][1].is_nan());
        assert_eq!(tables[1].rows[0][1], 100.0);
    }

    #[test]
    fn nmse_sweep_uncorrelated_limit() {
        let mut cfg = quick(ExperimentKind::NmseVsParam);
        cfg.sweep.values = vec![0.0, 0.9];
        let t = &run(&cfg).unwrap()[0];
        for col in ["nmse_ula", "nmse_upa", "nmse_uncorrelated"] {
            assert!((t.column(col).unwrap()[0] - 1.0 / 11.0).abs() < 1e-12, "{col}");
        }
        assert!(t.rows[1][1] < t.rows[0][1]);
    }

    #[test]
    fn nmse_vs_snr_series() {
        let mut cfg = quick(ExperimentKind::NmseVsSnr);
        cfg.sweep.values = vec![0.0, 10.0];
        cfg.sweep.series_values = vec![10.0, 16.0];
        let t = &run(&cfg).unwrap()[0];
        assert_eq!(t.columns[..2], ["m".to_string(), "snr_db".to_string()]);
        assert_eq!(t.rows.len(), 4);
    }

    #[test]
    fn contamination_tables() {
        let mut cfg = quick(ExperimentKind::Contamination);
        cfg.model.m = 16;
        cfg.sweep.values = vec![0.0];
        let tables = run(&cfg).unwrap();
        let names: Vec<&str> = tables.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["contamination_ula", "contamination_upa", "contamination_uncorrelated", "contamination_summary"]);
        assert_eq!(tables[0].rows.len(), 8);
        assert_eq!(tables[1].rows.len(), 16);
        assert!(tables[2].column("coefficient").unwrap().iter().all(|&c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn runs_are_reproducible() {
        let mut cfg = quick(ExperimentKind::Contamination);
        cfg.model.m = 12;
        cfg.model.sigma_db = 4.0;
        cfg.sweep.arrays = vec![ArrayKind::Ula];
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
        let mut other = cfg.clone();
        other.monte_carlo.seed = 1;
        assert_ne!(run(&cfg).unwrap()[0].rows, run(&other).unwrap()[0].rows);
    }
}

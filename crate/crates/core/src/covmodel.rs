//! Exponential correlation model with large-scale fading variations over the
//! array.
//!
//! A ULA covariance has entries
//!
//! ```text
//! R(m, n) = beta * (r e^{i theta})^(n - m) * 10^((f_m + f_n) / 20),   n >= m
//! ```
//!
//! with the lower triangle filled by Hermitian symmetry. It is assembled as
//! the congruence `D (beta E) D`, `D = diag(10^(f_m / 20))`, which keeps it
//! positive semidefinite. A UPA covariance is the Kronecker product of a
//! horizontal ULA (azimuth `theta`, carrying `beta`) and a vertical ULA
//! (elevation `phi`, unit power), each with its own shadowing vector. UPA
//! antenna `m` sits at `(m / M_v, m % M_v)`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, HermitianMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayKind {
    Ula,
    Upa,
    Uncorrelated,
}

impl ArrayKind {
    pub fn name(self) -> &'static str {
        match self {
            ArrayKind::Ula => "ula",
            ArrayKind::Upa => "upa",
            ArrayKind::Uncorrelated => "uncorrelated",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayGeometry {
    Ula { m: usize },
    Upa { m_h: usize, m_v: usize },
    /// i.i.d. Rayleigh reference, `beta * I`. Ignores `r` and `sigma_db`.
    Uncorrelated { m: usize },
}

impl ArrayGeometry {
    /// Geometry of `kind` with `m` antennas; UPAs use [`near_square_factors`].
    pub fn with_antennas(kind: ArrayKind, m: usize) -> Self {
        match kind {
            ArrayKind::Ula => ArrayGeometry::Ula { m },
            ArrayKind::Upa => {
                let (m_h, m_v) = near_square_factors(m);
                ArrayGeometry::Upa { m_h, m_v }
            }
            ArrayKind::Uncorrelated => ArrayGeometry::Uncorrelated { m },
        }
    }

    pub fn antennas(&self) -> usize {
        match *self {
            ArrayGeometry::Ula { m } | ArrayGeometry::Uncorrelated { m } => m,
            ArrayGeometry::Upa { m_h, m_v } => m_h * m_v,
        }
    }

    pub fn kind(&self) -> ArrayKind {
        match self {
            ArrayGeometry::Ula { .. } => ArrayKind::Ula,
            ArrayGeometry::Upa { .. } => ArrayKind::Upa,
            ArrayGeometry::Uncorrelated { .. } => ArrayKind::Uncorrelated,
        }
    }
}

/// `(m_h, m_v)` with `m_h * m_v == m`, `m_h >= m_v`, and `m_v` the largest
/// divisor not above `sqrt(m)`.
pub fn near_square_factors(m: usize) -> (usize, usize) {
    let mut m_v = (m as f64).sqrt().floor() as usize;
    while m_v > 1 && !m.is_multiple_of(m_v) {
        m_v -= 1;
    }
    let m_v = m_v.max(1);
    (m / m_v, m_v)
}

/// Declarative description of one covariance model. Angles in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModelSpec {
    pub geometry: ArrayGeometry,
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub sigma_db: f64,
    pub beta: f64,
}

impl CorrelationModelSpec {
    pub fn ula(m: usize, r: f64, theta: f64, sigma_db: f64, beta: f64) -> Self {
        Self { geometry: ArrayGeometry::Ula { m }, r, theta, phi: 0.0, sigma_db, beta }
    }

    pub fn upa(m_h: usize, m_v: usize, r: f64, theta: f64, phi: f64, sigma_db: f64, beta: f64) -> Self {
        Self { geometry: ArrayGeometry::Upa { m_h, m_v }, r, theta, phi, sigma_db, beta }
    }

    pub fn uncorrelated(m: usize, beta: f64) -> Self {
        Self { geometry: ArrayGeometry::Uncorrelated { m }, r: 0.0, theta: 0.0, phi: 0.0, sigma_db: 0.0, beta }
    }

    pub fn antennas(&self) -> usize {
        self.geometry.antennas()
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_angles(mut self, theta: f64, phi: f64) -> Self {
        self.theta = theta;
        self.phi = phi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.geometry {
            ArrayGeometry::Ula { m } | ArrayGeometry::Uncorrelated { m } if m == 0 => {
                return Err(Error::invalid("m", "need at least one antenna"));
            }
            ArrayGeometry::Upa { m_h, m_v } if m_h == 0 || m_v == 0 => {
                return Err(Error::invalid("m_h", format!("UPA needs m_h >= 1 and m_v >= 1, got {m_h}x{m_v}")));
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::invalid("r", format!("correlation factor {} outside [0, 1]", self.r)));
        }
        if !(self.sigma_db >= 0.0 && self.sigma_db.is_finite()) {
            return Err(Error::invalid("sigma_db", format!("shadowing deviation {} must be finite and >= 0", self.sigma_db)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", format!("large-scale fading {} must be finite and > 0", self.beta)));
        }
        if !(-PI..PI).contains(&self.theta) {
            return Err(Error::invalid("theta", format!("azimuth {} rad outside [-pi, pi)", self.theta)));
        }
        if !(-FRAC_PI_2..FRAC_PI_2).contains(&self.phi) {
            return Err(Error::invalid("phi", format!("elevation {} rad outside [-pi/2, pi/2)", self.phi)));
        }
        Ok(())
    }

    /// Draws the shadowing this model needs.
    pub fn sample_shadowing<R: Rng + ?Sized>(&self, rng: &mut R) -> Shadowing {
        if self.sigma_db == 0.0 {
            return Shadowing::None;
        }
        match self.geometry {
            ArrayGeometry::Ula { m } => Shadowing::PerAntenna(sample_shadowing(m, self.sigma_db, rng)),
            ArrayGeometry::Upa { m_h, m_v } => {
                let horizontal = sample_shadowing(m_h, self.sigma_db, rng);
                let vertical = sample_shadowing(m_v, self.sigma_db, rng);
                Shadowing::PerFactor { horizontal, vertical }
            }
            ArrayGeometry::Uncorrelated { .. } => Shadowing::None,
        }
    }

    /// Samples shadowing and builds the covariance.
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CovarianceMatrix> {
        let shadowing = self.sample_shadowing(rng);
        self.build(shadowing)
    }

    /// Builds the covariance from an explicit shadowing realization.
    pub fn build(&self, shadowing: Shadowing) -> Result<CovarianceMatrix> {
        self.validate()?;
        let r = match (self.geometry, &shadowing) {
            (ArrayGeometry::Uncorrelated { m }, Shadowing::None) => {
                HermitianMatrix::from_real_diag(&vec![self.beta; m])
            }
            (ArrayGeometry::Ula { m }, Shadowing::None) => {
                exponential_ula(m, self.r, self.theta, self.beta, &vec![0.0; m])?
            }
            (ArrayGeometry::Ula { m }, Shadowing::PerAntenna(f)) => {
                check_len("f", f, m)?;
                exponential_ula(m, self.r, self.theta, self.beta, f)?
            }
            (ArrayGeometry::Upa { m_h, m_v }, Shadowing::None) => {
                upa_covariance(m_h, m_v, self.r, self.theta, self.phi, self.beta, &vec![0.0; m_h], &vec![0.0; m_v])?
            }
            (ArrayGeometry::Upa { m_h, m_v }, Shadowing::PerFactor { horizontal, vertical }) => {
                check_len("f_h", horizontal, m_h)?;
                check_len("f_v", vertical, m_v)?;
                upa_covariance(m_h, m_v, self.r, self.theta, self.phi, self.beta, horizontal, vertical)?
            }
            (geometry, _) => {
                return Err(Error::invalid(
                    "shadowing",
                    format!("shadowing layout does not fit {geometry:?}"),
                ))
            }
        };
        Ok(CovarianceMatrix { r, spec: *self, shadowing })
    }

    /// `tr(R^2) / tr(R)^2` straight from the model parameters in O(M).
    ///
    /// For a ULA `|R(m,n)|^2 = p_m p_n r^(2|n-m|)` with `p_m = beta 10^(f_m/10)`,
    /// so `tr(R^2)` follows from a backward geometric recurrence. Kronecker
    /// structure makes the UPA value the product of its factors' values.
    pub fn hardening_variance_fast(&self, shadowing: &Shadowing) -> Result<f64> {
        self.validate()?;
        match (self.geometry, shadowing) {
            (ArrayGeometry::Uncorrelated { m }, Shadowing::None) => Ok(1.0 / m as f64),
            (ArrayGeometry::Ula { m }, Shadowing::None) => Ok(ula_variance(self.r, &vec![0.0; m])),
            (ArrayGeometry::Ula { m }, Shadowing::PerAntenna(f)) => {
                check_len("f", f, m)?;
                Ok(ula_variance(self.r, f))
            }
            (ArrayGeometry::Upa { m_h, m_v }, Shadowing::None) => {
                Ok(ula_variance(self.r, &vec![0.0; m_h]) * ula_variance(self.r, &vec![0.0; m_v]))
            }
            (ArrayGeometry::Upa { m_h, m_v }, Shadowing::PerFactor { horizontal, vertical }) => {
                check_len("f_h", horizontal, m_h)?;
                check_len("f_v", vertical, m_v)?;
                Ok(ula_variance(self.r, horizontal) * ula_variance(self.r, vertical))
            }
            (geometry, _) => Err(Error::invalid("shadowing", format!("shadowing layout does not fit {geometry:?}"))),
        }
    }
}

fn check_len(key: &str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::invalid(key, format!("expected {expected} shadowing values, got {}", v.len())));
    }
    Ok(())
}

// beta cancels in the ratio
fn ula_variance(r: f64, f_db: &[f64]) -> f64 {
    let p: Vec<f64> = f_db.iter().map(|f| 10f64.powf(f / 10.0)).collect();
    let rho = r * r;
    let mut tail = 0.0;
    let mut cross = 0.0;
    let mut squares = 0.0;
    for m in (0..p.len()).rev() {
        squares += p[m] * p[m];
        cross += p[m] * tail;
        tail = rho * (p[m] + tail);
    }
    let total: f64 = p.iter().sum();
    (squares + 2.0 * cross) / (total * total)
}

/// Shadowing realization actually applied to a covariance, in dB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shadowing {
    None,
    PerAntenna(Vec<f64>),
    PerFactor { horizontal: Vec<f64>, vertical: Vec<f64> },
}

/// Covariance matrix together with the model that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    r: HermitianMatrix,
    spec: CorrelationModelSpec,
    shadowing: Shadowing,
}

impl CovarianceMatrix {
    pub fn matrix(&self) -> &HermitianMatrix {
        &self.r
    }

    pub fn spec(&self) -> &CorrelationModelSpec {
        &self.spec
    }

    pub fn shadowing(&self) -> &Shadowing {
        &self.shadowing
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn trace(&self) -> f64 {
        self.r.trace()
    }

    /// Same correlation structure with average power `beta`.
    pub fn rescaled_to_beta(&self, beta: f64) -> Self {
        let factor = beta / self.spec.beta;
        Self { r: self.r.scale(factor), spec: self.spec.with_beta(beta), shadowing: self.shadowing.clone() }
    }
}

/// i.i.d. `N(0, sigma_db^2)` shadowing offsets in dB. Zeros when `sigma_db == 0`.
///
/// # Panics
/// If `sigma_db` is negative or not finite.
pub fn sample_shadowing<R: Rng + ?Sized>(m: usize, sigma_db: f64, rng: &mut R) -> Vec<f64> {
    if sigma_db == 0.0 {
        return vec![0.0; m];
    }
    let normal = Normal::new(0.0, sigma_db).expect("sigma_db must be finite and non-negative");
    (0..m).map(|_| normal.sample(rng)).collect()
}

/// Exponential-model ULA covariance.
pub fn exponential_ula(m: usize, r: f64, theta: f64, beta: f64, f_db: &[f64]) -> Result<HermitianMatrix> {
    if m == 0 {
        return Err(Error::invalid("m", "need at least one antenna"));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid("r", format!("correlation factor {r} outside [0, 1]")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", format!("large-scale fading {beta} must be finite and > 0")));
    }
    check_len("f", f_db, m)?;
    let amp: Vec<f64> = f_db.iter().map(|f| 10f64.powf(f / 20.0)).collect();
    let lag: Vec<Complex64> = (0..m)
        .map(|d| if d == 0 { Complex64::new(1.0, 0.0) } else { Complex64::from_polar(r.powi(d as i32), d as f64 * theta) })
        .collect();
    let mut upper = CMatrix::zeros(m, m);
    for i in 0..m {
        let row = upper.row_mut(i);
        for j in i..m {
            row[j] = lag[j - i] * (beta * amp[i] * amp[j]);
        }
    }
    Ok(HermitianMatrix::from_upper(&upper)?)
}

/// Kronecker UPA covariance `R_h (x) R_v`.
#[allow(clippy::too_many_arguments)]
pub fn upa_covariance(
    m_h: usize,
    m_v: usize,
    r: f64,
    theta: f64,
    phi: f64,
    beta: f64,
    f_h: &[f64],
    f_v: &[f64],
) -> Result<HermitianMatrix> {
    let rh = exponential_ula(m_h, r, theta, beta, f_h).map_err(|e| e.within("horizontal"))?;
    let rv = exponential_ula(m_v, r, phi, 1.0, f_v).map_err(|e| e.within("vertical"))?;
    Ok(linalg::kron_hermitian(&rh, &rv))
}

/// Eigenvalues sorted descending.
pub fn eigen_spectrum(r: &CovarianceMatrix) -> Result<Vec<f64>> {
    Ok(linalg::hermitian_eig(r.matrix())?.values)
}

/// Channel-hardening variance `tr(R^2) / tr(R)^2`, with `tr(R^2) = ||R||_F^2`.
pub fn hardening_variance(r: &CovarianceMatrix) -> Result<f64> {
    let tr = r.trace();
    if tr <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    Ok(r.matrix().trace_of_square() / (tr * tr))
}

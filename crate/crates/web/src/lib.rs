//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export returns a flat `Float64Array`; the page slices it into
//! points. The `*_points` functions hold the logic so they can be tested
//! natively.

use std::f64::consts::PI;

use mimo_spatia::covmodel::{self, ArrayGeometry, ArrayKind, CorrelationModelSpec, Shadowing};
use mimo_spatia::estimator::{PilotScenario, Whitened};
use mimo_spatia::rng::{self, derive_seed};
use wasm_bindgen::prelude::*;

/// Shadowing draws are capped so the page stays responsive.
pub const MAX_DRAWS: usize = 200;

fn parse_array(name: &str) -> Result<ArrayKind, String> {
    match name {
        "ula" => Ok(ArrayKind::Ula),
        "upa" => Ok(ArrayKind::Upa),
        "uncorrelated" => Ok(ArrayKind::Uncorrelated),
        other => Err(format!("unknown array `{other}`")),
    }
}

fn model(array: &str, m: usize, r: f64, theta_deg: f64, phi_deg: f64, sigma_db: f64) -> Result<CorrelationModelSpec, String> {
    let spec = CorrelationModelSpec {
        geometry: ArrayGeometry::with_antennas(parse_array(array)?, m),
        r,
        theta: theta_deg.to_radians(),
        phi: phi_deg.to_radians(),
        sigma_db,
        beta: 1.0,
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// Eigenvalues in decreasing order, averaged over `draws` shadowing draws
/// when `sigma_db > 0`.
pub fn spectrum_points(array: &str, m: usize, r: f64, sigma_db: f64, draws: usize, seed: u64) -> Result<Vec<f64>, String> {
    let spec = model(array, m, r, 0.0, 0.0, sigma_db)?;
    let draws = if sigma_db > 0.0 { draws.clamp(1, MAX_DRAWS) } else { 1 };
    let mut mean = vec![0.0; spec.antennas()];
    for d in 0..draws {
        let cov = spec.realize(&mut rng::stream(derive_seed(seed, "web-spectrum", d as u64))).map_err(|e| e.to_string())?;
        for (acc, l) in mean.iter_mut().zip(covmodel::eigen_spectrum(&cov).map_err(|e| e.to_string())?) {
            *acc += l / draws as f64;
        }
    }
    Ok(mean)
}

/// `[m, v, m, v, ...]` over square antenna counts `4..=m_max`.
pub fn hardening_points(array: &str, r: f64, sigma_db: f64, m_max: usize, draws: usize, seed: u64) -> Result<Vec<f64>, String> {
    let draws = if sigma_db > 0.0 { draws.clamp(1, MAX_DRAWS) } else { 1 };
    let mut out = Vec::new();
    for k in 2.. {
        let m = k * k;
        if m > m_max {
            break;
        }
        let spec = model(array, m, r, 0.0, 0.0, sigma_db)?;
        let mut v = 0.0;
        for d in 0..draws {
            let shadowing = if sigma_db > 0.0 {
                spec.sample_shadowing(&mut rng::stream(derive_seed(seed, "web-hardening", (k * MAX_DRAWS + d) as u64)))
            } else {
                Shadowing::None
            };
            v += spec.hardening_variance_fast(&shadowing).map_err(|e| e.to_string())? / draws as f64;
        }
        out.push(spec.antennas() as f64);
        out.push(v);
    }
    Ok(out)
}

/// `[theta_deg, coefficient, nmse, ...]` as the interferer sweeps azimuth at
/// the desired UE's elevation. The desired UE sits at `(30, 30)` degrees with
/// 10 dB SNR.
pub fn contamination_points(
    array: &str,
    m: usize,
    r: f64,
    sigma_db: f64,
    interferer_snr_db: f64,
    points: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let desired = model(array, m, r, 30.0, 30.0, sigma_db)?;
    let points = points.clamp(2, 720);
    let mut out = Vec::with_capacity(3 * points);
    for k in 0..points {
        let theta = -PI + 2.0 * PI * k as f64 / points as f64;
        let mut rng = rng::stream(derive_seed(seed, "web-contamination", k as u64));
        let a = desired.realize(&mut rng).map_err(|e| e.to_string())?;
        let b = desired.with_angles(theta, desired.phi).realize(&mut rng).map_err(|e| e.to_string())?;
        let s = PilotScenario::from_snr(vec![(a, 10.0), (b, interferer_snr_db)], 0).map_err(|e| e.to_string())?;
        let w = Whitened::new(&s).map_err(|e| e.to_string())?;
        out.push(theta.to_degrees());
        out.push(w.coefficient(0, 1).map_err(|e| e.to_string())?);
        out.push(w.nmse(0).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn eigen_spectrum(array: &str, m: usize, r: f64, sigma_db: f64, draws: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    spectrum_points(array, m, r, sigma_db, draws, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn hardening_curve(array: &str, r: f64, sigma_db: f64, m_max: usize, draws: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    hardening_points(array, r, sigma_db, m_max, draws, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn contamination_curve(
    array: &str,
    m: usize,
    r: f64,
    sigma_db: f64,
    interferer_snr_db: f64,
    points: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    contamination_points(array, m, r, sigma_db, interferer_snr_db, points, seed).map_err(|e| JsError::new(&e))
}

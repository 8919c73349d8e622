//! MMSE channel estimation under pilot contamination.
//!
//! All UEs in a [`PilotScenario`] share one pilot, so after de-spreading the
//! base station observes
//!
//! ```text
//! y = sqrt(rho_p) * sum_l g_l + n,      n ~ CN(0, I)
//! ```
//!
//! and estimates UE `i` as `g_hat_i = sqrt(rho_p) R_i Q^-1 y` with
//! `Q = rho_p sum_l R_l + I`. The estimate has covariance
//! `Psi_i = rho_p R_i Q^-1 R_i` and the error has covariance `C_i = R_i - Psi_i`.
//!
//! Effective SNR convention: `rho_p = 1` and each UE's covariance is scaled so
//! that its average power `beta` equals `10^(snr_db / 10)`.

use crate::channel::{coloring_factor, color_into, SAMPLE_BATCH};
use crate::covmodel::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, HermitianMatrix, C64};
use crate::rng::{self, complex_normal};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One pilot-sharing group seen by a single base station.
#[derive(Clone, Debug)]
pub struct PilotScenario {
    pilot_power: f64,
    ues: Vec<CovarianceMatrix>,
    target: usize,
}

impl PilotScenario {
    /// UEs given as `(covariance, effective SNR in dB)`. Each covariance is
    /// rescaled so that its `beta` is the linear SNR; `rho_p = 1`.
    pub fn from_snr(ues: Vec<(CovarianceMatrix, f64)>, target: usize) -> Result<Self> {
        let ues = ues
            .into_iter()
            .enumerate()
            .map(|(i, (cov, snr_db))| {
                if !snr_db.is_finite() {
                    return Err(Error::invalid(format!("ues[{i}].snr_db"), format!("{snr_db} is not finite")));
                }
                Ok(cov.rescaled_to_beta(db_to_linear(snr_db)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_pilot_power(1.0, ues, target)
    }

    /// Uses the covariances unchanged with an explicit normalized pilot power.
    pub fn with_pilot_power(pilot_power: f64, ues: Vec<CovarianceMatrix>, target: usize) -> Result<Self> {
        if ues.is_empty() {
            return Err(Error::invalid("ues", "scenario needs at least one UE"));
        }
        if target >= ues.len() {
            return Err(Error::invalid("target", format!("index {target} out of range for {} UEs", ues.len())));
        }
        let m = ues[0].dim();
        if let Some((i, cov)) = ues.iter().enumerate().find(|(_, c)| c.dim() != m) {
            return Err(Error::invalid(format!("ues[{i}]"), format!("dimension {} differs from {m}", cov.dim())));
        }
        if !(pilot_power >= 0.0 && pilot_power.is_finite()) {
            return Err(Error::invalid("pilot_power", format!("{pilot_power} must be finite and >= 0")));
        }
        Ok(Self { pilot_power, ues, target })
    }

    pub fn pilot_power(&self) -> f64 {
        self.pilot_power
    }

    pub fn ues(&self) -> &[CovarianceMatrix] {
        &self.ues
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn antennas(&self) -> usize {
        self.ues[0].dim()
    }

    pub fn retarget(mut self, target: usize) -> Result<Self> {
        if target >= self.ues.len() {
            return Err(Error::invalid("target", format!("index {target} out of range for {} UEs", self.ues.len())));
        }
        self.target = target;
        Ok(self)
    }

    /// `Q = rho_p sum_l R_l + I`
    pub fn observation_covariance(&self) -> HermitianMatrix {
        let m = self.antennas();
        let mut q = CMatrix::identity(m);
        for cov in &self.ues {
            q.add_scaled_assign(self.pilot_power, cov.matrix().as_matrix()).expect("dimensions checked");
        }
        HermitianMatrix::from_upper(&q).expect("square")
    }

    fn ue(&self, idx: usize, key: &str) -> Result<&CovarianceMatrix> {
        self.ues.get(idx).ok_or_else(|| Error::invalid(key, format!("UE index {idx} out of range")))
    }
}

/// `Q`, the MMSE filter `W = sqrt(rho_p) R Q^-1`, `Psi` and `C` for the target UE.
#[derive(Clone, Debug)]
pub struct EstimatorQuantities {
    pub q: HermitianMatrix,
    pub w: CMatrix,
    pub psi: HermitianMatrix,
    pub c: HermitianMatrix,
}

pub fn build_quantities(s: &PilotScenario) -> Result<EstimatorQuantities> {
    let q = s.observation_covariance();
    let r = s.ues[s.target].matrix();
    // Q^-1 R; its adjoint is R Q^-1
    let q_inv_r = linalg::hermitian_solve(&q, r.as_matrix())?;
    let w = q_inv_r.adjoint().scale(s.pilot_power.sqrt());
    let psi = HermitianMatrix::symmetrize(&r.as_matrix().matmul(&q_inv_r)?.scale(s.pilot_power))?;
    let c = r.sub(&psi)?;
    Ok(EstimatorQuantities { q, w, psi, c })
}

/// `tr(C) / tr(R)`: 0 is a perfect estimate, 1 is no better than the mean.
pub fn nmse(q: &EstimatorQuantities, target: &CovarianceMatrix) -> Result<f64> {
    let tr = target.trace();
    if tr <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    Ok(q.c.trace() / tr)
}

/// Every UE covariance whitened by the observation covariance:
/// `Y_k = L^-1 R_k` with `Q = L L^H`, plus `L^-1` itself.
#[derive(Clone, Debug)]
pub struct Whitened {
    pilot_power: f64,
    traces: Vec<f64>,
    ys: Vec<CMatrix>,
    l_inv: CMatrix,
}

impl Whitened {
    pub fn new(s: &PilotScenario) -> Result<Self> {
        let l = linalg::cholesky(&s.observation_covariance())?;
        let mut ys = Vec::with_capacity(s.ues.len());
        for cov in &s.ues {
            let mut y = cov.matrix().as_matrix().clone();
            linalg::forward_substitute(&l, &mut y)?;
            ys.push(y);
        }
        Ok(Self {
            pilot_power: s.pilot_power,
            traces: s.ues.iter().map(|c| c.trace()).collect(),
            ys,
            l_inv: linalg::lower_triangular_inverse(&l)?,
        })
    }

    /// `tr(Psi_k) = rho_p ||Y_k||_F^2`
    pub fn psi_trace(&self, k: usize) -> f64 {
        self.pilot_power * self.ys[k].frobenius_norm_sqr()
    }

    /// `tr(C_k) = tr(R_k Q^-1 (Q - rho_p R_k))`, summed as
    /// `rho_p sum_{j != k} <Y_k, Y_j> + <Y_k, L^-1>` so that no large
    /// terms cancel.
    pub fn error_trace(&self, k: usize) -> f64 {
        let y = &self.ys[k];
        let n = y.rows();
        let mut own = 0.0;
        for i in 0..n {
            own += y.row(i)[..=i].iter().zip(&self.l_inv.row(i)[..=i]).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        }
        let cross: f64 = (0..self.ys.len())
            .filter(|&j| j != k)
            .map(|j| y.inner(&self.ys[j]).expect("same shape").re)
            .sum();
        self.pilot_power * cross + own
    }

    pub fn nmse(&self, k: usize) -> Result<f64> {
        if self.traces[k] <= 0.0 {
            return Err(Error::ZeroTrace);
        }
        Ok(self.error_trace(k) / self.traces[k])
    }

    /// `|<Y_a, Y_b>| / (||Y_a|| ||Y_b||)`
    pub fn coefficient(&self, a: usize, b: usize) -> Result<f64> {
        let (ya, yb) = (&self.ys[a], &self.ys[b]);
        let (ea, eb) = (ya.frobenius_norm_sqr(), yb.frobenius_norm_sqr());
        if ea <= 0.0 || eb <= 0.0 {
            return Err(Error::ZeroTrace);
        }
        Ok(ya.inner(yb)?.norm() / (ea * eb).sqrt())
    }
}

/// NMSE of the target UE from one Cholesky factorization of `Q`, without
/// forming `Psi` or `C`.
pub fn nmse_closed_form(s: &PilotScenario) -> Result<f64> {
    if s.ues[s.target].trace() <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    Whitened::new(s)?.nmse(s.target)
}

/// Antenna-averaged correlation coefficient between the estimates of UEs `a`
/// and `b`:
///
/// ```text
/// |E{g_hat_a^H g_hat_b}| / sqrt(E{||g_hat_a||^2} E{||g_hat_b||^2})
///   = |tr(Q^-1 R_a R_b)| / sqrt(tr(R_a Q^-1 R_a) tr(R_b Q^-1 R_b))
/// ```
pub fn correlation_coefficient(s: &PilotScenario, a: usize, b: usize) -> Result<f64> {
    if a == b {
        return Err(Error::invalid("b", "correlation coefficient needs two distinct UEs"));
    }
    s.ue(a, "a")?;
    s.ue(b, "b")?;
    Whitened::new(s)?.coefficient(a, b)
}

/// Knobs for the Monte Carlo pilot phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PilotOptions {
    /// Add receiver noise. Turning it off only makes sense for filter checks.
    pub noise: bool,
    /// Multiplies every MMSE filter; `1.0` is the true estimator.
    pub filter_scale: f64,
}

impl Default for PilotOptions {
    fn default() -> Self {
        Self { noise: true, filter_scale: 1.0 }
    }
}

/// Raw Monte Carlo pilot-phase output. Per UE: true channels and MMSE
/// estimates, each `M x n_trials`.
#[derive(Clone, Debug)]
pub struct PilotTrials {
    pub channels: Vec<CMatrix>,
    pub estimates: Vec<CMatrix>,
}

impl PilotTrials {
    pub fn trials(&self) -> usize {
        self.channels[0].cols()
    }

    /// Estimates multiplied by `factor`, a deliberately biased filter.
    pub fn with_filter_scale(&self, factor: f64) -> Self {
        Self { channels: self.channels.clone(), estimates: self.estimates.iter().map(|e| e.scale(factor)).collect() }
    }

    /// `sum ||g - g_hat||^2 / sum ||g||^2` for UE `ue`.
    pub fn empirical_nmse(&self, ue: usize) -> f64 {
        let err = self.channels[ue].sub(&self.estimates[ue]).expect("same shape").frobenius_norm_sqr();
        err / self.channels[ue].frobenius_norm_sqr()
    }

    /// `(1/n) sum g_hat g_hat^H`
    pub fn estimate_covariance(&self, ue: usize) -> CMatrix {
        outer_mean(&self.estimates[ue], &self.estimates[ue])
    }

    /// `(1/n) sum g_hat (g - g_hat)^H`
    pub fn estimate_error_covariance(&self, ue: usize) -> CMatrix {
        let err = self.channels[ue].sub(&self.estimates[ue]).expect("same shape");
        outer_mean(&self.estimates[ue], &err)
    }

    /// `|sum g_hat_a^H g_hat_b| / sqrt(sum ||g_hat_a||^2 sum ||g_hat_b||^2)`
    pub fn empirical_correlation(&self, a: usize, b: usize) -> f64 {
        let ea = &self.estimates[a];
        let eb = &self.estimates[b];
        ea.inner(eb).expect("same shape").norm() / (ea.frobenius_norm_sqr() * eb.frobenius_norm_sqr()).sqrt()
    }
}

fn outer_mean(x: &CMatrix, y: &CMatrix) -> CMatrix {
    let m = x.rows();
    let n = x.cols() as f64;
    CMatrix::from_fn(m, m, |i, j| x.row(i).iter().zip(y.row(j)).map(|(a, b)| a * b.conj()).sum::<C64>() / n)
}

/// Max `|entry|` of the empirical `E{g_hat g_tilde^H}` for UE `ue`. Zero in
/// expectation for the MMSE estimator.
pub fn orthogonality_check(trials: &PilotTrials, ue: usize) -> f64 {
    trials.estimate_error_covariance(ue).max_abs()
}

struct PilotSampler {
    sqrt_rho: f64,
    factors: Vec<CMatrix>,
    filters: Vec<CMatrix>,
    m: usize,
    options: PilotOptions,
}

impl PilotSampler {
    fn new(s: &PilotScenario, options: PilotOptions) -> Result<Self> {
        let q = s.observation_covariance();
        let sqrt_rho = s.pilot_power.sqrt();
        let factors = s.ues.iter().map(coloring_factor).collect::<Result<Vec<_>>>()?;
        let filters = s
            .ues
            .iter()
            .map(|cov| {
                let q_inv_r = linalg::hermitian_solve(&q, cov.matrix().as_matrix())?;
                Ok(q_inv_r.adjoint().scale(sqrt_rho * options.filter_scale))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sqrt_rho, factors, filters, m: s.antennas(), options })
    }

    /// Runs batch `b`, handing each trial's `(channels, estimates)` to `visit`.
    fn run_batch(&self, seed: u64, b: usize, count: usize, mut visit: impl FnMut(&[Vec<C64>], &[Vec<C64>])) {
        let mut rng = rng::stream(rng::derive_seed(seed, "pilot", b as u64));
        let users = self.factors.len();
        let zero = C64::new(0.0, 0.0);
        let mut z = vec![zero; self.m];
        let mut g = vec![vec![zero; self.m]; users];
        let mut est = vec![vec![zero; self.m]; users];
        let mut y = vec![zero; self.m];
        for _ in 0..count {
            for (factor, gl) in self.factors.iter().zip(g.iter_mut()) {
                color_into(factor, &mut z, gl, &mut rng);
            }
            for (i, yi) in y.iter_mut().enumerate() {
                let noise = if self.options.noise { complex_normal(&mut rng) } else { zero };
                *yi = g.iter().map(|gl| gl[i]).sum::<C64>() * self.sqrt_rho + noise;
            }
            for (w, e) in self.filters.iter().zip(est.iter_mut()) {
                for (i, ei) in e.iter_mut().enumerate() {
                    *ei = w.row(i).iter().zip(&y).map(|(a, b)| a * b).sum();
                }
            }
            visit(&g, &est);
        }
    }
}

/// Monte Carlo pilot phase over `n_trials` independent channel and noise draws.
pub fn simulate_pilot_phase(s: &PilotScenario, seed: u64, n_trials: usize, options: PilotOptions) -> Result<PilotTrials> {
    if n_trials == 0 {
        return Err(Error::invalid("n_trials", "need at least one trial"));
    }
    let sampler = PilotSampler::new(s, options)?;
    let users = s.ues.len();
    let m = s.antennas();
    let batches: Vec<usize> = (0..n_trials.div_ceil(SAMPLE_BATCH)).collect();
    let parts = crate::par_map(&batches, |&b| {
        let count = SAMPLE_BATCH.min(n_trials - b * SAMPLE_BATCH);
        let mut out = Vec::with_capacity(count);
        sampler.run_batch(seed, b, count, |g, e| out.push((g.to_vec(), e.to_vec())));
        out
    });
    let mut channels = vec![CMatrix::zeros(m, n_trials); users];
    let mut estimates = vec![CMatrix::zeros(m, n_trials); users];
    for (t, (g, e)) in parts.into_iter().flatten().enumerate() {
        for l in 0..users {
            for i in 0..m {
                channels[l][(i, t)] = g[l][i];
                estimates[l][(i, t)] = e[l][i];
            }
        }
    }
    Ok(PilotTrials { channels, estimates })
}

/// Running sums over pilot trials, for trial counts where keeping every
/// sample is too costly.
#[derive(Clone, Debug)]
pub struct PilotStatistics {
    pub trials: usize,
    /// per UE, `sum ||g||^2`
    pub channel_energy: Vec<f64>,
    /// per UE, `sum ||g - g_hat||^2`
    pub error_energy: Vec<f64>,
    /// `sum g_hat_a^H g_hat_b` for every UE pair
    pub estimate_inner: Vec<Vec<C64>>,
    /// target UE, `sum g_hat g_hat^H`
    pub estimate_outer: CMatrix,
    /// target UE, `sum g_hat (g - g_hat)^H`
    pub cross_outer: CMatrix,
}

impl PilotStatistics {
    fn zeros(users: usize, m: usize) -> Self {
        Self {
            trials: 0,
            channel_energy: vec![0.0; users],
            error_energy: vec![0.0; users],
            estimate_inner: vec![vec![C64::new(0.0, 0.0); users]; users],
            estimate_outer: CMatrix::zeros(m, m),
            cross_outer: CMatrix::zeros(m, m),
        }
    }

    fn merge(&mut self, other: &Self) {
        self.trials += other.trials;
        for l in 0..self.channel_energy.len() {
            self.channel_energy[l] += other.channel_energy[l];
            self.error_energy[l] += other.error_energy[l];
            for k in 0..self.channel_energy.len() {
                self.estimate_inner[l][k] += other.estimate_inner[l][k];
            }
        }
        self.estimate_outer.add_scaled_assign(1.0, &other.estimate_outer).expect("same shape");
        self.cross_outer.add_scaled_assign(1.0, &other.cross_outer).expect("same shape");
    }

    pub fn nmse(&self, ue: usize) -> f64 {
        self.error_energy[ue] / self.channel_energy[ue]
    }

    pub fn correlation(&self, a: usize, b: usize) -> f64 {
        let e = &self.estimate_inner;
        e[a][b].norm() / (e[a][a].re * e[b][b].re).sqrt()
    }

    /// Empirical `Psi` of the target UE.
    pub fn estimate_covariance(&self) -> CMatrix {
        self.estimate_outer.scale(1.0 / self.trials as f64)
    }

    /// Max `|entry|` of the empirical `E{g_hat g_tilde^H}` of the target UE.
    pub fn orthogonality(&self) -> f64 {
        self.cross_outer.scale(1.0 / self.trials as f64).max_abs()
    }
}

/// Same draws as [`simulate_pilot_phase`], reduced to [`PilotStatistics`].
/// Partial sums are combined in batch order, so the result does not depend on
/// the thread count.
pub fn pilot_statistics(s: &PilotScenario, seed: u64, n_trials: usize, options: PilotOptions) -> Result<PilotStatistics> {
    if n_trials == 0 {
        return Err(Error::invalid("n_trials", "need at least one trial"));
    }
    let sampler = PilotSampler::new(s, options)?;
    let users = s.ues.len();
    let m = s.antennas();
    let target = s.target;
    let batches: Vec<usize> = (0..n_trials.div_ceil(SAMPLE_BATCH)).collect();
    let parts = crate::par_map(&batches, |&b| {
        let count = SAMPLE_BATCH.min(n_trials - b * SAMPLE_BATCH);
        let mut acc = PilotStatistics::zeros(users, m);
        let mut err = vec![C64::new(0.0, 0.0); m];
        sampler.run_batch(seed, b, count, |g, e| {
            acc.trials += 1;
            for l in 0..users {
                acc.channel_energy[l] += g[l].iter().map(|z| z.norm_sqr()).sum::<f64>();
                acc.error_energy[l] += g[l].iter().zip(&e[l]).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
                for k in 0..users {
                    acc.estimate_inner[l][k] += e[l].iter().zip(&e[k]).map(|(a, b)| a.conj() * b).sum::<C64>();
                }
            }
            let (gt, et) = (&g[target], &e[target]);
            for (x, (a, b)) in err.iter_mut().zip(gt.iter().zip(et)) {
                *x = a - b;
            }
            for i in 0..m {
                let ei = et[i];
                let outer = acc.estimate_outer.row_mut(i);
                for (o, ej) in outer.iter_mut().zip(et) {
                    *o += ei * ej.conj();
                }
                let cross = acc.cross_outer.row_mut(i);
                for (o, xj) in cross.iter_mut().zip(&err) {
                    *o += ei * xj.conj();
                }
            }
        });
        acc
    });
    let mut total = PilotStatistics::zeros(users, m);
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

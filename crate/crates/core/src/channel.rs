//! Correlated Rayleigh channel draws `g ~ CN(0, R)`.

use crate::covmodel::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, LinalgError, C64};
use crate::rng::{self, complex_normal};

/// Draws per independently seeded batch. Fixed so that results do not depend
/// on the number of worker threads.
pub const SAMPLE_BATCH: usize = 4096;

#[derive(Clone, Debug)]
pub struct ChannelSampleSet {
    pub covariance: CovarianceMatrix,
    /// `M x n_draws`, one draw per column.
    pub samples: CMatrix,
    pub seed: u64,
}

impl ChannelSampleSet {
    pub fn draws(&self) -> usize {
        self.samples.cols()
    }

    /// `(1/n) sum g g^H`
    pub fn empirical_covariance(&self) -> CMatrix {
        let m = self.samples.rows();
        let n = self.draws();
        let mut acc = CMatrix::zeros(m, m);
        for i in 0..m {
            let gi = self.samples.row(i);
            for j in i..m {
                let gj = self.samples.row(j);
                let s: C64 = gi.iter().zip(gj).map(|(a, b)| a * b.conj()).sum();
                acc[(i, j)] = s / n as f64;
                acc[(j, i)] = acc[(i, j)].conj();
            }
        }
        acc
    }
}

/// A matrix `F` with `F F^H = R`: the Cholesky factor, or `V diag(sqrt(l))`
/// when `R` is only semidefinite. Eigenvalues below `n * eps * l_max` are
/// rounding noise of zero eigenvalues and are clamped to 0.
pub fn coloring_factor(cov: &CovarianceMatrix) -> Result<CMatrix> {
    match linalg::cholesky(cov.matrix()) {
        Ok(l) => Ok(l),
        Err(LinalgError::NotPositiveDefinite { .. }) => {
            let eig = linalg::hermitian_eig(cov.matrix())?;
            let n = eig.values.len();
            let floor = n as f64 * f64::EPSILON * eig.values[0].abs();
            let roots: Vec<f64> = eig.values.iter().map(|&l| if l > floor { l.sqrt() } else { 0.0 }).collect();
            Ok(CMatrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * roots[j]))
        }
        Err(e) => Err(e.into()),
    }
}

/// Fills `out` (length M) with `F z`, `z ~ CN(0, I)`.
pub(crate) fn color_into<R: rand::Rng + ?Sized>(factor: &CMatrix, z: &mut [C64], out: &mut [C64], rng: &mut R) {
    for zi in z.iter_mut() {
        *zi = complex_normal(rng);
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = factor.row(i).iter().zip(z.iter()).map(|(a, b)| a * b).sum();
    }
}

/// Draws `n` i.i.d. channels from `CN(0, R)`.
pub fn sample_channels(cov: &CovarianceMatrix, n: usize, seed: u64) -> Result<ChannelSampleSet> {
    if n == 0 {
        return Err(Error::invalid("n_draws", "need at least one draw"));
    }
    let factor = coloring_factor(cov)?;
    let m = cov.dim();
    let batches: Vec<usize> = (0..n.div_ceil(SAMPLE_BATCH)).collect();
    let draw_batch = |b: &usize| -> Vec<Vec<C64>> {
        let mut rng = rng::stream(rng::derive_seed(seed, "channel", *b as u64));
        let count = SAMPLE_BATCH.min(n - b * SAMPLE_BATCH);
        let mut z = vec![C64::new(0.0, 0.0); m];
        (0..count)
            .map(|_| {
                let mut g = vec![C64::new(0.0, 0.0); m];
                color_into(&factor, &mut z, &mut g, &mut rng);
                g
            })
            .collect()
    };
    let columns: Vec<Vec<Vec<C64>>> = crate::par_map(&batches, draw_batch);
    let mut samples = CMatrix::zeros(m, n);
    for (t, g) in columns.into_iter().flatten().enumerate() {
        for (i, v) in g.into_iter().enumerate() {
            samples[(i, t)] = v;
        }
    }
    Ok(ChannelSampleSet { covariance: cov.clone(), samples, seed })
}

/// Sample variance of `||g||^2 / mean(||g||^2)` across the draws.
pub fn empirical_hardening(set: &ChannelSampleSet) -> Result<f64> {
    let n = set.draws();
    if n < 2 {
        return Err(Error::invalid("n_draws", "need at least two draws"));
    }
    let m = set.samples.rows();
    let mut gains = vec![0.0; n];
    for i in 0..m {
        for (g, z) in gains.iter_mut().zip(set.samples.row(i)) {
            *g += z.norm_sqr();
        }
    }
    let mean = gains.iter().sum::<f64>() / n as f64;
    if mean <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    let var = gains.iter().map(|g| (g / mean - 1.0).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodel::{CorrelationModelSpec, Shadowing};

    #[test]
    fn factor_reproduces_covariance() {
        let cov = CorrelationModelSpec::ula(16, 0.5, 0.3, 0.0, 1.0).build(Shadowing::None).unwrap();
        let f = coloring_factor(&cov).unwrap();
        let ffh = f.matmul(&f.adjoint()).unwrap();
        let err = ffh.sub(cov.matrix().as_matrix()).unwrap().frobenius_norm();
        assert!(err <= 1e-9 * cov.matrix().as_matrix().frobenius_norm());
    }

    #[test]
    fn semidefinite_falls_back_to_eigen_factor() {
        let cov = CorrelationModelSpec::ula(4, 1.0, 0.8, 0.0, 1.0).build(Shadowing::None).unwrap();
        assert!(linalg::cholesky(cov.matrix()).is_err());
        let f = coloring_factor(&cov).unwrap();
        let ffh = f.matmul(&f.adjoint()).unwrap();
        assert!(ffh.sub(cov.matrix().as_matrix()).unwrap().frobenius_norm() <= 1e-9 * 4.0);
    }

    #[test]
    fn rank_one_draws_follow_steering_vector() {
        let theta = 0.8;
        let cov = CorrelationModelSpec::ula(4, 1.0, theta, 0.0, 1.0).build(Shadowing::None).unwrap();
        let set = sample_channels(&cov, 200, 3).unwrap();
        for t in 0..set.draws() {
            let g = set.samples.column(t);
            // with R(m, n) = c^(n-m), c = e^{i theta}, draws are (x, x c^-1, x c^-2, ...)
            for (k, gk) in g.iter().enumerate() {
                let expected = g[0] * C64::from_polar(1.0, -(k as f64) * theta);
                assert!((gk - expected).norm() <= 1e-8 * g[0].norm().max(1e-300));
            }
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let cov = CorrelationModelSpec::ula(8, 0.5, 0.0, 2.0, 1.0).realize(&mut rng::stream(1)).unwrap();
        let a = sample_channels(&cov, 5000, 11).unwrap();
        let b = sample_channels(&cov, 5000, 11).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = sample_channels(&cov, 5000, 12).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn zero_draws_rejected() {
        let cov = CorrelationModelSpec::uncorrelated(2, 1.0).build(Shadowing::None).unwrap();
        assert!(sample_channels(&cov, 0, 0).is_err());
        let one = sample_channels(&cov, 1, 0).unwrap();
        assert!(empirical_hardening(&one).is_err());
    }
}

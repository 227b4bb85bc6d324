//! Scaled sigma points and the unscented transform.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Scaling of the sigma-point spread.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtParams<T: Scalar> {
    pub alpha: T,
    pub beta: T,
    pub kappa: T,
}

impl<T: Scalar> Default for UtParams<T> {
    fn default() -> Self {
        Self { alpha: lit(1e-1), beta: lit(2.0), kappa: T::zero() }
    }
}

impl<T: Scalar> UtParams<T> {
    pub fn lambda(&self, n: usize) -> T {
        let n: T = lit(n as f64);
        self.alpha * self.alpha * (n + self.kappa) - n
    }
}

/// Diagonal jitter added before every factorization.
const JITTER: f64 = 1e-12;

/// Lower Cholesky factor of `cov`, symmetrized and jittered.
///
/// A failed attempt is retried once with a jitter scaled to the largest
/// diagonal entry.
pub fn cholesky_jittered<T: Scalar>(cov: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = cov.nrows();
    let sym = (cov + cov.transpose()) * lit::<T>(0.5);
    let eye = DMatrix::<T>::identity(n, n);
    if let Some(c) = (sym.clone() + &eye * lit::<T>(JITTER)).cholesky() {
        return Ok(c.l());
    }
    let scale = sym.diagonal().iter().fold(T::one(), |m, &d| if d.abs() > m { d.abs() } else { m });
    (sym + eye * (lit::<T>(JITTER * 1e3) * scale))
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

/// `2n + 1` weighted points reproducing a mean and covariance.
#[derive(Clone, Debug)]
pub struct SigmaPoints<T: Scalar> {
    pub points: Vec<DVector<T>>,
    pub mean_weights: Vec<T>,
    pub cov_weights: Vec<T>,
}

impl<T: Scalar> SigmaPoints<T> {
    pub fn new(mean: &DVector<T>, cov: &DMatrix<T>, params: &UtParams<T>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::ShapeMismatch { expected: n, found: cov.nrows() });
        }
        let lambda = params.lambda(n);
        let spread = lit::<T>(n as f64) + lambda;
        let l = cholesky_jittered(&(cov * spread))?;

        let mut points = Vec::with_capacity(2 * n + 1);
        points.push(mean.clone());
        for j in 0..n {
            points.push(mean + l.column(j));
        }
        for j in 0..n {
            points.push(mean - l.column(j));
        }

        let w0 = lambda / spread;
        let wi = T::one() / (lit::<T>(2.0) * spread);
        let mut mean_weights = vec![wi; 2 * n + 1];
        let mut cov_weights = vec![wi; 2 * n + 1];
        mean_weights[0] = w0;
        cov_weights[0] = w0 + T::one() - params.alpha * params.alpha + params.beta;
        Ok(Self { points, mean_weights, cov_weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weighted mean of arbitrary per-point values.
    pub fn weighted_mean(&self, values: &[DVector<T>]) -> DVector<T> {
        let mut mean = DVector::zeros(values[0].len());
        for (w, v) in self.mean_weights.iter().zip(values) {
            mean.axpy(*w, v, T::one());
        }
        mean
    }

    /// Weighted cross covariance `Σ wᶜ (a - ā)(b - b̄)ᵀ`.
    pub fn weighted_cross(&self, a: &[DVector<T>], a_mean: &DVector<T>, b: &[DVector<T>], b_mean: &DVector<T>) -> DMatrix<T> {
        let mut out = DMatrix::zeros(a_mean.len(), b_mean.len());
        for ((w, ai), bi) in self.cov_weights.iter().zip(a).zip(b) {
            let da = ai - a_mean;
            let db = bi - b_mean;
            out.ger(*w, &da, &db, T::one());
        }
        out
    }
}

/// Output of [`unscented_transform`].
#[derive(Clone, Debug)]
pub struct UtOutput<T: Scalar> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
    /// `Cov[x, y]`, `n × m`.
    pub cross: DMatrix<T>,
}

/// Propagates `N(mean, cov)` through `f`.
pub fn unscented_transform<T, F>(mean: &DVector<T>, cov: &DMatrix<T>, f: F, params: &UtParams<T>) -> Result<UtOutput<T>>
where
    T: Scalar,
    F: Fn(&DVector<T>) -> DVector<T>,
{
    let sigma = SigmaPoints::new(mean, cov, params)?;
    let ys: Vec<DVector<T>> = sigma.points.iter().map(&f).collect();
    let y_mean = sigma.weighted_mean(&ys);
    let y_cov = sigma.weighted_cross(&ys, &y_mean, &ys, &y_mean);
    let cross = sigma.weighted_cross(&sigma.points, mean, &ys, &y_mean);
    Ok(UtOutput { mean: y_mean, cov: y_cov, cross })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn affine_scaling_example() {
        let mean = DVector::from_vec(vec![1.0, 2.0]);
        let cov = DMatrix::identity(2, 2);
        let out = unscented_transform(&mean, &cov, |x| x * 2.0, &UtParams::default()).unwrap();
        assert_relative_eq!(out.mean, DVector::from_vec(vec![2.0, 4.0]), epsilon = 1e-8);
        assert_relative_eq!(out.cov, DMatrix::identity(2, 2) * 4.0, epsilon = 1e-8);
        assert_relative_eq!(out.cross, DMatrix::identity(2, 2) * 2.0, epsilon = 1e-8);
    }

    #[test]
    fn constant_map_has_zero_covariance() {
        let mean = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let cov = DMatrix::identity(3, 3) * 0.5;
        let c = DVector::from_vec(vec![7.0, 8.0]);
        let out = unscented_transform(&mean, &cov, |_| c.clone(), &UtParams::default()).unwrap();
        assert_relative_eq!(out.mean, c, epsilon = 1e-9);
        assert!(out.cov.abs().max() < 1e-9);
        assert!(out.cross.abs().max() < 1e-9);
    }

    #[test]
    fn sigma_points_reconstruct_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=18 {
            let mean = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let cov = random_spd(n, &mut rng);
            let s = SigmaPoints::new(&mean, &cov, &UtParams::default()).unwrap();
            assert_eq!(s.len(), 2 * n + 1);
            let m = s.weighted_mean(&s.points);
            // reconstruction with the mean weights on both sides of the outer product
            let mut c = DMatrix::zeros(n, n);
            for (w, p) in s.mean_weights.iter().zip(&s.points) {
                let d = p - &m;
                c += &d * d.transpose() * *w;
            }
            assert!((m - &mean).abs().max() < 1e-9);
            assert!((c - &cov).abs().max() < 1e-9 * (1.0 + cov.abs().max()));
        }
    }

    #[test]
    fn square_matches_monte_carlo() {
        let mean = DVector::from_vec(vec![0.0]);
        let cov = DMatrix::from_element(1, 1, 1.0);
        let out = unscented_transform(&mean, &cov, |x| x.map(|v| v * v), &UtParams::default()).unwrap();
        // oracle: 1e6-sample Monte Carlo of E[x²]
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mc: f64 = (0..n)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                x * x
            })
            .sum::<f64>()
            / n as f64;
        // standard error of the sample mean of χ²₁ is √2/√n
        assert!((out.mean[0] - mc).abs() < 5.0 * (2.0f64).sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn indefinite_covariance_is_reported() {
        let mean = DVector::from_vec(vec![0.0, 0.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = unscented_transform(&mean, &cov, |x| x.clone(), &UtParams::default()).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite));
    }

    #[test]
    fn zero_covariance_survives_jitter() {
        let mean = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let cov = DMatrix::zeros(3, 3);
        let out = unscented_transform(&mean, &cov, |x| x * 3.0, &UtParams::default()).unwrap();
        assert_relative_eq!(out.mean, mean * 3.0, epsilon = 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let mean = DVector::from_vec(vec![1.0f32, -1.0]);
        let cov = DMatrix::identity(2, 2) * 0.25f32;
        let out = unscented_transform(&mean, &cov, |x| x * 2.0, &UtParams::default()).unwrap();
        assert!((out.cov[(0, 0)] - 1.0).abs() < 1e-3);
    }
}

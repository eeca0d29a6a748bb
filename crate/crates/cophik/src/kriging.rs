//! Ordinary Kriging: stationary GP with constant mean, Gaussian
//! correlation, closed-form MLE for mean and process variance, and
//! correlation lengths chosen by maximizing the concentrated log marginal
//! likelihood over multi-start simplex descent in log-length space.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{CophikError, Result};
use crate::grid::Point;
use crate::kernel::gaussian_correlation;
use crate::linalg::{spd_factorize, NuggetPolicy, SpdFactorization};
use crate::obs::ObservationSet;
use crate::optimize::{multi_start_max, StartRecord};

/// Floor for the process variance inside logarithms, so perfectly
/// reproduced data keeps the likelihood finite.
pub(crate) const SIGMA2_FLOOR: f64 = 1e-30;

/// Settings for the correlation-length search.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Explicit per-axis length bounds; derived from the data extent when
    /// absent.
    pub length_bounds: Option<Vec<(f64, f64)>>,
    /// Lower bound factor applied to each axis extent (default 1e-2).
    pub lower_factor: f64,
    /// Upper bound factor applied to each axis extent (default 1e2).
    pub upper_factor: f64,
    /// Latin-hypercube multi-starts in log-length space.
    pub starts: usize,
    /// Convergence tolerance on the log-likelihood spread of the simplex.
    pub tol: f64,
    /// Iteration cap per start.
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            length_bounds: None,
            lower_factor: 1e-2,
            upper_factor: 1e2,
            starts: 10,
            tol: 1e-8,
            max_iters: 500,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts < 1 {
            return Err(CophikError::InvalidArgument("optimizer needs at least one start".into()));
        }
        if !(self.lower_factor > 0.0) || !(self.upper_factor > self.lower_factor) {
            return Err(CophikError::InvalidArgument(
                "length bound factors must satisfy 0 < lower < upper".into(),
            ));
        }
        if let Some(b) = &self.length_bounds {
            for &(lo, hi) in b {
                if !(lo > 0.0) || !(hi > lo) {
                    return Err(CophikError::InvalidArgument(format!(
                        "length bounds must be positive with lower < upper, got ({lo}, {hi})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resolve per-axis bounds, falling back to factors of the observation
    /// bounding-box extent (extent 0 falls back to 1).
    fn resolve_bounds(&self, obs: &ObservationSet) -> Vec<(f64, f64)> {
        if let Some(b) = &self.length_bounds {
            return b.clone();
        }
        let d = obs.dim();
        (0..d)
            .map(|k| {
                let lo = obs
                    .locations()
                    .iter()
                    .map(|p| p.coords[k])
                    .fold(f64::INFINITY, f64::min);
                let hi = obs
                    .locations()
                    .iter()
                    .map(|p| p.coords[k])
                    .fold(f64::NEG_INFINITY, f64::max);
                let extent = if hi > lo { hi - lo } else { 1.0 };
                (self.lower_factor * extent, self.upper_factor * extent)
            })
            .collect()
    }
}

/// Closed-form MLE of the constant mean and process variance given the
/// factorized unit-variance correlation matrix:
/// mu = (1^T Psi^{-1} y) / (1^T Psi^{-1} 1),
/// sigma2 = (y - 1 mu)^T Psi^{-1} (y - 1 mu) / N.
pub fn mle_mean_variance(psi_fact: &SpdFactorization, y: &Array1<f64>) -> Result<(f64, f64)> {
    let n = psi_fact.n();
    if y.len() != n {
        return Err(CophikError::DimensionMismatch { expected: n, got: y.len() });
    }
    let ones: Array1<f64> = Array1::ones(n);
    let psi_inv_ones = psi_fact.solve(&ones);
    let denom = ones.dot(&psi_inv_ones);
    if !(denom > 0.0) {
        return Err(CophikError::Degenerate(format!(
            "1^T Psi^{{-1}} 1 = {denom:.3e} is not positive"
        )));
    }
    let mu = ones.dot(&psi_fact.solve(y)) / denom;
    let r = y - &(ones * mu);
    let sigma2 = psi_fact.quad_form(&r) / n as f64;
    Ok((mu, sigma2.max(0.0)))
}

/// A fitted ordinary Kriging model.
#[derive(Debug, Clone)]
pub struct OrdinaryKrigingModel {
    obs: ObservationSet,
    lengths: Vec<f64>,
    mu_hat: f64,
    sigma2_hat: f64,
    psi_fact: SpdFactorization,
    /// Psi^{-1} (y - 1 mu)
    weights: Array1<f64>,
    log_likelihood: f64,
    trace: Vec<StartRecord>,
}

impl OrdinaryKrigingModel {
    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn mu_hat(&self) -> f64 {
        self.mu_hat
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.sigma2_hat
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn nugget(&self) -> f64 {
        self.psi_fact.alpha()
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }

    /// Per-start optimization records (start point, start and final
    /// likelihood).
    pub fn trace(&self) -> &[StartRecord] {
        &self.trace
    }

    /// Posterior mean and MSE at a point:
    /// mean = mu + psi^T Psi^{-1} (y - 1 mu),
    /// mse  = sigma2 (1 - psi^T Psi^{-1} psi), clamped at 0.
    pub fn predict(&self, xstar: &Point) -> Result<(f64, f64)> {
        if xstar.dim() != self.obs.dim() {
            return Err(CophikError::DimensionMismatch {
                expected: self.obs.dim(),
                got: xstar.dim(),
            });
        }
        let psi: Array1<f64> = self
            .obs
            .locations()
            .iter()
            .map(|x| gaussian_correlation(&self.lengths, x, xstar))
            .collect();
        let mean = self.mu_hat + psi.dot(&self.weights);
        if self.sigma2_hat == 0.0 {
            return Ok((mean, 0.0));
        }
        let mse = self.sigma2_hat * (1.0 - self.psi_fact.quad_form(&psi));
        Ok((mean, mse.max(0.0)))
    }
}

/// Concentrated log marginal likelihood at fixed lengths: the closed-form
/// MLE for mean and variance substituted into the Gaussian likelihood.
/// The residual quadratic form collapses to N by construction, leaving
/// -N/2 (1 + ln sigma2 + ln 2 pi) - 1/2 ln|Psi|.
fn concentrated_fit(
    lengths: &[f64],
    obs: &ObservationSet,
    policy: &NuggetPolicy,
) -> Result<(f64, f64, f64, SpdFactorization)> {
    let n = obs.len();
    let pts = obs.locations();
    let mut psi = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = gaussian_correlation(lengths, &pts[i], &pts[j]);
            psi[[i, j]] = v;
            psi[[j, i]] = v;
        }
    }
    let fact = spd_factorize(&psi, policy)?;
    let y = Array1::from_vec(obs.values().to_vec());
    let (mu, sigma2) = mle_mean_variance(&fact, &y)?;
    let nf = n as f64;
    let ll = -0.5 * nf * (1.0 + sigma2.max(SIGMA2_FLOOR).ln() + (2.0 * std::f64::consts::PI).ln())
        - 0.5 * fact.log_det();
    Ok((ll, mu, sigma2, fact))
}

/// Fit correlation lengths by maximizing the concentrated log marginal
/// likelihood, multi-start simplex descent in log-length space. A single
/// observation short-circuits to the degenerate constant model.
pub fn fit_hyperparameters(
    obs: &ObservationSet,
    cfg: &OptimizerConfig,
    policy: &NuggetPolicy,
) -> Result<OrdinaryKrigingModel> {
    cfg.validate()?;
    let bounds = cfg.resolve_bounds(obs);
    if bounds.len() != obs.dim() {
        return Err(CophikError::DimensionMismatch { expected: obs.dim(), got: bounds.len() });
    }

    // geometric mean of the bounds, used when there is nothing to optimize
    let mid_lengths: Vec<f64> = bounds
        .iter()
        .map(|&(lo, hi)| ((lo.ln() + hi.ln()) / 2.0).exp())
        .collect();

    if obs.len() == 1 {
        let (ll, mu, sigma2, fact) = concentrated_fit(&mid_lengths, obs, policy)?;
        let y = Array1::from_vec(obs.values().to_vec());
        let weights = fact.solve(&(&y - &Array1::from_elem(1, mu)));
        return Ok(OrdinaryKrigingModel {
            obs: obs.clone(),
            lengths: mid_lengths,
            mu_hat: mu,
            sigma2_hat: sigma2,
            psi_fact: fact,
            weights,
            log_likelihood: ll,
            trace: Vec::new(),
        });
    }

    let log_bounds: Vec<(f64, f64)> = bounds.iter().map(|&(lo, hi)| (lo.ln(), hi.ln())).collect();
    let objective = |z: &[f64]| -> f64 {
        let lengths: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        match concentrated_fit(&lengths, obs, policy) {
            Ok((ll, _, _, _)) => ll,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let result = multi_start_max(&objective, &log_bounds, cfg.starts, cfg.tol, cfg.max_iters, &mut rng);
    if !result.best_value.is_finite() {
        return Err(CophikError::OptimizationFailed(
            "no correlation-length candidate admitted a factorization".into(),
        ));
    }
    let lengths: Vec<f64> = result.best.iter().map(|v| v.exp()).collect();
    let (ll, mu, sigma2, fact) = concentrated_fit(&lengths, obs, policy)?;
    let y = Array1::from_vec(obs.values().to_vec());
    let ones: Array1<f64> = Array1::ones(obs.len());
    let weights = fact.solve(&(&y - &(ones * mu)));
    Ok(OrdinaryKrigingModel {
        obs: obs.clone(),
        lengths,
        mu_hat: mu,
        sigma2_hat: sigma2,
        psi_fact: fact,
        weights,
        log_likelihood: ll,
        trace: result.starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GenericGp;
    use crate::kernel::{gaussian_kernel, GaussianKernelParams};
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::Rng;

    fn p(coords: &[f64]) -> Point {
        Point::new(coords.to_vec())
    }

    #[test]
    fn mle_identity_psi_reduces_to_sample_statistics() {
        let policy = NuggetPolicy::default();
        let fact = spd_factorize(&Array2::eye(4), &policy).unwrap();
        // constant data: mean c, variance 0
        let (mu, s2) = mle_mean_variance(&fact, &array![2.5, 2.5, 2.5, 2.5]).unwrap();
        assert_eq!(mu, 2.5);
        assert_eq!(s2, 0.0);
        // general data: sample mean and population (1/N) variance
        let y = array![1.0, 2.0, 4.0, 5.0];
        let (mu, s2) = mle_mean_variance(&fact, &y).unwrap();
        assert_relative_eq!(mu, 3.0, max_relative = 1e-14);
        let pop_var = y.iter().map(|v| (v - 3.0) * (v - 3.0)).sum::<f64>() / 4.0;
        assert_relative_eq!(s2, pop_var, max_relative = 1e-14);
    }

    #[test]
    fn mle_two_point_exact_arithmetic_oracle() {
        // Psi = [[1, 1/2], [1/2, 1]], y = (0, 1):
        // Psi^{-1} = 4/3 [[1, -1/2], [-1/2, 1]]
        // mu = (2/3) / (4/3) = 1/2; residual (-1/2, 1/2);
        // quad form = 1, sigma2 = 1/2
        let psi = array![[1.0, 0.5], [0.5, 1.0]];
        let fact = spd_factorize(&psi, &NuggetPolicy::default()).unwrap();
        let (mu, s2) = mle_mean_variance(&fact, &array![0.0, 1.0]).unwrap();
        assert_relative_eq!(mu, 0.5, max_relative = 1e-14);
        assert_relative_eq!(s2, 0.5, max_relative = 1e-14);
    }

    fn sample_obs_1d(n: usize, seed: u64) -> ObservationSet {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin() + 0.1 * rng.gen_range(-1.0..1.0)).collect();
        ObservationSet::new(xs.into_iter().map(|x| p(&[x])).collect(), ys).unwrap()
    }

    #[test]
    fn fitted_likelihood_dominates_every_start() {
        let obs = sample_obs_1d(6, 21);
        let cfg = OptimizerConfig { starts: 6, seed: 4, ..Default::default() };
        let model = fit_hyperparameters(&obs, &cfg, &NuggetPolicy::default()).unwrap();
        assert!(!model.trace().is_empty());
        for rec in model.trace() {
            assert!(model.log_likelihood() >= rec.start_value - 1e-12);
            assert!(model.log_likelihood() >= rec.best_value - 1e-12);
        }
    }

    #[test]
    fn degenerate_constant_data_keeps_likelihood_finite() {
        let obs = ObservationSet::new(vec![p(&[0.0]), p(&[1.0])], vec![2.0, 2.0]).unwrap();
        let model = fit_hyperparameters(&obs, &OptimizerConfig::default(), &NuggetPolicy::default()).unwrap();
        assert!(model.log_likelihood().is_finite());
        assert_eq!(model.sigma2_hat(), 0.0);
        let (mean, var) = model.predict(&p(&[0.4])).unwrap();
        assert_relative_eq!(mean, 2.0, max_relative = 1e-12);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn single_observation_collapses_to_its_value() {
        let obs = ObservationSet::new(vec![p(&[0.3, 0.6])], vec![7.5]).unwrap();
        let model = fit_hyperparameters(&obs, &OptimizerConfig::default(), &NuggetPolicy::default()).unwrap();
        assert_eq!(model.mu_hat(), 7.5);
        let (mean, var) = model.predict(&p(&[0.9, 0.1])).unwrap();
        assert_relative_eq!(mean, 7.5, max_relative = 1e-14);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn interpolates_with_zero_nugget_and_reverts_to_prior_far_away() {
        let obs = sample_obs_1d(5, 33);
        let model = fit_hyperparameters(&obs, &OptimizerConfig::default(), &NuggetPolicy::default()).unwrap();
        if model.nugget() == 0.0 {
            for (x, y) in obs.locations().iter().zip(obs.values()) {
                let (mean, var) = model.predict(x).unwrap();
                assert_relative_eq!(mean, *y, max_relative = 1e-8);
                assert!(var <= 1e-8 * model.sigma2_hat());
            }
        }
        // far from all data the prediction reverts to (mu, sigma2)
        let (mean, var) = model.predict(&p(&[1e6])).unwrap();
        assert_relative_eq!(mean, model.mu_hat(), max_relative = 1e-12);
        assert_relative_eq!(var, model.sigma2_hat(), max_relative = 1e-12);
    }

    #[test]
    fn prior_variance_bounds_posterior_mse() {
        let obs = sample_obs_1d(6, 55);
        let model = fit_hyperparameters(&obs, &OptimizerConfig::default(), &NuggetPolicy::default()).unwrap();
        for i in 0..100 {
            let (_, var) = model.predict(&p(&[i as f64 / 99.0])).unwrap();
            assert!(var <= model.sigma2_hat() * (1.0 + 1e-12));
            assert!(var >= 0.0);
        }
    }

    #[test]
    fn matches_generic_gp_posterior_with_substituted_kernel() {
        // cross-module equivalence: constant mean mu, kernel sigma2 * correlation
        let obs = sample_obs_1d(6, 77);
        let model = fit_hyperparameters(&obs, &OptimizerConfig::default(), &NuggetPolicy::default()).unwrap();
        let params =
            GaussianKernelParams::new(model.sigma2_hat(), model.lengths().to_vec()).unwrap();
        let mu = model.mu_hat();
        let gp = GenericGp::fit(
            move |_: &Point| mu,
            |a: &Point, b: &Point| gaussian_kernel(&params, a, b).unwrap(),
            model.observations(),
            &NuggetPolicy::default(),
        )
        .unwrap();
        for i in 0..40 {
            let x = p(&[i as f64 / 39.0]);
            let (m1, v1) = model.predict(&x).unwrap();
            let (m2, v2) = gp.predict(&x).unwrap();
            assert_relative_eq!(m1, m2, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(v1, v2, max_relative = 1e-10, epsilon = 1e-10);
        }
    }

    #[test]
    fn recovers_correlation_length_within_factor_three_on_median() {
        // Draw from a 1-D GP with l = 0.3 at 5 points and refit; the
        // median recovered length over 20 seeds stays within a factor of
        // 3 of the truth.
        let true_len = 0.3;
        let xs: Vec<f64> = (0..5).map(|i| i as f64 / 4.0).collect();
        let params = GaussianKernelParams::new(1.0, vec![true_len]).unwrap();
        let pts: Vec<Point> = xs.iter().map(|&x| p(&[x])).collect();
        let c = crate::kernel::assemble_covariance(
            |a: &Point, b: &Point| gaussian_kernel(&params, a, b).unwrap(),
            &pts,
        )
        .unwrap();
        let fact = spd_factorize(&c, &NuggetPolicy::default()).unwrap();
        let lower = fact.lower();

        let mut recovered = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(1000 + seed);
            // Box-Muller draw, independent of the library generator
            let mut z = Array1::zeros(5);
            for i in 0..5 {
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                z[i] = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            }
            let y = lower.dot(&z);
            let obs = ObservationSet::new(pts.clone(), y.to_vec()).unwrap();
            let cfg = OptimizerConfig { seed, ..Default::default() };
            let model = fit_hyperparameters(&obs, &cfg, &NuggetPolicy::default()).unwrap();
            recovered.push(model.lengths()[0]);
        }
        recovered.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (recovered[9] + recovered[10]);
        assert!(
            median / true_len >= 1.0 / 3.0 && median / true_len <= 3.0,
            "median recovered length {median} outside the factor-3 band around {true_len}"
        );
    }

    #[test]
    fn translation_equivariance() {
        let obs = sample_obs_1d(6, 91);
        let cfg = OptimizerConfig { seed: 12, ..Default::default() };
        let model = fit_hyperparameters(&obs, &cfg, &NuggetPolicy::default()).unwrap();
        let shifted = ObservationSet::new(
            obs.locations().iter().map(|q| p(&[q.coords[0] + 17.25])).collect(),
            obs.values().to_vec(),
        )
        .unwrap();
        let model_shifted = fit_hyperparameters(&shifted, &cfg, &NuggetPolicy::default()).unwrap();
        for i in 0..20 {
            let x = i as f64 / 19.0;
            let (m1, v1) = model.predict(&p(&[x])).unwrap();
            let (m2, v2) = model_shifted.predict(&p(&[x + 17.25])).unwrap();
            assert_relative_eq!(m1, m2, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(v1, v2, max_relative = 1e-10, epsilon = 1e-10);
        }
    }
}

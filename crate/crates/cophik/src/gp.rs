//! Generic GP posterior: condition an arbitrary mean function and kernel
//! on noiseless observations.
//!
//! The covariance of the observations is factorized once per fit and the
//! factorization is reused for every prediction point.

use ndarray::Array1;

use crate::error::Result;
use crate::grid::Point;
use crate::kernel::{assemble_covariance, covariance_vector};
use crate::linalg::{spd_factorize, NuggetPolicy, SpdFactorization};
use crate::obs::ObservationSet;

/// A conditioned GP with arbitrary prior mean and kernel.
pub struct GenericGp<'a, M, K>
where
    M: Fn(&Point) -> f64,
    K: Fn(&Point, &Point) -> f64,
{
    mean_fn: M,
    kernel: K,
    obs: &'a ObservationSet,
    fact: SpdFactorization,
    /// C^{-1} (y - mu)
    weights: Array1<f64>,
}

impl<'a, M, K> GenericGp<'a, M, K>
where
    M: Fn(&Point) -> f64,
    K: Fn(&Point, &Point) -> f64,
{
    pub fn fit(mean_fn: M, kernel: K, obs: &'a ObservationSet, policy: &NuggetPolicy) -> Result<Self> {
        let c = assemble_covariance(&kernel, obs.locations())?;
        let fact = spd_factorize(&c, policy)?;
        let mu: Array1<f64> = obs.locations().iter().map(&mean_fn).collect();
        let y = Array1::from_vec(obs.values().to_vec());
        let weights = fact.solve(&(&y - &mu));
        Ok(GenericGp { mean_fn, kernel, obs, fact, weights })
    }

    pub fn factorization(&self) -> &SpdFactorization {
        &self.fact
    }

    /// Posterior mean and variance at a point. The variance is clamped to
    /// [0, inf); the raw value can dip slightly negative in floating point.
    pub fn predict(&self, xstar: &Point) -> Result<(f64, f64)> {
        let c = covariance_vector(&self.kernel, self.obs.locations(), xstar)?;
        let mean = (self.mean_fn)(xstar) + c.dot(&self.weights);
        let prior_var = (self.kernel)(xstar, xstar);
        let raw = prior_var - self.fact.quad_form(&c);
        Ok((mean, raw.max(0.0)))
    }

    /// Posterior variance before clamping, for diagnostics.
    pub fn predict_raw_variance(&self, xstar: &Point) -> Result<f64> {
        let c = covariance_vector(&self.kernel, self.obs.locations(), xstar)?;
        Ok((self.kernel)(xstar, xstar) - self.fact.quad_form(&c))
    }
}

/// One-shot posterior at a single point; fits and predicts in one call.
pub fn gp_posterior<M, K>(
    mean_fn: M,
    kernel: K,
    obs: &ObservationSet,
    policy: &NuggetPolicy,
    xstar: &Point,
) -> Result<(f64, f64)>
where
    M: Fn(&Point) -> f64,
    K: Fn(&Point, &Point) -> f64,
{
    GenericGp::fit(mean_fn, kernel, obs, policy)?.predict(xstar)
}

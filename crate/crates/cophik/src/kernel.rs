//! Gaussian (squared-exponential) kernel and covariance assembly.

use ndarray::{Array1, Array2};

use crate::error::{CophikError, Result};
use crate::grid::Point;

/// Hyperparameters of the anisotropic Gaussian kernel
/// k(tau) = sigma2 * exp(-1/2 * sum_i (tau_i / l_i)^2).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernelParams {
    pub sigma2: f64,
    pub lengths: Vec<f64>,
}

impl GaussianKernelParams {
    pub fn new(sigma2: f64, lengths: Vec<f64>) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(CophikError::InvalidArgument(format!(
                "process variance must be positive and finite, got {sigma2}"
            )));
        }
        if lengths.is_empty() || lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(CophikError::InvalidArgument(format!(
                "correlation lengths must be positive and finite, got {lengths:?}"
            )));
        }
        Ok(GaussianKernelParams { sigma2, lengths })
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }
}

/// Weighted squared norm sum_i ((x_i - y_i) / l_i)^2 of the separation.
fn weighted_sq_norm(lengths: &[f64], x: &Point, y: &Point) -> f64 {
    x.coords
        .iter()
        .zip(&y.coords)
        .zip(lengths)
        .map(|((a, b), l)| {
            let t = (a - b) / l;
            t * t
        })
        .sum()
}

/// Gaussian kernel evaluation; symmetric in its point arguments and
/// bounded by sigma2.
pub fn gaussian_kernel(params: &GaussianKernelParams, x: &Point, y: &Point) -> Result<f64> {
    if x.dim() != params.dim() || y.dim() != params.dim() {
        return Err(CophikError::DimensionMismatch {
            expected: params.dim(),
            got: if x.dim() != params.dim() { x.dim() } else { y.dim() },
        });
    }
    Ok(params.sigma2 * (-0.5 * weighted_sq_norm(&params.lengths, x, y)).exp())
}

/// Unit-variance Gaussian correlation, the kernel with sigma2 factored out.
pub fn gaussian_correlation(lengths: &[f64], x: &Point, y: &Point) -> f64 {
    (-0.5 * weighted_sq_norm(lengths, x, y)).exp()
}

/// N x N covariance matrix of a kernel over a point set. The result is
/// exactly symmetric: entry (j, i) is copied from (i, j).
pub fn assemble_covariance<K>(kernel: K, points: &[Point]) -> Result<Array2<f64>>
where
    K: Fn(&Point, &Point) -> f64,
{
    let n = points.len();
    if n == 0 {
        return Err(CophikError::InvalidArgument("empty point set".into()));
    }
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = kernel(&points[i], &points[j]);
            if !v.is_finite() {
                return Err(CophikError::NonFinite { context: "kernel value" });
            }
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(c)
}

/// Vector of covariances between each point of `points` and `xstar`.
pub fn covariance_vector<K>(kernel: K, points: &[Point], xstar: &Point) -> Result<Array1<f64>>
where
    K: Fn(&Point, &Point) -> f64,
{
    let mut c = Array1::zeros(points.len());
    for (i, p) in points.iter().enumerate() {
        if p.dim() != xstar.dim() {
            return Err(CophikError::DimensionMismatch { expected: p.dim(), got: xstar.dim() });
        }
        let v = kernel(p, xstar);
        if !v.is_finite() {
            return Err(CophikError::NonFinite { context: "kernel value" });
        }
        c[i] = v;
    }
    Ok(c)
}

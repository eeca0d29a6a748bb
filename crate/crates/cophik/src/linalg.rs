//! Dense symmetric linear algebra: Cholesky factorization with a nugget
//! ladder, triangular solves, log marginal likelihood, and a Jacobi
//! eigenvalue sweep for the small matrices this toolkit works with.

use ndarray::{Array1, Array2};

use crate::error::{CophikError, Result};

/// Regularization policy for covariance factorization. The ladder of
/// candidate nuggets is {0, a0, 10*a0, ...} capped at `rel_cap`, all
/// relative to the mean diagonal of the matrix being factorized.
#[derive(Debug, Clone, PartialEq)]
pub struct NuggetPolicy {
    pub rel_initial: f64,
    pub growth: f64,
    pub rel_cap: f64,
}

impl Default for NuggetPolicy {
    fn default() -> Self {
        NuggetPolicy { rel_initial: 1e-10, growth: 10.0, rel_cap: 1e-4 }
    }
}

impl NuggetPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_initial > 0.0) || !(self.rel_cap >= self.rel_initial) || !(self.growth > 1.0) {
            return Err(CophikError::InvalidArgument(format!(
                "nugget policy requires 0 < initial <= cap and growth > 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Absolute nugget candidates for a matrix with the given mean diagonal,
    /// starting at zero.
    fn ladder(&self, mean_diag: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        let cap = self.rel_cap * mean_diag;
        let mut a = self.rel_initial * mean_diag;
        while a < cap {
            out.push(a);
            a *= self.growth;
        }
        if cap > 0.0 {
            out.push(cap);
        }
        out
    }
}

/// Cholesky factor of C + alpha*I together with the nugget actually used
/// and the log-determinant of the regularized matrix.
#[derive(Debug, Clone)]
pub struct SpdFactorization {
    lower: Array2<f64>,
    alpha: f64,
    log_det: f64,
}

impl SpdFactorization {
    pub fn n(&self) -> usize {
        self.lower.nrows()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    /// Solve (C + alpha*I) x = b.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let z = self.forward(b);
        self.backward(&z)
    }

    /// Quadratic form b^T (C + alpha*I)^{-1} b, always >= 0.
    pub fn quad_form(&self, b: &Array1<f64>) -> f64 {
        let z = self.forward(b);
        z.iter().map(|v| v * v).sum()
    }

    /// Forward substitution L z = b.
    fn forward(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.n();
        assert_eq!(b.len(), n, "rhs length mismatch");
        let l = &self.lower;
        let mut z = Array1::zeros(n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[[i, k]] * z[k];
            }
            z[i] = s / l[[i, i]];
        }
        z
    }

    /// Backward substitution L^T x = z.
    fn backward(&self, z: &Array1<f64>) -> Array1<f64> {
        let n = self.n();
        let l = &self.lower;
        let mut x = Array1::zeros(n);
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= l[[k, i]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
        x
    }
}

fn cholesky_lower(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Factorize C + alpha*I for the smallest alpha in the policy ladder that
/// admits a Cholesky factorization. C must be symmetric and finite.
pub fn spd_factorize(c: &Array2<f64>, policy: &NuggetPolicy) -> Result<SpdFactorization> {
    policy.validate()?;
    let n = c.nrows();
    if n == 0 || c.ncols() != n {
        return Err(CophikError::InvalidArgument(format!(
            "expected square nonempty matrix, got {}x{}",
            n,
            c.ncols()
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(CophikError::NonFinite { context: "covariance matrix" });
    }
    let mean_diag = (0..n).map(|i| c[[i, i]]).sum::<f64>() / n as f64;
    let mut cap = 0.0;
    for alpha in policy.ladder(mean_diag) {
        cap = alpha;
        let mut reg = c.clone();
        for i in 0..n {
            reg[[i, i]] += alpha;
        }
        if let Some(lower) = cholesky_lower(&reg) {
            let log_det = 2.0 * (0..n).map(|i| lower[[i, i]].ln()).sum::<f64>();
            if log_det.is_finite() {
                return Ok(SpdFactorization { lower, alpha, log_det });
            }
        }
    }
    Err(CophikError::NuggetExhausted { cap })
}

/// Gaussian log marginal likelihood of data `y` under mean `mu` and the
/// factorized covariance:
/// -1/2 (y-mu)^T C^{-1} (y-mu) - 1/2 ln|C| - N/2 ln(2 pi).
pub fn log_marginal_likelihood(
    y: &Array1<f64>,
    mu: &Array1<f64>,
    fact: &SpdFactorization,
) -> Result<f64> {
    let n = fact.n();
    if y.len() != n || mu.len() != n {
        return Err(CophikError::DimensionMismatch {
            expected: n,
            got: if y.len() != n { y.len() } else { mu.len() },
        });
    }
    let r = y - mu;
    Ok(-0.5 * fact.quad_form(&r) - 0.5 * fact.log_det() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi
/// rotations. Intended for the small observation covariances used in the
/// error-bound reports.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(CophikError::InvalidArgument("expected square nonempty matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(CophikError::NonFinite { context: "matrix for eigenvalues" });
    }
    let mut m = a.clone();
    let scale = m.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
    let tol = 1e-14 * scale;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(m[[p, q]].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                // stable tangent of the rotation angle
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eig)
}

/// Spectral norm of the inverse of the factorized matrix, 1 / lambda_min
/// of C + alpha*I. Eigenvalues within rounding distance of zero are
/// clamped to that distance, which can only shrink the returned norm.
pub fn inverse_spectral_norm(c: &Array2<f64>, alpha: f64) -> Result<f64> {
    let n = c.nrows();
    let mut reg = c.clone();
    for i in 0..n {
        reg[[i, i]] += alpha;
    }
    let eig = symmetric_eigenvalues(&reg)?;
    let lambda_min = eig[0];
    let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-14 * scale;
    if lambda_min <= -tol {
        return Err(CophikError::Degenerate(format!(
            "regularized covariance has negative smallest eigenvalue {lambda_min:.3e}"
        )));
    }
    Ok(1.0 / lambda_min.max(tol))
}

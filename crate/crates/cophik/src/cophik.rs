//! Two-level CoKriging with an ensemble-informed low-fidelity GP.
//!
//! The high-fidelity process is modeled as rho * Y_L + Y_d: Y_L carries
//! the ensemble prior (mean and covariance from realizations), Y_d is a
//! stationary Gaussian-kernel GP with constant mean that absorbs the
//! discrepancy between data and model. Low- and high-fidelity share one
//! observation location set, which collapses every low-fidelity block of
//! the joint covariance to the same matrix and gives the joint inverse a
//! closed two-block form.
//!
//! Fitting is two-step: first the regression scalar rho and the
//! discrepancy hyperparameters from the likelihood of y_H - rho * mu_L,
//! then the low-fidelity data vector y_L is chosen from the ensemble
//! members (or the prior mean) by the joint log marginal likelihood.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{CophikError, Result};
use crate::grid::{Field, Point};
use crate::kernel::gaussian_correlation;
use crate::kriging::{fit_hyperparameters, OptimizerConfig, SIGMA2_FLOOR};
use crate::linalg::{spd_factorize, NuggetPolicy, SpdFactorization};
use crate::obs::ObservationSet;
use crate::phik::Ensemble;

/// Candidate grid for the regression scalar rho.
#[derive(Debug, Clone)]
pub struct RhoSearchConfig {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for RhoSearchConfig {
    fn default() -> Self {
        RhoSearchConfig { lo: 0.0, hi: 2.0, count: 41 }
    }
}

impl RhoSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count < 1 || !(self.hi > self.lo) {
            return Err(CophikError::InvalidArgument(format!(
                "rho search needs hi > lo and at least one candidate, got {self:?}"
            )));
        }
        if self.lo > 1.0 || self.hi < 1.0 {
            return Err(CophikError::InvalidArgument(
                "rho search interval must contain 1".into(),
            ));
        }
        Ok(())
    }

    pub fn candidates(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.lo + i as f64 * step).collect()
    }

    pub fn step(&self) -> f64 {
        if self.count <= 1 { 0.0 } else { (self.hi - self.lo) / (self.count - 1) as f64 }
    }
}

/// Result of the rho / discrepancy-hyperparameter search.
#[derive(Debug, Clone)]
pub struct DiscrepancyFit {
    pub rho: f64,
    pub lengths: Vec<f64>,
    pub mu_d: f64,
    pub sigma2_d: f64,
    pub log_likelihood: f64,
    /// (rho candidate, optimized discrepancy log-likelihood); NaN when the
    /// fit failed for that candidate.
    pub trace: Vec<(f64, f64)>,
}

/// For each candidate rho, fit an ordinary-Kriging model to
/// y_d = y_H - rho * mu_L(X) and keep the triple with the highest
/// optimized log marginal likelihood; ties go to the smaller rho.
pub fn fit_discrepancy(
    obs_points: &[Point],
    y_h: &Array1<f64>,
    mu_l_at_obs: &Array1<f64>,
    rho_cfg: &RhoSearchConfig,
    opt_cfg: &OptimizerConfig,
    policy: &NuggetPolicy,
) -> Result<DiscrepancyFit> {
    rho_cfg.validate()?;
    if y_h.len() != mu_l_at_obs.len() || y_h.len() != obs_points.len() {
        return Err(CophikError::DimensionMismatch {
            expected: obs_points.len(),
            got: y_h.len(),
        });
    }
    let candidates = rho_cfg.candidates();
    let fits: Vec<Option<(f64, Vec<f64>, f64, f64)>> = candidates
        .par_iter()
        .map(|&rho| {
            let y_d: Vec<f64> = y_h
                .iter()
                .zip(mu_l_at_obs)
                .map(|(yh, ml)| yh - rho * ml)
                .collect();
            let obs = ObservationSet::new(obs_points.to_vec(), y_d).ok()?;
            let model = fit_hyperparameters(&obs, opt_cfg, policy).ok()?;
            Some((
                model.log_likelihood(),
                model.lengths().to_vec(),
                model.mu_hat(),
                model.sigma2_hat(),
            ))
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, fit) in fits.iter().enumerate() {
        if let Some((ll, _, _, _)) = fit {
            if best.is_none() || *ll > fits[best.unwrap()].as_ref().unwrap().0 {
                best = Some(i);
            }
        }
    }
    let best = best.ok_or_else(|| {
        CophikError::OptimizationFailed("discrepancy fit failed for every rho candidate".into())
    })?;
    let (ll, lengths, mu_d, sigma2_d) = fits[best].clone().unwrap();
    Ok(DiscrepancyFit {
        rho: candidates[best],
        lengths,
        mu_d,
        sigma2_d,
        log_likelihood: ll,
        trace: candidates
            .iter()
            .zip(&fits)
            .map(|(&r, f)| (r, f.as_ref().map(|t| t.0).unwrap_or(f64::NAN)))
            .collect(),
    })
}

/// The 2N x 2N joint covariance [[C1, rho C1], [rho C1, rho^2 C1 + C2]].
/// Both location sets coincide, so every low-fidelity block is C1.
pub fn assemble_joint_cov(c1: &Array2<f64>, c2: &Array2<f64>, rho: f64) -> Result<Array2<f64>> {
    let n = c1.nrows();
    if c1.ncols() != n || c2.nrows() != n || c2.ncols() != n {
        return Err(CophikError::DimensionMismatch { expected: n, got: c2.nrows() });
    }
    let mut out = Array2::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = c1[[i, j]];
            out[[i, n + j]] = rho * c1[[i, j]];
            out[[n + i, j]] = rho * c1[[i, j]];
            out[[n + i, n + j]] = rho * rho * c1[[i, j]] + c2[[i, j]];
        }
    }
    Ok(out)
}

/// Apply the closed-form joint inverse
/// [[C1^{-1} + rho^2 C2^{-1}, -rho C2^{-1}], [-rho C2^{-1}, C2^{-1}]]
/// to a stacked residual, using the per-block factorizations.
pub fn block_inverse_apply(
    c1: &SpdFactorization,
    c2: &SpdFactorization,
    rho: f64,
    top: &Array1<f64>,
    bottom: &Array1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = c1.n();
    if c2.n() != n || top.len() != n || bottom.len() != n {
        return Err(CophikError::DimensionMismatch { expected: n, got: top.len() });
    }
    let u = c2.solve(&(bottom - &(top * rho)));
    let out_top = c1.solve(top) - &(&u * rho);
    Ok((out_top, u))
}

/// Joint log marginal likelihood of the stacked residual. The
/// determinant factors as |C1| * |C2| because the Schur complement of C1
/// in the joint matrix is exactly C2.
pub fn joint_log_likelihood(
    c1: &SpdFactorization,
    c2: &SpdFactorization,
    rho: f64,
    resid_top: &Array1<f64>,
    resid_bottom: &Array1<f64>,
) -> Result<f64> {
    let n = c1.n() as f64;
    let (out_top, out_bottom) = block_inverse_apply(c1, c2, rho, resid_top, resid_bottom)?;
    let quad = resid_top.dot(&out_top) + resid_bottom.dot(&out_bottom);
    Ok(-0.5 * quad
        - 0.5 * (c1.log_det() + c2.log_det())
        - n * (2.0 * std::f64::consts::PI).ln())
}

/// Which candidate provided the low-fidelity data vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YlSource {
    Member(usize),
    PriorMean,
}

impl std::fmt::Display for YlSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            YlSource::Member(i) => write!(f, "member:{i}"),
            YlSource::PriorMean => write!(f, "prior-mean"),
        }
    }
}

/// A fitted two-level CoKriging model.
#[derive(Debug, Clone)]
pub struct CophikModel<'a> {
    ens: &'a Ensemble,
    obs_nodes: Vec<usize>,
    obs_points: Vec<Point>,
    y_h: Array1<f64>,
    mu_l_at_obs: Array1<f64>,
    rho: f64,
    d_lengths: Vec<f64>,
    mu_d: f64,
    /// raw discrepancy process variance from the fit (may be zero)
    sigma2_d_raw: f64,
    /// floored variance actually used in C2 and predictions
    sigma2_d: f64,
    c1_fact: SpdFactorization,
    c2_fact: SpdFactorization,
    y_l: Array1<f64>,
    y_l_source: YlSource,
    /// C_joint^{-1} (y_tilde - mu_tilde), stacked halves
    w_top: Array1<f64>,
    w_bottom: Array1<f64>,
    /// decomposition coefficients
    coeff_a: Array1<f64>,
    coeff_b: Array1<f64>,
    coeff_q: Array1<f64>,
    /// member deviations at the observation nodes
    obs_residuals: Array2<f64>,
    /// joint log-likelihood per candidate, members first, prior mean last
    selection_trace: Vec<f64>,
    discrepancy_trace: Vec<(f64, f64)>,
}

impl<'a> CophikModel<'a> {
    /// Full two-step fit: rho grid search plus joint-likelihood selection
    /// of the low-fidelity data vector.
    pub fn fit(
        ens: &'a Ensemble,
        obs: &ObservationSet,
        rho_cfg: &RhoSearchConfig,
        opt_cfg: &OptimizerConfig,
        policy: &NuggetPolicy,
    ) -> Result<Self> {
        let nodes = obs.node_indices(ens.grid())?;
        Self::fit_at_nodes(ens, &nodes, obs.values(), rho_cfg, opt_cfg, policy)
    }

    pub fn fit_at_nodes(
        ens: &'a Ensemble,
        obs_nodes: &[usize],
        values: &[f64],
        rho_cfg: &RhoSearchConfig,
        opt_cfg: &OptimizerConfig,
        policy: &NuggetPolicy,
    ) -> Result<Self> {
        let obs_points: Vec<Point> = obs_nodes.iter().map(|&i| ens.grid().node_point(i)).collect();
        let y_h = Array1::from_vec(values.to_vec());
        let mu_l: Array1<f64> = obs_nodes.iter().map(|&i| ens.mean_at(i)).collect();
        let disc = fit_discrepancy(&obs_points, &y_h, &mu_l, rho_cfg, opt_cfg, policy)?;
        Self::assemble(ens, obs_nodes, values, &disc, None, policy)
    }

    /// Assemble a model from fixed discrepancy parameters. `forced_y_l`
    /// skips the joint-likelihood selection.
    pub fn assemble(
        ens: &'a Ensemble,
        obs_nodes: &[usize],
        values: &[f64],
        disc: &DiscrepancyFit,
        forced_y_l: Option<YlSource>,
        policy: &NuggetPolicy,
    ) -> Result<Self> {
        if obs_nodes.len() != values.len() {
            return Err(CophikError::DimensionMismatch {
                expected: obs_nodes.len(),
                got: values.len(),
            });
        }
        if obs_nodes.is_empty() {
            return Err(CophikError::InvalidArgument("no observations".into()));
        }
        let grid = ens.grid();
        let nn = grid.num_nodes();
        if let Some(&bad) = obs_nodes.iter().find(|&&i| i >= nn) {
            return Err(CophikError::InvalidArgument(format!(
                "observation node index {bad} out of range ({nn} nodes)"
            )));
        }
        if disc.lengths.len() != grid.dim() {
            return Err(CophikError::DimensionMismatch {
                expected: grid.dim(),
                got: disc.lengths.len(),
            });
        }
        let obs_points: Vec<Point> = obs_nodes.iter().map(|&i| grid.node_point(i)).collect();
        let y_h = Array1::from_vec(values.to_vec());
        let mu_l_at_obs: Array1<f64> = obs_nodes.iter().map(|&i| ens.mean_at(i)).collect();
        let rho = disc.rho;
        let mu_d = disc.mu_d;
        let sigma2_d = disc.sigma2_d.max(SIGMA2_FLOOR);

        let c1 = ens.cov_matrix(obs_nodes);
        let c1_fact = spd_factorize(&c1, policy)?;
        let n = obs_nodes.len();
        let mut c2 = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = sigma2_d * gaussian_correlation(&disc.lengths, &obs_points[i], &obs_points[j]);
                c2[[i, j]] = v;
                c2[[j, i]] = v;
            }
        }
        let c2_fact = spd_factorize(&c2, policy)?;

        // mu_H(X) = rho * mu_L(X) + mu_d
        let mu_h: Array1<f64> = mu_l_at_obs.iter().map(|m| rho * m + mu_d).collect();
        let resid_bottom = &y_h - &mu_h;

        // candidate low-fidelity vectors: members first, prior mean last
        let mut candidates: Vec<(YlSource, Array1<f64>)> = (0..ens.size())
            .map(|m| (YlSource::Member(m), ens.member_values(m, obs_nodes)))
            .collect();
        candidates.push((YlSource::PriorMean, mu_l_at_obs.clone()));

        let lls: Vec<f64> = candidates
            .par_iter()
            .map(|(_, y_l)| {
                let resid_top = y_l - &mu_l_at_obs;
                joint_log_likelihood(&c1_fact, &c2_fact, rho, &resid_top, &resid_bottom)
                    .unwrap_or(f64::NEG_INFINITY)
            })
            .collect();

        let (y_l_source, y_l) = match forced_y_l {
            Some(YlSource::Member(m)) => {
                if m >= ens.size() {
                    return Err(CophikError::InvalidArgument(format!(
                        "forced member index {m} out of range"
                    )));
                }
                (YlSource::Member(m), ens.member_values(m, obs_nodes))
            }
            Some(YlSource::PriorMean) => (YlSource::PriorMean, mu_l_at_obs.clone()),
            None => {
                let mut best = 0;
                for (i, ll) in lls.iter().enumerate().skip(1) {
                    if *ll > lls[best] {
                        best = i;
                    }
                }
                if !lls[best].is_finite() {
                    return Err(CophikError::OptimizationFailed(
                        "joint likelihood not finite for any low-fidelity candidate".into(),
                    ));
                }
                candidates[best].clone()
            }
        };

        let resid_top = &y_l - &mu_l_at_obs;
        let (w_top, w_bottom) = block_inverse_apply(&c1_fact, &c2_fact, rho, &resid_top, &resid_bottom)?;

        let coeff_a = c1_fact.solve(&(&y_h - &mu_l_at_obs));
        let coeff_b = c1_fact.solve(&(&y_h - &y_l));
        let q_rhs = &y_h - &(&y_l * rho) - Array1::from_elem(n, mu_d);
        let coeff_q = c2_fact.solve(&q_rhs);

        let mut obs_residuals = Array2::zeros((n, ens.size()));
        for (row, &i) in obs_nodes.iter().enumerate() {
            let mu = ens.mean_at(i);
            for (col, member) in ens.members().iter().enumerate() {
                obs_residuals[[row, col]] = member.value(i) - mu;
            }
        }

        Ok(CophikModel {
            ens,
            obs_nodes: obs_nodes.to_vec(),
            obs_points,
            y_h,
            mu_l_at_obs,
            rho,
            d_lengths: disc.lengths.clone(),
            mu_d,
            sigma2_d_raw: disc.sigma2_d,
            sigma2_d,
            c1_fact,
            c2_fact,
            y_l,
            y_l_source,
            w_top,
            w_bottom,
            coeff_a,
            coeff_b,
            coeff_q,
            obs_residuals,
            selection_trace: lls,
            discrepancy_trace: disc.trace.clone(),
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mu_d(&self) -> f64 {
        self.mu_d
    }

    pub fn sigma2_d(&self) -> f64 {
        self.sigma2_d
    }

    pub fn sigma2_d_raw(&self) -> f64 {
        self.sigma2_d_raw
    }

    pub fn discrepancy_lengths(&self) -> &[f64] {
        &self.d_lengths
    }

    pub fn y_l(&self) -> &Array1<f64> {
        &self.y_l
    }

    pub fn y_l_source(&self) -> YlSource {
        self.y_l_source
    }

    pub fn y_h(&self) -> &Array1<f64> {
        &self.y_h
    }

    pub fn mu_l_at_obs(&self) -> &Array1<f64> {
        &self.mu_l_at_obs
    }

    pub fn observation_nodes(&self) -> &[usize] {
        &self.obs_nodes
    }

    pub fn observation_points(&self) -> &[Point] {
        &self.obs_points
    }

    pub fn ensemble(&self) -> &Ensemble {
        self.ens
    }

    pub fn c1_factorization(&self) -> &SpdFactorization {
        &self.c1_fact
    }

    pub fn c2_factorization(&self) -> &SpdFactorization {
        &self.c2_fact
    }

    /// Joint log-likelihood of every low-fidelity candidate, members
    /// first, prior mean last.
    pub fn selection_trace(&self) -> &[f64] {
        &self.selection_trace
    }

    pub fn discrepancy_trace(&self) -> &[(f64, f64)] {
        &self.discrepancy_trace
    }

    /// Discrepancy kernel k_d between a grid node and observation i.
    fn kd(&self, point: &Point, i: usize) -> f64 {
        self.sigma2_d * gaussian_correlation(&self.d_lengths, point, &self.obs_points[i])
    }

    /// Low-fidelity covariance vector between observations and a node.
    fn cl_vector(&self, node: usize) -> Array1<f64> {
        let mu = self.ens.mean_at(node);
        let scale = 1.0 / (self.ens.size() as f64 - 1.0);
        let n = self.obs_nodes.len();
        let mut c = Array1::zeros(n);
        for row in 0..n {
            let mut acc = 0.0;
            for (col, member) in self.ens.members().iter().enumerate() {
                acc += self.obs_residuals[[row, col]] * (member.value(node) - mu);
            }
            c[row] = acc * scale;
        }
        c
    }

    /// Posterior mean and variance at a grid node; variance clamped at 0.
    pub fn predict_node(&self, node: usize) -> (f64, f64) {
        let point = self.ens.grid().node_point(node);
        let c_l = self.cl_vector(node);
        let n = self.obs_nodes.len();
        let mut c_h = Array1::zeros(n);
        for i in 0..n {
            c_h[i] = self.rho * self.rho * c_l[i] + self.kd(&point, i);
        }
        let mu_h = self.rho * self.ens.mean_at(node) + self.mu_d;
        let mean = mu_h + self.rho * c_l.dot(&self.w_top) + c_h.dot(&self.w_bottom);

        let c_top = &c_l * self.rho;
        let (v_top, v_bottom) =
            block_inverse_apply(&self.c1_fact, &self.c2_fact, self.rho, &c_top, &c_h)
                .expect("block dimensions fixed at fit time");
        let prior = self.rho * self.rho * self.ens.variance_at(node) + self.sigma2_d;
        let var = prior - c_top.dot(&v_top) - c_h.dot(&v_bottom);
        (mean, var.max(0.0))
    }

    /// Prior variance rho^2 sigma_L^2 + sigma_d^2 at a node.
    pub fn prior_variance(&self, node: usize) -> f64 {
        self.rho * self.rho * self.ens.variance_at(node) + self.sigma2_d
    }

    pub fn predict_field(&self) -> (Field, Field) {
        let grid = self.ens.grid();
        let results: Vec<(f64, f64)> = (0..grid.num_nodes())
            .into_par_iter()
            .map(|i| self.predict_node(i))
            .collect();
        let mean = Field::new(grid.clone(), results.iter().map(|r| r.0).collect()).expect("finite");
        let var = Field::new(grid.clone(), results.iter().map(|r| r.1).collect()).expect("finite");
        (mean, var)
    }

    /// The three terms of the posterior-mean split: S1 is rho times the
    /// ensemble-prior posterior on the high-fidelity data, S2 the
    /// low-fidelity data correction, S3 the discrepancy part.
    /// S1 - S2 + S3 equals the posterior mean.
    pub fn posterior_decomposition(&self, node: usize) -> (f64, f64, f64) {
        let point = self.ens.grid().node_point(node);
        let c_l = self.cl_vector(node);
        let s1 = self.rho * (self.ens.mean_at(node) + c_l.dot(&self.coeff_a));
        let s2 = self.rho * c_l.dot(&self.coeff_b);
        let mut s3 = self.mu_d;
        for i in 0..self.obs_nodes.len() {
            s3 += self.coeff_q[i] * self.kd(&point, i);
        }
        (s1, s2, s3)
    }
}

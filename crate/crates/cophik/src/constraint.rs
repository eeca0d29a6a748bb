//! Numerical verification of the linear-constraint error bounds: when
//! every realization satisfies a linear relation L u = g up to a
//! tolerance, the conditioned posterior mean satisfies it up to a
//! computable bound. This module evaluates both sides of the bound for
//! the mean-shifted ensemble learner and for the two-level CoKriging
//! learner.
//!
//! Function norms are discrete RMS over the operator's output nodes;
//! matrix norms are spectral, computed from the full symmetric
//! eigendecomposition of the (small) observation covariances.

use ndarray::{Array1, Array2};

use crate::cophik::CophikModel;
use crate::error::{CophikError, Result};
use crate::grid::{Field, Grid};
use crate::kernel::gaussian_correlation;
use crate::linalg::{inverse_spectral_norm, NuggetPolicy};
use crate::obs::ObservationSet;
use crate::phik::{Ensemble, MeanShift, PhikModel};

/// Discrete linear operators on fields. Difference stencils are written
/// as combinations of value differences, so constant fields map to
/// exactly zero in floating point.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearOperatorSpec {
    /// restriction of the field to a node set
    PointEvaluation { nodes: Vec<usize> },
    /// second-order partial derivative stencil along one axis
    Derivative { axis: usize },
    /// sum of second differences over all axes
    Laplacian,
}

impl LinearOperatorSpec {
    pub fn name(&self) -> String {
        match self {
            LinearOperatorSpec::PointEvaluation { nodes } => format!("point-eval[{}]", nodes.len()),
            LinearOperatorSpec::Derivative { axis } => format!("d/dx{axis}"),
            LinearOperatorSpec::Laplacian => "laplacian".to_string(),
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match self {
            LinearOperatorSpec::PointEvaluation { nodes } => {
                if nodes.is_empty() {
                    return Err(CophikError::InvalidArgument("empty evaluation node set".into()));
                }
                let nn = grid.num_nodes();
                if let Some(&bad) = nodes.iter().find(|&&n| n >= nn) {
                    return Err(CophikError::InvalidArgument(format!(
                        "evaluation node {bad} out of range"
                    )));
                }
                Ok(())
            }
            LinearOperatorSpec::Derivative { axis } => {
                if *axis >= grid.dim() {
                    return Err(CophikError::InvalidArgument(format!(
                        "axis {axis} out of range for a {}-d grid",
                        grid.dim()
                    )));
                }
                if grid.axes()[*axis].nodes < 3 {
                    return Err(CophikError::InvalidArgument(
                        "derivative stencil needs at least 3 nodes along the axis".into(),
                    ));
                }
                Ok(())
            }
            LinearOperatorSpec::Laplacian => {
                if grid.axes().iter().any(|a| a.nodes < 4) {
                    return Err(CophikError::InvalidArgument(
                        "second-difference boundary stencil needs at least 4 nodes per axis".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn output_len(&self, grid: &Grid) -> usize {
        match self {
            LinearOperatorSpec::PointEvaluation { nodes } => nodes.len(),
            _ => grid.num_nodes(),
        }
    }

    /// Apply the operator; output lives on the node set for point
    /// evaluation and on the full grid otherwise.
    pub fn apply(&self, f: &Field) -> Result<Vec<f64>> {
        let grid = f.grid();
        self.validate(grid)?;
        match self {
            LinearOperatorSpec::PointEvaluation { nodes } => {
                Ok(nodes.iter().map(|&n| f.value(n)).collect())
            }
            LinearOperatorSpec::Derivative { axis } => Ok(derivative_values(f, *axis)),
            LinearOperatorSpec::Laplacian => {
                let mut out = vec![0.0; grid.num_nodes()];
                for axis in 0..grid.dim() {
                    for (acc, v) in out.iter_mut().zip(second_difference_values(f, axis)) {
                        *acc += v;
                    }
                }
                Ok(out)
            }
        }
    }
}

fn axis_stride(grid: &Grid, axis: usize) -> usize {
    grid.axes()[axis + 1..].iter().map(|a| a.nodes).product()
}

fn derivative_values(f: &Field, axis: usize) -> Vec<f64> {
    let grid = f.grid();
    let n_axis = grid.axes()[axis].nodes;
    let h = grid.axes()[axis].spacing();
    let stride = axis_stride(grid, axis);
    let v = f.values();
    (0..grid.num_nodes())
        .map(|node| {
            let i = grid.node_multi_index(node)[axis];
            if i == 0 {
                // (-3 f0 + 4 f1 - f2) / 2h, written in differences
                (4.0 * (v[node + stride] - v[node]) - (v[node + 2 * stride] - v[node])) / (2.0 * h)
            } else if i == n_axis - 1 {
                (-4.0 * (v[node - stride] - v[node]) + (v[node - 2 * stride] - v[node])) / (2.0 * h)
            } else {
                (v[node + stride] - v[node - stride]) / (2.0 * h)
            }
        })
        .collect()
}

fn second_difference_values(f: &Field, axis: usize) -> Vec<f64> {
    let grid = f.grid();
    let n_axis = grid.axes()[axis].nodes;
    let h = grid.axes()[axis].spacing();
    let stride = axis_stride(grid, axis);
    let v = f.values();
    let h2 = h * h;
    (0..grid.num_nodes())
        .map(|node| {
            let i = grid.node_multi_index(node)[axis];
            if i == 0 {
                // (2 f0 - 5 f1 + 4 f2 - f3) / h^2 in difference form
                (2.0 * (v[node] - v[node + stride]) - 3.0 * (v[node + stride] - v[node + 2 * stride])
                    + (v[node + 2 * stride] - v[node + 3 * stride]))
                    / h2
            } else if i == n_axis - 1 {
                (2.0 * (v[node] - v[node - stride]) - 3.0 * (v[node - stride] - v[node - 2 * stride])
                    + (v[node - 2 * stride] - v[node - 3 * stride]))
                    / h2
            } else {
                ((v[node + stride] - v[node]) - (v[node] - v[node - stride])) / h2
            }
        })
        .collect()
}

/// Discrete RMS over the operator output.
pub fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Per-realization right-hand sides of the constraint, with the
/// tolerance either supplied or estimated as max_m ||L Y^m - g^m||.
#[derive(Debug, Clone)]
pub struct ConstraintData {
    pub g_members: Vec<Vec<f64>>,
    pub epsilon: Option<f64>,
}

impl ConstraintData {
    /// Exact-by-construction constraint data: g^m = L Y^m.
    pub fn from_operator(ens: &Ensemble, op: &LinearOperatorSpec) -> Result<Self> {
        let g_members = ens
            .members()
            .iter()
            .map(|f| op.apply(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConstraintData { g_members, epsilon: None })
    }

    pub fn validate(&self, ens: &Ensemble, op: &LinearOperatorSpec) -> Result<()> {
        if self.g_members.len() != ens.size() {
            return Err(CophikError::DimensionMismatch {
                expected: ens.size(),
                got: self.g_members.len(),
            });
        }
        let len = op.output_len(ens.grid());
        if let Some(bad) = self.g_members.iter().find(|g| g.len() != len) {
            return Err(CophikError::DimensionMismatch { expected: len, got: bad.len() });
        }
        Ok(())
    }

    /// Mean of the right-hand sides over realizations, entrywise.
    pub fn g_mean(&self) -> Vec<f64> {
        let m = self.g_members.len() as f64;
        let len = self.g_members[0].len();
        let mut out = vec![0.0; len];
        for g in &self.g_members {
            for (acc, v) in out.iter_mut().zip(g) {
                *acc += v / m;
            }
        }
        out
    }

    /// Sample deviation of the right-hand sides around their mean:
    /// sqrt( 1/(M-1) sum_m ||g^m - g_mean||^2 ), RMS inside.
    pub fn g_spread(&self) -> f64 {
        let mean = self.g_mean();
        let m = self.g_members.len() as f64;
        let total: f64 = self
            .g_members
            .iter()
            .map(|g| {
                let diff: Vec<f64> = g.iter().zip(&mean).map(|(a, b)| a - b).collect();
                let r = rms(&diff);
                r * r
            })
            .sum();
        (total / (m - 1.0)).sqrt()
    }

    /// The tolerance: supplied, or the tightest value consistent with the
    /// realizations.
    pub fn epsilon(&self, ens: &Ensemble, op: &LinearOperatorSpec) -> Result<(f64, bool)> {
        if let Some(e) = self.epsilon {
            return Ok((e, false));
        }
        let mut worst = 0.0f64;
        for (member, g) in ens.members().iter().zip(&self.g_members) {
            let lu = op.apply(member)?;
            let diff: Vec<f64> = lu.iter().zip(g).map(|(a, b)| a - b).collect();
            worst = worst.max(rms(&diff));
        }
        Ok((worst, true))
    }
}

/// Norm ingredients shared by both bounds: the per-observation ensemble
/// standard deviations, the spectral norm of the inverse covariance, and
/// the Euclidean norm of the conditioning residual.
pub fn operator_norm_terms(
    ens: &Ensemble,
    obs_nodes: &[usize],
    cov: &Array2<f64>,
    alpha: f64,
    residual: &Array1<f64>,
) -> Result<(Vec<f64>, f64, f64)> {
    let sigma_list: Vec<f64> = obs_nodes.iter().map(|&i| ens.std_field().value(i)).collect();
    let inv_norm = inverse_spectral_norm(cov, alpha)?;
    let residual_norm = residual.dot(residual).sqrt();
    Ok((sigma_list, inv_norm, residual_norm))
}

/// Both sides of a constraint bound, with the right-hand side split into
/// its terms.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub operator: String,
    pub lhs: f64,
    pub eps_term: f64,
    /// (1 - rho) ||g_mean||; zero for the single-level bound. Evaluated
    /// verbatim, so it goes negative for rho > 1.
    pub mean_gap_term: f64,
    pub spread_term: f64,
    /// norm of the operator applied to the constant mean shift (single
    /// level) or the constant discrepancy mean (two level)
    pub operator_mean_term: f64,
    /// discrepancy-kernel column term; zero for the single-level bound
    pub kd_term: f64,
    pub rhs: f64,
    pub pass: bool,
    pub rho: Option<f64>,
    pub rho_above_one: bool,
    pub epsilon: f64,
    pub epsilon_estimated: bool,
}

impl BoundReport {
    fn finish(mut self) -> Self {
        self.rhs = self.eps_term + self.mean_gap_term + self.spread_term
            + self.operator_mean_term
            + self.kd_term;
        self.pass = self.lhs <= self.rhs;
        self
    }
}

fn constant_field_norm(grid: &Grid, value: f64, op: &LinearOperatorSpec) -> Result<f64> {
    let f = Field::new(grid.clone(), vec![value; grid.num_nodes()])?;
    Ok(rms(&op.apply(&f)?))
}

fn bracket(epsilon: f64, m: usize, g_spread: f64) -> f64 {
    2.0 * epsilon * (m as f64 / (m as f64 - 1.0)).sqrt() + g_spread
}

/// Bound check for the mean-shifted ensemble learner. `delta_mu` is the
/// shift actually applied (zero reduces to the plain learner's bound).
pub fn theorem1_bound(
    ens: &Ensemble,
    obs: &ObservationSet,
    delta_mu: f64,
    op: &LinearOperatorSpec,
    cdata: &ConstraintData,
    policy: &NuggetPolicy,
) -> Result<BoundReport> {
    op.validate(ens.grid())?;
    cdata.validate(ens, op)?;
    let obs_nodes = obs.node_indices(ens.grid())?;
    let model =
        PhikModel::fit_at_nodes(ens, &obs_nodes, obs.values(), policy, MeanShift::Fixed(delta_mu))?;

    let (mean_field, _) = model.predict_field();
    let g_mean = cdata.g_mean();
    let l_mean = op.apply(&mean_field)?;
    let diff: Vec<f64> = l_mean.iter().zip(&g_mean).map(|(a, b)| a - b).collect();
    let lhs = rms(&diff);

    let (epsilon, epsilon_estimated) = cdata.epsilon(ens, op)?;
    let cov = ens.cov_matrix(&obs_nodes);
    let y = Array1::from_vec(obs.values().to_vec());
    let mu: Array1<f64> = obs_nodes.iter().map(|&i| ens.mean_at(i)).collect();
    let residual = &y - &mu - Array1::from_elem(y.len(), delta_mu);
    let (sigma_list, inv_norm, residual_norm) =
        operator_norm_terms(ens, &obs_nodes, &cov, model.factorization().alpha(), &residual)?;
    let sigma_sum: f64 = sigma_list.iter().sum();

    let report = BoundReport {
        operator: op.name(),
        lhs,
        eps_term: epsilon,
        mean_gap_term: 0.0,
        spread_term: bracket(epsilon, ens.size(), cdata.g_spread())
            * inv_norm
            * residual_norm
            * sigma_sum,
        operator_mean_term: constant_field_norm(ens.grid(), delta_mu, op)?,
        kd_term: 0.0,
        rhs: 0.0,
        pass: false,
        rho: None,
        rho_above_one: false,
        epsilon,
        epsilon_estimated,
    };
    Ok(report.finish())
}

/// Bound check for the two-level CoKriging learner.
pub fn theorem2_bound(
    model: &CophikModel<'_>,
    op: &LinearOperatorSpec,
    cdata: &ConstraintData,
) -> Result<BoundReport> {
    let ens = model.ensemble();
    let grid = ens.grid();
    op.validate(grid)?;
    cdata.validate(ens, op)?;

    let (mean_field, _) = model.predict_field();
    let g_mean = cdata.g_mean();
    let l_mean = op.apply(&mean_field)?;
    let diff: Vec<f64> = l_mean.iter().zip(&g_mean).map(|(a, b)| a - b).collect();
    let lhs = rms(&diff);

    let (epsilon, epsilon_estimated) = cdata.epsilon(ens, op)?;
    let rho = model.rho();
    let obs_nodes = model.observation_nodes();

    let c1 = ens.cov_matrix(obs_nodes);
    let low_residual = model.y_l() - model.mu_l_at_obs();
    let (sigma_list, c1_inv_norm, low_residual_norm) = operator_norm_terms(
        ens,
        obs_nodes,
        &c1,
        model.c1_factorization().alpha(),
        &low_residual,
    )?;
    let sigma_sum: f64 = sigma_list.iter().sum();

    // discrepancy block and its kernel columns under the same operator
    let n = obs_nodes.len();
    let points = model.observation_points();
    let mut c2 = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            c2[[i, j]] =
                model.sigma2_d() * gaussian_correlation(model.discrepancy_lengths(), &points[i], &points[j]);
        }
    }
    let c2_inv_norm = inverse_spectral_norm(&c2, model.c2_factorization().alpha())?;
    let q_residual = model.y_h() - &(model.y_l() * rho) - Array1::from_elem(n, model.mu_d());
    let q_residual_norm = q_residual.dot(&q_residual).sqrt();
    let mut kd_column_sum = 0.0;
    for i in 0..n {
        let column = Field::from_fn(grid.clone(), |p| {
            model.sigma2_d() * gaussian_correlation(model.discrepancy_lengths(), p, &points[i])
        })?;
        kd_column_sum += rms(&op.apply(&column)?);
    }

    let g_mean_norm = rms(&g_mean);
    let report = BoundReport {
        operator: op.name(),
        lhs,
        eps_term: rho * epsilon,
        mean_gap_term: (1.0 - rho) * g_mean_norm,
        spread_term: rho
            * bracket(epsilon, ens.size(), cdata.g_spread())
            * c1_inv_norm
            * low_residual_norm
            * sigma_sum,
        operator_mean_term: constant_field_norm(grid, model.mu_d(), op)?,
        kd_term: c2_inv_norm * q_residual_norm * kd_column_sum,
        rhs: 0.0,
        pass: false,
        rho: Some(rho),
        rho_above_one: rho > 1.0,
        epsilon,
        epsilon_estimated,
    };
    Ok(report.finish())
}
